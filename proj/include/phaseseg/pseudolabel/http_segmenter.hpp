#pragma once

#include "phaseseg/core/manifest.hpp"
#include "phaseseg/pseudolabel/segmenter.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <string>
#include <thread>

namespace phaseseg::pseudo {

/// Run-length encoding over the row-major pixel order. Counts alternate
/// between runs of 0 and runs of 1, starting with a (possibly empty) 0 run.
nlohmann::json mask_to_rle(const BinaryMask& mask);
BinaryMask mask_from_rle(const nlohmann::json& j);

nlohmann::json points_to_json(std::span<const PointPrompt> points);
std::vector<PointPrompt> points_from_json(const nlohmann::json& points, const nlohmann::json& labels);

/// Client for a remote segmenter speaking JSON over HTTP.
///
///   POST /segment   {video_id, frame_index, image, points, labels}
///                   -> {mask}
///   POST /propagate {video_id, frame_index, image, points, labels,
///                    seed_mask?, target_frames, target_images}
///                   -> {masks}
///
/// `image` fields are file paths resolved through the manifest; points are
/// [x, y] pairs and labels 1 (positive) or 0 (negative); masks are RLE.
class HttpSegmenter final : public PromptableSegmenter {
 public:
  HttpSegmenter(std::string base_url, const DatasetManifest& manifest, int timeout_seconds = 60);

  BinaryMask segment_frame(const FrameRef& frame, std::span<const PointPrompt> points) override;
  std::vector<BinaryMask> propagate(const FrameRef& seed, std::span<const PointPrompt> points,
                                    const BinaryMask* seed_mask, std::span<const int> targets) override;
  std::string describe() const override { return "http:" + base_url_; }

 private:
  nlohmann::json post(const std::string& path, const nlohmann::json& body, const FrameRef& frame);
  std::string image_path(const std::string& video, int frame) const;

  std::string base_url_;
  const DatasetManifest& manifest_;
  int timeout_;
};

/// Serves any PromptableSegmenter over the protocol above; used to exercise
/// the client in-process. Requests are handled one at a time.
class SegmenterServer {
 public:
  SegmenterServer(PromptableSegmenter& segmenter, const std::string& host = "127.0.0.1");
  ~SegmenterServer();
  SegmenterServer(const SegmenterServer&) = delete;
  SegmenterServer& operator=(const SegmenterServer&) = delete;

  int port() const noexcept { return port_; }
  std::string url() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string host_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace phaseseg::pseudo

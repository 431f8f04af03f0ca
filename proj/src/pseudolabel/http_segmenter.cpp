#include "phaseseg/pseudolabel/http_segmenter.hpp"

#include "phaseseg/error.hpp"

#include <httplib.h>

#include <mutex>
#include <optional>

namespace phaseseg::pseudo {

nlohmann::json mask_to_rle(const BinaryMask& mask) {
  std::vector<std::size_t> counts;
  bool current = false;
  std::size_t run = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != current) {
      counts.push_back(run);
      run = 0;
      current = !current;
    }
    ++run;
  }
  counts.push_back(run);
  return {{"height", mask.height()}, {"width", mask.width()}, {"counts", counts}};
}

BinaryMask mask_from_rle(const nlohmann::json& j) {
  try {
    const int h = j.at("height").get<int>();
    const int w = j.at("width").get<int>();
    if (h < 0 || w < 0) fail(ErrorKind::parse, "negative mask dimensions");
    BinaryMask m(h, w);
    std::size_t pos = 0;
    bool value = false;
    for (const auto& c : j.at("counts")) {
      const auto n = c.get<std::size_t>();
      if (n > m.size() - pos) fail(ErrorKind::parse, "run-length counts exceed the mask size");
      for (std::size_t k = 0; k < n; ++k) m.set_flat(pos + k, value);
      pos += n;
      value = !value;
    }
    if (pos != m.size()) fail(ErrorKind::parse, "run-length counts do not cover the mask");
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("bad RLE mask: ") + e.what());
  }
}

nlohmann::json points_to_json(std::span<const PointPrompt> points) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points) pts.push_back({p.x, p.y});
  return pts;
}

std::vector<PointPrompt> points_from_json(const nlohmann::json& points, const nlohmann::json& labels) {
  if (!points.is_array() || !labels.is_array() || points.size() != labels.size()) {
    fail(ErrorKind::parse, "points and labels must be arrays of equal length");
  }
  std::vector<PointPrompt> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!p.is_array() || p.size() != 2) fail(ErrorKind::parse, "each point must be [x, y]");
    out.push_back({p[0].get<int>(), p[1].get<int>(),
                   labels[i].get<int>() != 0 ? PointLabel::positive : PointLabel::negative});
  }
  return out;
}

namespace {

nlohmann::json labels_json(std::span<const PointPrompt> points) {
  nlohmann::json l = nlohmann::json::array();
  for (const auto& p : points) l.push_back(p.label == PointLabel::positive ? 1 : 0);
  return l;
}

}  // namespace

HttpSegmenter::HttpSegmenter(std::string base_url, const DatasetManifest& manifest, int timeout_seconds)
    : base_url_(std::move(base_url)), manifest_(manifest), timeout_(timeout_seconds) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

std::string HttpSegmenter::image_path(const std::string& video, int frame) const {
  const FrameRecord* f = manifest_.find_frame(video, frame);
  return f ? manifest_.resolve(f->image_path).string() : std::string();
}

nlohmann::json HttpSegmenter::post(const std::string& path, const nlohmann::json& body, const FrameRef& frame) {
  httplib::Client client(base_url_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  auto res = client.Post(path, body.dump(), "application/json");
  if (!res) {
    fail(ErrorKind::segmenter, "request to " + base_url_ + path + " for " + to_string(frame) +
                                   " failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    fail(ErrorKind::segmenter, base_url_ + path + " answered " + std::to_string(res->status) + " for " +
                                   to_string(frame) + ": " + res->body);
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::segmenter, "malformed response from " + base_url_ + path + ": " + e.what());
  }
}

BinaryMask HttpSegmenter::segment_frame(const FrameRef& frame, std::span<const PointPrompt> points) {
  const nlohmann::json body{{"video_id", frame.video_id},
                            {"frame_index", frame.frame_index},
                            {"image", image_path(frame.video_id, frame.frame_index)},
                            {"points", points_to_json(points)},
                            {"labels", labels_json(points)}};
  const auto res = post("/segment", body, frame);
  if (!res.contains("mask")) fail(ErrorKind::segmenter, "response for " + to_string(frame) + " lacks 'mask'");
  return mask_from_rle(res["mask"]);
}

std::vector<BinaryMask> HttpSegmenter::propagate(const FrameRef& seed, std::span<const PointPrompt> points,
                                                 const BinaryMask* seed_mask, std::span<const int> targets) {
  nlohmann::json body{{"video_id", seed.video_id},
                      {"frame_index", seed.frame_index},
                      {"image", image_path(seed.video_id, seed.frame_index)},
                      {"points", points_to_json(points)},
                      {"labels", labels_json(points)},
                      {"target_frames", std::vector<int>(targets.begin(), targets.end())}};
  nlohmann::json images = nlohmann::json::array();
  for (int t : targets) images.push_back(image_path(seed.video_id, t));
  body["target_images"] = std::move(images);
  if (seed_mask) body["seed_mask"] = mask_to_rle(*seed_mask);
  const auto res = post("/propagate", body, seed);
  if (!res.contains("masks") || !res["masks"].is_array()) {
    fail(ErrorKind::segmenter, "response for " + to_string(seed) + " lacks 'masks'");
  }
  std::vector<BinaryMask> out;
  for (const auto& m : res["masks"]) out.push_back(mask_from_rle(m));
  return out;
}

struct SegmenterServer::Impl {
  httplib::Server server;
  std::mutex mutex;
};

SegmenterServer::SegmenterServer(PromptableSegmenter& segmenter, const std::string& host)
    : impl_(std::make_unique<Impl>()), host_(host) {
  auto handle = [this, &segmenter](const httplib::Request& req, httplib::Response& res, bool propagate) {
    try {
      const auto body = nlohmann::json::parse(req.body);
      const FrameRef frame{body.at("video_id").get<std::string>(), body.at("frame_index").get<int>()};
      const auto points = points_from_json(body.at("points"), body.at("labels"));
      std::lock_guard lock(impl_->mutex);
      nlohmann::json out;
      if (propagate) {
        const auto targets = body.at("target_frames").get<std::vector<int>>();
        std::optional<BinaryMask> seed_mask;
        if (body.contains("seed_mask")) seed_mask = mask_from_rle(body["seed_mask"]);
        out["masks"] = nlohmann::json::array();
        for (const auto& m : segmenter.propagate(frame, points, seed_mask ? &*seed_mask : nullptr, targets))
          out["masks"].push_back(mask_to_rle(m));
      } else {
        out["mask"] = mask_to_rle(segmenter.segment_frame(frame, points));
      }
      res.set_content(out.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(e.what(), "text/plain");
    }
  };
  impl_->server.Post("/segment", [handle](const httplib::Request& q, httplib::Response& r) { handle(q, r, false); });
  impl_->server.Post("/propagate", [handle](const httplib::Request& q, httplib::Response& r) { handle(q, r, true); });
  port_ = impl_->server.bind_to_any_port(host_);
  if (port_ <= 0) fail(ErrorKind::io, "cannot bind a segmenter server on " + host_);
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

SegmenterServer::~SegmenterServer() { stop(); }

void SegmenterServer::stop() {
  if (thread_.joinable()) {
    impl_->server.stop();
    thread_.join();
  }
}

std::string SegmenterServer::url() const { return "http://" + host_ + ":" + std::to_string(port_); }

}  // namespace phaseseg::pseudo

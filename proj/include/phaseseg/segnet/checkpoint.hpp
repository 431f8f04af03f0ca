#pragma once

#include "phaseseg/segnet/adamw.hpp"
#include "phaseseg/segnet/unet.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace phaseseg::segnet {

struct NamedArray {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;
};

/// On disk: "PSEGCKPT", u32 version, u64 header length, JSON header, then the
/// float32 payload of every array in header order (little endian).
struct Checkpoint {
  NetworkConfig config;
  std::uint64_t tool_fingerprint = 0;
  std::uint64_t phase_fingerprint = 0;
  std::uint64_t seed = 0;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
};

/// Written to a temporary sibling and renamed into place.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Snapshot of model weights and, when given, optimizer moments.
Checkpoint make_checkpoint(UNet<float>& model, std::uint64_t tool_fp, std::uint64_t phase_fp, std::uint64_t seed,
                           const AdamW* optimizer = nullptr);

/// Copies weights into the model. Throws fingerprint_mismatch unless the
/// checkpoint was written for the same network configuration.
void load_weights(UNet<float>& model, const Checkpoint& ckpt);
/// Restores moments and the step counter; the optimizer must wrap model.parameters().
void load_optimizer(AdamW& optimizer, UNet<float>& model, const Checkpoint& ckpt);

std::string fingerprint_hex(std::uint64_t fp);

}  // namespace phaseseg::segnet

#include "phaseseg/segnet/checkpoint.hpp"

#include "phaseseg/error.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace phaseseg::segnet {

namespace {

constexpr char kMagic[8] = {'P', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::uint64_t parse_hex(const std::string& s) {
  std::size_t used = 0;
  const std::uint64_t v = std::stoull(s, &used, 16);
  if (used != s.size()) throw std::invalid_argument(s);
  return v;
}

const std::string kAdamM = "adam.m.";
const std::string kAdamV = "adam.v.";

}  // namespace

std::string fingerprint_hex(std::uint64_t fp) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header{
      {"network_config", network_config_to_json(ckpt.config)},
      {"config_fingerprint", fingerprint_hex(ckpt.config.fingerprint())},
      {"tool_fingerprint", fingerprint_hex(ckpt.tool_fingerprint)},
      {"phase_fingerprint", fingerprint_hex(ckpt.phase_fingerprint)},
      {"seed", ckpt.seed},
      {"meta", ckpt.meta},
      {"arrays", nlohmann::json::array()},
  };
  for (const auto& a : ckpt.arrays)
    header["arrays"].push_back({{"name", a.name}, {"shape", a.shape}, {"count", a.values.size()}});
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + tmp.string());
    const std::uint64_t len = text.size();
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& a : ckpt.arrays)
      out.write(reinterpret_cast<const char*>(a.values.data()),
                static_cast<std::streamsize>(a.values.size() * sizeof(float)));
    if (!out) fail(ErrorKind::io, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorKind::parse, path.string() + " is not a checkpoint");
  }
  if (version != kVersion) fail(ErrorKind::parse, "unsupported checkpoint version " + std::to_string(version));
  if (len > (1u << 30)) fail(ErrorKind::parse, "checkpoint header too large");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) fail(ErrorKind::parse, "truncated checkpoint header in " + path.string());

  Checkpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(text);
    ckpt.config = network_config_from_json(header.at("network_config"));
    if (parse_hex(header.at("config_fingerprint").get<std::string>()) != ckpt.config.fingerprint()) {
      fail(ErrorKind::fingerprint_mismatch, "stored config fingerprint does not match the stored config");
    }
    ckpt.tool_fingerprint = parse_hex(header.at("tool_fingerprint").get<std::string>());
    ckpt.phase_fingerprint = parse_hex(header.at("phase_fingerprint").get<std::string>());
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.meta = header.at("meta");
    for (const auto& a : header.at("arrays")) {
      NamedArray arr;
      arr.name = a.at("name").get<std::string>();
      arr.shape = a.at("shape").get<std::vector<int>>();
      arr.values.resize(a.at("count").get<std::size_t>());
      ckpt.arrays.push_back(std::move(arr));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, "checkpoint header: " + std::string(e.what()));
  } catch (const std::invalid_argument&) {
    fail(ErrorKind::parse, "checkpoint header: malformed fingerprint");
  }
  for (auto& a : ckpt.arrays) {
    in.read(reinterpret_cast<char*>(a.values.data()), static_cast<std::streamsize>(a.values.size() * sizeof(float)));
    if (!in) fail(ErrorKind::parse, "truncated checkpoint payload in " + path.string());
  }
  return ckpt;
}

Checkpoint make_checkpoint(UNet<float>& model, std::uint64_t tool_fp, std::uint64_t phase_fp, std::uint64_t seed,
                           const AdamW* optimizer) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.tool_fingerprint = tool_fp;
  ckpt.phase_fingerprint = phase_fp;
  ckpt.seed = seed;
  const auto params = model.parameters();
  for (auto* p : params) ckpt.arrays.push_back({p->name, p->shape, {p->value.begin(), p->value.end()}});
  if (optimizer) {
    const AdamW& opt = *optimizer;
    for (std::size_t k = 0; k < params.size(); ++k) {
      ckpt.arrays.push_back({kAdamM + params[k]->name, params[k]->shape, opt.first_moments()[k]});
      ckpt.arrays.push_back({kAdamV + params[k]->name, params[k]->shape, opt.second_moments()[k]});
    }
    ckpt.meta["adam_steps"] = opt.steps();
  }
  return ckpt;
}

void load_weights(UNet<float>& model, const Checkpoint& ckpt) {
  if (ckpt.config.fingerprint() != model.config().fingerprint()) {
    fail(ErrorKind::fingerprint_mismatch, "checkpoint config fingerprint " + fingerprint_hex(ckpt.config.fingerprint()) +
                                              " does not match model " + fingerprint_hex(model.config().fingerprint()));
  }
  for (auto* p : model.parameters()) {
    const NamedArray* a = ckpt.find(p->name);
    if (!a) fail(ErrorKind::not_found, "checkpoint lacks parameter " + p->name);
    if (a->shape != p->shape || a->values.size() != p->size()) {
      fail(ErrorKind::shape_mismatch, "checkpoint parameter " + p->name + " has the wrong shape");
    }
    p->value.assign(a->values.begin(), a->values.end());
  }
}

void load_optimizer(AdamW& optimizer, UNet<float>& model, const Checkpoint& ckpt) {
  const auto params = model.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const NamedArray* m = ckpt.find(kAdamM + params[k]->name);
    const NamedArray* v = ckpt.find(kAdamV + params[k]->name);
    if (!m || !v) fail(ErrorKind::not_found, "checkpoint lacks optimizer state for " + params[k]->name);
    optimizer.first_moments().at(k) = m->values;
    optimizer.second_moments().at(k) = v->values;
  }
  optimizer.set_steps(ckpt.meta.value("adam_steps", std::int64_t{0}));
}

}  // namespace phaseseg::segnet

#include "phaseseg/cli/cli.hpp"

#include "phaseseg/core/cooccurrence.hpp"
#include "phaseseg/core/image_io.hpp"
#include "phaseseg/core/manifest.hpp"
#include "phaseseg/core/splits.hpp"
#include "phaseseg/error.hpp"
#include "phaseseg/maskops/binary_mask.hpp"
#include "phaseseg/maskops/denoise.hpp"
#include "phaseseg/maskops/metrics.hpp"
#include "phaseseg/pseudolabel/engine.hpp"
#include "phaseseg/pseudolabel/http_segmenter.hpp"
#include "phaseseg/pseudolabel/oracle.hpp"
#include "phaseseg/rng.hpp"
#include "phaseseg/synth/world.hpp"
#include "phaseseg/trainer/grid.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

namespace phaseseg::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::vector<std::string> kCommands{"synthgen", "split", "cooccur", "denoise",
                                         "pseudo",   "train", "eval",    "predict"};

fs::path output_path(const std::string& given, const std::string& leaf) {
  if (!given.empty()) return given;
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) return fs::path(root) / leaf;
  fail(ErrorKind::invalid_argument, "--out is required when " + std::string(kOutputRootEnv) + " is not set");
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::parse, path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << j.dump(2) << '\n';
    if (!out) fail(ErrorKind::io, "cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

/// `<dir>/.lock` holding the owner's pid; a lock left by a dead process is taken over.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    for (int attempt = 0; attempt < 2; ++attempt) {
      const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
      if (fd >= 0) {
        const std::string pid = std::to_string(::getpid()) + "\n";
        const bool ok = ::write(fd, pid.data(), pid.size()) == static_cast<ssize_t>(pid.size());
        ::close(fd);
        if (!ok) fail(ErrorKind::io, "cannot write " + path_.string());
        held_ = true;
        return;
      }
      if (errno != EEXIST) fail(ErrorKind::io, "cannot create " + path_.string());
      long pid = 0;
      {
        std::ifstream in(path_);
        in >> pid;
      }
      if (pid > 0 && (::kill(static_cast<pid_t>(pid), 0) == 0 || errno == EPERM)) {
        fail(ErrorKind::io, dir.string() + " is locked by running process " + std::to_string(pid));
      }
      std::error_code ec;
      fs::remove(path_, ec);
    }
    fail(ErrorKind::io, "cannot acquire " + path_.string());
  }
  ~DirLock() {
    if (held_) {
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
  bool held_ = false;
};

/// Keys are long option names; a section named after the command may hold
/// them instead. Options given on the command line keep their value.
void apply_config(CLI::App* sub, const fs::path& file) {
  json doc = read_json_file(file);
  if (!doc.is_object()) fail(ErrorKind::parse, file.string() + ": config must be a JSON object");
  const std::string name = sub->get_name();
  if (doc.contains(name) && doc[name].is_object()) doc = doc[name];
  for (const auto& [key, value] : doc.items()) {
    if (value.is_object()) {
      if (std::find(kCommands.begin(), kCommands.end(), key) != kCommands.end()) continue;
      fail(ErrorKind::validation, file.string() + ": unknown config section '" + key + "' for " + name);
    }
    CLI::Option* opt = key == "config" ? nullptr : sub->get_option_no_throw("--" + key);
    if (!opt) fail(ErrorKind::validation, file.string() + ": unknown config key '" + key + "' for " + name);
    if (opt->count() > 0) continue;
    auto str = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_array()) {
      for (const auto& e : value) opt->add_result(str(e));
    } else {
      opt->add_result(str(value));
    }
    try {
      opt->run_callback();
    } catch (const CLI::Error& e) {
      fail(ErrorKind::validation, file.string() + ": bad value for '" + key + "': " + e.what());
    }
  }
}

/// Every option value the command ran with, in config-file form.
json resolved_config(const CLI::App* sub) {
  json j = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const auto& names = opt->get_lnames();
    if (names.empty()) continue;
    const std::string& key = names.front();
    if (key == "help" || key == "config" || key == "json" || key == "resume") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      j[key] = (r.size() == 1 && opt->get_expected_max() <= 1) ? json(r.front()) : json(r);
    } else if (!opt->get_default_str().empty()) {
      j[key] = opt->get_default_str();
    } else if (opt->get_expected_max() == 0) {
      j[key] = "false";
    }
  }
  return {{sub->get_name(), j}};
}

std::string config_fingerprint(const json& resolved) { return segnet::fingerprint_hex(fnv1a64(resolved.dump())); }

/// Runs `work` unless `dir/run.json` records a finished run with the same
/// config and --resume was given; either way the stored result is returned.
json idempotent_run(const fs::path& dir, const json& resolved, bool resume, std::ostream& err,
                    const std::function<json()>& work) {
  const fs::path run_file = dir / "run.json";
  const std::string fp = config_fingerprint(resolved);
  if (resume && fs::exists(run_file)) {
    const json prev = read_json_file(run_file);
    if (prev.value("fingerprint", "") == fp && prev.value("status", "") == "complete") {
      err << "resume: " << dir.string() << " is up to date\n";
      return prev.at("result");
    }
  }
  json result = work();
  write_json_file(run_file, {{"config", resolved}, {"fingerprint", fp}, {"status", "complete"}, {"result", result}});
  return result;
}

std::vector<int> parse_int_list(const std::vector<std::string>& items) {
  std::vector<int> out;
  for (const auto& s : items) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stoi(s, &pos));
      if (pos != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      fail(ErrorKind::invalid_argument, "expected an integer, got '" + s + "'");
    }
  }
  return out;
}

std::string frame_file(int frame) {
  std::ostringstream s;
  s << std::setw(6) << std::setfill('0') << frame << ".png";
  return s.str();
}

// ---------------------------------------------------------------- synthgen

struct SynthArgs {
  std::string out;
  synth::WorldConfig world;
};

json cmd_synthgen(const SynthArgs& a, const json& resolved, bool resume, std::ostream& err) {
  a.world.validate();
  const fs::path dir = output_path(a.out, "synth");
  DirLock lock(dir);
  return idempotent_run(dir, resolved, resume, err, [&] {
    const DatasetManifest m = synth::generate_dataset(a.world, dir);
    std::size_t human = 0;
    for (const auto& f : m.frames) human += f.provenance == Provenance::human ? 1 : 0;
    return json{{"dataset", fs::absolute(dir).string()},
                {"manifest", fs::absolute(dir / kManifestFile).string()},
                {"videos", m.video_ids().size()},
                {"frames", m.frames.size()},
                {"human_frames", human},
                {"tools", m.tools.num_tools()},
                {"phases", m.phases.num_phases()},
                {"world", synth::world_config_to_json(a.world)}};
  });
}

// ---------------------------------------------------------------- split

struct SplitArgs {
  std::string manifest;
  std::string out;
  int folds = 5;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
};

json cmd_split(const SplitArgs& a) {
  const DatasetManifest m = load_manifest(a.manifest);
  const SplitPlan plan = generate_splits(m, a.folds, a.val_fraction, a.seed);
  validate_split(plan, m.video_ids());
  const fs::path out = output_path(a.out, "split.json");
  save_split(plan, out);
  json sizes = json::array();
  for (const auto& f : plan.folds) sizes.push_back(f.test_videos.size());
  return {{"split", fs::absolute(out).string()}, {"test_sizes", sizes}, {"plan", split_to_json(plan)}};
}

// ---------------------------------------------------------------- cooccur

struct CooccurArgs {
  std::string manifest;
  std::string out;
  std::string norm = "none";
};

json cmd_cooccur(const CooccurArgs& a) {
  const DatasetManifest m = load_manifest(a.manifest);
  CooccurrenceNorm norm = CooccurrenceNorm::none;
  if (a.norm == "by_phase") norm = CooccurrenceNorm::by_phase;
  else if (a.norm != "none") fail(ErrorKind::invalid_argument, "--norm must be none or by_phase");
  const CooccurrenceMatrix c = cooccurrence_matrix(m, norm);
  json rows = json::array();
  for (int p = 0; p < c.num_phases; ++p) {
    json row = json::array();
    for (int t = 1; t <= c.num_tools; ++t) row.push_back(c.at(p, t));
    rows.push_back(row);
  }
  json phases = json::array();
  for (const auto& p : m.phases.phases) phases.push_back(p.name);
  json tools = json::array();
  for (const auto& t : m.tools.classes) tools.push_back(t.name);
  json result{{"norm", a.norm}, {"phases", phases}, {"tools", tools}, {"values", rows}};
  if (!a.out.empty()) write_json_file(a.out, result);
  return result;
}

// ---------------------------------------------------------------- denoise

struct DenoiseArgs {
  std::string manifest;
  std::string out;
  DenoiseOptions options;
  int connectivity = 8;
};

LabelMap denoise_label_map(const LabelMap& labels, int num_tools, const DenoiseOptions& options) {
  struct Cleaned {
    ClassId c;
    BinaryMask mask;
    std::size_t area;
  };
  std::vector<Cleaned> masks;
  for (ClassId c = 1; c <= num_tools; ++c) {
    const BinaryMask raw = BinaryMask::from_labels(labels, c);
    if (!raw.any()) continue;
    BinaryMask m = denoise_mask(raw, options);
    const std::size_t area = m.count();
    masks.push_back({c, std::move(m), area});
  }
  // Larger masks are painted first so smaller ones win overlaps; ties go to the lower id.
  std::sort(masks.begin(), masks.end(), [](const Cleaned& a, const Cleaned& b) {
    return a.area != b.area ? a.area > b.area : a.c > b.c;
  });
  LabelMap out(labels.width(), labels.height());
  for (const auto& m : masks)
    for (std::size_t i = 0; i < m.mask.size(); ++i)
      if (m.mask[i]) out.data()[i] = static_cast<std::uint8_t>(m.c);
  return out;
}

json cmd_denoise(DenoiseArgs a, const json& resolved, bool resume, std::ostream& err) {
  if (a.connectivity != 4 && a.connectivity != 8) fail(ErrorKind::invalid_argument, "--connectivity must be 4 or 8");
  a.options.connectivity = a.connectivity == 4 ? Connectivity::four : Connectivity::eight;
  const DatasetManifest m = load_manifest(a.manifest);
  const fs::path dir = output_path(a.out, "denoised");
  DirLock lock(dir);
  return idempotent_run(dir, resolved, resume, err, [&] {
    DatasetManifest out = m;
    std::size_t frames = 0;
    std::size_t changed = 0;
    for (auto& f : out.frames) {
      f.image_path = fs::absolute(m.resolve(f.image_path));
      if (!f.label_map_path) continue;
      const LabelMap raw = read_label_map(m.resolve(*f.label_map_path));
      const LabelMap clean = denoise_label_map(raw, m.tools.num_tools(), a.options);
      for (std::size_t i = 0; i < raw.data().size(); ++i) changed += raw.data()[i] != clean.data()[i] ? 1 : 0;
      const fs::path p = dir / "labels" / f.video_id / frame_file(f.frame_index);
      fs::create_directories(p.parent_path());
      write_label_map(p, clean);
      f.label_map_path = fs::absolute(p);
      ++frames;
    }
    out.root = dir;
    save_manifest(out, dir);
    return json{{"manifest", fs::absolute(dir / kManifestFile).string()},
                {"frames", frames},
                {"changed_pixels", changed}};
  });
}

// ---------------------------------------------------------------- pseudo

struct PseudoArgs {
  std::string manifest;
  std::string out;
  std::string segmenter = "oracle:perfect";
  pseudo::PseudoOptions options;
  int dilate_radius = 2;
  int timeout = 60;
};

json cmd_pseudo(const PseudoArgs& a, const json& resolved, bool resume, std::ostream& err) {
  const DatasetManifest m = load_manifest(a.manifest);
  const fs::path dir = output_path(a.out, "pseudo");
  DirLock lock(dir);
  return idempotent_run(dir, resolved, resume, err, [&] {
    std::unique_ptr<synth::World> world;
    std::unique_ptr<pseudo::PromptableSegmenter> seg;
    if (a.segmenter.rfind("oracle:", 0) == 0) {
      const auto fidelity = pseudo::fidelity_from_string(a.segmenter.substr(7));
      world = std::make_unique<synth::World>(synth::load_world(m.root));
      seg = std::make_unique<pseudo::OracleSegmenter>(*world, fidelity, derive_seed(a.options.seed, "oracle"),
                                                       a.dilate_radius);
    } else if (a.segmenter.rfind("http://", 0) == 0 || a.segmenter.rfind("https://", 0) == 0) {
      seg = std::make_unique<pseudo::HttpSegmenter>(a.segmenter, m, a.timeout);
    } else {
      fail(ErrorKind::invalid_argument,
           "--segmenter must be oracle:perfect|dilated|jittered or an http URL, got '" + a.segmenter + "'");
    }
    const auto run = pseudo::run_pseudo_pipeline(m, *seg, a.options, dir);
    std::size_t anchors = 0;
    std::size_t pseudo_frames = 0;
    for (const auto& f : m.frames) anchors += f.provenance == Provenance::human ? 1 : 0;
    for (const auto& f : run.manifest.frames) pseudo_frames += f.provenance == Provenance::pseudo ? 1 : 0;
    std::map<std::string, std::size_t> reasons;
    for (const auto& e : run.exclusions) ++reasons[e.reason];
    return json{{"manifest", fs::absolute(dir / kManifestFile).string()},
                {"segmenter", seg->describe()},
                {"anchors", anchors},
                {"prompt_sets", run.prompt_sets.size()},
                {"records", run.records.size()},
                {"exclusions", run.exclusions.size()},
                {"exclusion_reasons", reasons},
                {"pseudo_frames", pseudo_frames}};
  });
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string manifest;
  std::string split;
  std::string out;
  std::string grid_id = "default";
  std::vector<std::string> variants{"v0"};
  std::vector<std::string> folds;
  int n_folds = 5;
  double val_fraction = 0.2;
  std::string aggregation = "per_frame";
  bool quiet = false;
  trainer::TrainConfig config;
};

json cmd_train(TrainArgs a, const json& resolved, bool resume, std::ostream& err) {
  a.config.aggregation = aggregation_from_string(a.aggregation);
  a.config.validate();
  std::vector<trainer::TrainConfig> grid;
  for (const auto& v : a.variants) {
    trainer::TrainConfig c = a.config;
    c.variant = trainer::variant_from_string(v);
    grid.push_back(c);
  }
  const DatasetManifest m = load_manifest(a.manifest);
  const fs::path grid_dir = output_path(a.out, "runs") / a.grid_id;
  DirLock lock(grid_dir);

  SplitPlan plan;
  if (!a.split.empty()) {
    plan = load_split(a.split);
  } else {
    plan = generate_splits(m, a.n_folds, a.val_fraction, a.config.seed);
  }
  save_split(plan, grid_dir / "split.json");
  write_json_file(grid_dir / "run_config.json", resolved);

  trainer::GridOptions opt;
  opt.folds = parse_int_list(a.folds);
  opt.resume = resume;
  opt.log = a.quiet ? nullptr : &err;
  const auto result = trainer::cross_validate(m, plan, grid, grid_dir, opt);

  json reports = json::array();
  for (const auto& r : result.reports) reports.push_back(trainer::eval_report_to_json(r));
  json failures = json::array();
  for (const auto& f : result.failures) {
    failures.push_back({{"variant", std::string(trainer::to_string(f.variant))},
                        {"fold_id", f.fold_id},
                        {"kind", f.kind},
                        {"message", f.message}});
  }
  json out{{"grid_dir", fs::absolute(grid_dir).string()},
           {"reports", reports},
           {"failures", failures},
           {"table", trainer::render_table(result.summaries)}};
  if (!result.failures.empty()) {
    const auto& f = result.failures.front();
    fail(ErrorKind::validation, std::to_string(result.failures.size()) + " grid cell(s) failed; first " +
                                    std::string(trainer::to_string(f.variant)) + " fold " +
                                    std::to_string(f.fold_id) + ": " + f.kind + ": " + f.message);
  }
  return out;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string run;
  std::string manifest;
  std::string out;
  int num_tools = 0;
  std::string aggregation = "per_frame";
};

std::vector<fs::path> png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorKind::not_found, dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(fs::relative(e.path(), dir));
  std::sort(out.begin(), out.end());
  return out;
}

json cmd_eval(const EvalArgs& a) {
  if (!a.run.empty()) {
    if (!a.pred.empty() || !a.gt.empty()) fail(ErrorKind::invalid_argument, "--run excludes --pred/--gt");
    const auto reports = trainer::collect_reports(a.run);
    if (reports.empty()) fail(ErrorKind::not_found, "no report.json below " + a.run);
    trainer::write_summary(a.run, reports);
    json rs = json::array();
    for (const auto& r : reports) rs.push_back(trainer::eval_report_to_json(r));
    json sums = json::array();
    const auto summaries = trainer::summarize(reports);
    for (const auto& s : summaries) sums.push_back(trainer::variant_summary_to_json(s));
    json out{{"reports", rs}, {"summaries", sums}, {"table", trainer::render_table(summaries)}};
    if (!a.out.empty()) write_json_file(a.out, out);
    return out;
  }
  if (a.pred.empty() || a.gt.empty()) fail(ErrorKind::invalid_argument, "eval needs --run or both --pred and --gt");
  const auto files = png_files(a.gt);
  if (files.empty()) fail(ErrorKind::not_found, "no label maps in " + a.gt);
  std::vector<LabelMap> preds;
  std::vector<LabelMap> gts;
  int max_label = 0;
  for (const auto& rel : files) {
    const fs::path p = fs::path(a.pred) / rel;
    if (!fs::exists(p)) fail(ErrorKind::not_found, "prediction missing for " + rel.string());
    gts.push_back(read_label_map(fs::path(a.gt) / rel));
    preds.push_back(read_label_map(p));
    for (auto v : gts.back().data()) max_label = std::max<int>(max_label, v);
    for (auto v : preds.back().data()) max_label = std::max<int>(max_label, v);
  }
  ToolTaxonomy tools;
  if (!a.manifest.empty()) {
    tools = load_manifest(a.manifest).tools;
  } else {
    const int n = a.num_tools > 0 ? a.num_tools : std::max(1, max_label);
    std::vector<std::string> names;
    for (int i = 1; i <= n; ++i) names.push_back("tool_" + std::to_string(i));
    tools = ToolTaxonomy::from_names(names);
  }
  const ClassMetrics m = evaluate_label_maps(preds, gts, tools, aggregation_from_string(a.aggregation));
  json out{{"frames", files.size()},
           {"metrics", class_metrics_to_json(m)},
           {"mean_iou", m.mean_iou},
           {"mean_dsc", m.mean_dsc}};
  if (!a.out.empty()) write_json_file(a.out, out);
  return out;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  std::string checkpoint;
  std::string image;
  std::string manifest;
  std::string out;
  std::vector<std::string> videos;
  int phase = kNullPhase;
  std::string phase_source = "auto";
  std::string predicted_phase_dir = "predicted_phases";
};

json cmd_predict(const PredictArgs& a, const json& resolved, bool resume, std::ostream& err) {
  const segnet::Checkpoint ckpt = segnet::read_checkpoint(a.checkpoint);
  trainer::Predictor predictor(ckpt);
  if (!a.image.empty()) {
    if (!a.manifest.empty()) fail(ErrorKind::invalid_argument, "--image excludes --manifest");
    if (a.out.empty()) fail(ErrorKind::invalid_argument, "--out is required with --image");
    const Image img = trainer::to_working(read_image(a.image), ckpt.config.working_resolution);
    const LabelMap labels = predictor.predict(img, a.phase);
    if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
    write_label_map(a.out, labels);
    std::map<int, std::size_t> hist;
    for (auto v : labels.data()) ++hist[v];
    json counts = json::object();
    for (const auto& [c, n] : hist) counts[std::to_string(c)] = n;
    return {{"output", fs::absolute(a.out).string()}, {"phase", a.phase}, {"class_pixels", counts}};
  }
  if (a.manifest.empty()) fail(ErrorKind::invalid_argument, "predict needs --image or --manifest");
  const DatasetManifest m = load_manifest(a.manifest);
  if (ckpt.tool_fingerprint != m.tools.fingerprint() || ckpt.phase_fingerprint != m.phases.fingerprint()) {
    fail(ErrorKind::fingerprint_mismatch, "checkpoint taxonomies do not match the manifest");
  }
  trainer::PhaseSource source = trainer::PhaseSource::none;
  if (a.phase_source == "auto") {
    if (ckpt.meta.contains("train_config")) {
      source = trainer::train_config_from_json(ckpt.meta["train_config"]).spec().phase_source;
    }
  } else {
    source = trainer::phase_source_from_string(a.phase_source);
  }
  std::vector<std::string> videos = a.videos.empty() ? m.video_ids() : a.videos;
  trainer::TrackMap predicted;
  if (source == trainer::PhaseSource::predicted_file) {
    fs::path d = a.predicted_phase_dir;
    if (d.is_relative()) d = m.root / d;
    predicted = trainer::load_predicted_tracks(d, videos);
  }
  const trainer::PhaseResolver phases(source, m, predicted);
  const fs::path dir = output_path(a.out, "predictions");
  DirLock lock(dir);
  return idempotent_run(dir, resolved, resume, err, [&] {
    std::size_t n = 0;
    for (const auto& f : m.frames) {
      if (std::find(videos.begin(), videos.end(), f.video_id) == videos.end()) continue;
      const Image img = trainer::to_working(read_image(m.resolve(f.image_path)), ckpt.config.working_resolution);
      const fs::path p = dir / f.video_id / frame_file(f.frame_index);
      fs::create_directories(p.parent_path());
      write_label_map(p, predictor.predict(img, phases(f)));
      ++n;
    }
    return json{{"output", fs::absolute(dir).string()},
                {"frames", n},
                {"phase_source", std::string(trainer::to_string(source))}};
  });
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

void print_human(const std::string& cmd, const json& r, std::ostream& out) {
  if (cmd == "train" || (cmd == "eval" && r.contains("table"))) {
    out << r.at("table").get<std::string>();
    return;
  }
  if (cmd == "eval") {
    out << "frames " << r.at("frames") << "  mean IoU " << r.at("mean_iou") << "  mean DSC " << r.at("mean_dsc")
        << '\n';
    return;
  }
  if (cmd == "cooccur") {
    const auto& tools = r.at("tools");
    out << "phase";
    for (const auto& t : tools) out << '\t' << t.get<std::string>();
    out << '\n';
    for (std::size_t p = 0; p < r.at("values").size(); ++p) {
      out << r.at("phases")[p].get<std::string>();
      for (const auto& v : r.at("values")[p]) out << '\t' << v.get<double>();
      out << '\n';
    }
    return;
  }
  for (const auto& [k, v] : r.items()) {
    if (v.is_object() || (v.is_array() && v.size() > 8)) continue;
    out << k << ": " << (v.is_string() ? v.get<std::string>() : v.dump()) << '\n';
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app("Phase-conditioned surgical tool segmentation", "phaseseg");
  app.require_subcommand(1, 1);
  app.option_defaults()->always_capture_default();

  bool as_json = false;
  bool resume = false;
  std::string config_file;
  auto common = [&](CLI::App* sub, bool resumable) {
    sub->add_option("--config", config_file, "JSON file of option values; command-line flags win");
    sub->add_flag("--json", as_json, "Print the result as JSON");
    if (resumable) sub->add_flag("--resume", resume, "Reuse finished work with the same configuration");
  };

  SynthArgs sy;
  auto* synth_cmd = app.add_subcommand("synthgen", "Generate a synthetic surgical dataset");
  common(synth_cmd, true);
  synth_cmd->add_option("--out", sy.out, "Output dataset directory");
  synth_cmd->add_option("--videos", sy.world.videos);
  synth_cmd->add_option("--frames", sy.world.frames, "Native frames per video");
  synth_cmd->add_option("--tools", sy.world.tools);
  synth_cmd->add_option("--phases", sy.world.phases);
  synth_cmd->add_option("--seed", sy.world.seed);
  synth_cmd->add_option("--width", sy.world.working.width, "Working width");
  synth_cmd->add_option("--height", sy.world.working.height, "Working height");
  synth_cmd->add_option("--downscale", sy.world.downscale, "Native / working size ratio");
  synth_cmd->add_option("--stride", sy.world.frame_stride, "Native frames between emitted frames");
  synth_cmd->add_option("--frames-per-phase", sy.world.frames_per_phase);
  synth_cmd->add_option("--label-every", sy.world.label_every, "Every n-th emitted frame is human-labeled");
  synth_cmd->add_option("--label-margin", sy.world.label_margin, "Minimum distance of labeled frames to a phase boundary");
  synth_cmd->add_flag("--ambiguous-pair", sy.world.ambiguous_pair, "Classes 1 and 2 look identical and alternate by phase");
  synth_cmd->add_option("--rare-tool-boost", sy.world.rare_tool_boost);
  synth_cmd->add_option("--phase-jitter", sy.world.phase_length_jitter);
  synth_cmd->add_option("--predicted-accuracy", sy.world.predicted_accuracy);
  synth_cmd->add_option("--predicted-block", sy.world.predicted_block);

  SplitArgs sp;
  auto* split_cmd = app.add_subcommand("split", "Video-level k-fold split");
  common(split_cmd, false);
  split_cmd->add_option("--manifest", sp.manifest)->required();
  split_cmd->add_option("--out", sp.out, "Output split JSON file");
  split_cmd->add_option("--folds", sp.folds);
  split_cmd->add_option("--val-fraction", sp.val_fraction);
  split_cmd->add_option("--seed", sp.seed);

  CooccurArgs co;
  auto* co_cmd = app.add_subcommand("cooccur", "Phase x tool co-occurrence counts");
  common(co_cmd, false);
  co_cmd->add_option("--manifest", co.manifest)->required();
  co_cmd->add_option("--out", co.out, "Optional JSON output file");
  co_cmd->add_option("--norm", co.norm, "none or by_phase");

  DenoiseArgs dn;
  auto* dn_cmd = app.add_subcommand("denoise", "Clean every label map of a manifest");
  common(dn_cmd, true);
  dn_cmd->add_option("--manifest", dn.manifest)->required();
  dn_cmd->add_option("--out", dn.out, "Output directory");
  dn_cmd->add_option("--min-area", dn.options.min_area);
  dn_cmd->add_option("--min-fraction", dn.options.min_fraction);
  dn_cmd->add_option("--blur-kernel", dn.options.blur_kernel);
  dn_cmd->add_option("--blur-threshold", dn.options.blur_threshold);
  dn_cmd->add_option("--morph-radius", dn.options.morph_radius);
  dn_cmd->add_option("--connectivity", dn.connectivity, "4 or 8");

  PseudoArgs ps;
  auto* ps_cmd = app.add_subcommand("pseudo", "Propagate pseudo-labels from human-labeled anchors");
  common(ps_cmd, true);
  ps_cmd->add_option("--manifest", ps.manifest)->required();
  ps_cmd->add_option("--out", ps.out, "Output directory");
  ps_cmd->add_option("--segmenter", ps.segmenter, "oracle:perfect|oracle:dilated|oracle:jittered or http://host:port");
  ps_cmd->add_option("--stride", ps.options.stride);
  ps_cmd->add_option("--horizon", ps.options.horizon);
  ps_cmd->add_option("--max-rounds", ps.options.max_rounds);
  ps_cmd->add_option("--target-iou", ps.options.target_iou);
  ps_cmd->add_option("--min-source-iou", ps.options.min_source_iou);
  ps_cmd->add_flag("--seed-from-mask", ps.options.seed_from_mask, "Seed propagation with the refined mask");
  ps_cmd->add_option("--seed", ps.options.seed);
  ps_cmd->add_option("--dilate-radius", ps.dilate_radius, "Oracle dilation radius");
  ps_cmd->add_option("--timeout", ps.timeout, "HTTP timeout in seconds");

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "Cross-validate variants over a split");
  common(tr_cmd, true);
  tr_cmd->add_option("--manifest", tr.manifest)->required();
  tr_cmd->add_option("--split", tr.split, "Split JSON; generated from --n-folds/--val-fraction/--seed when absent");
  tr_cmd->add_option("--out", tr.out, "Runs root directory");
  tr_cmd->add_option("--grid-id", tr.grid_id);
  tr_cmd->add_option("--variant", tr.variants, "v0..v7, repeatable or comma separated")->delimiter(',');
  tr_cmd->add_option("--folds", tr.folds, "Fold ids to run (default all)")->delimiter(',');
  tr_cmd->add_option("--n-folds", tr.n_folds);
  tr_cmd->add_option("--val-fraction", tr.val_fraction);
  tr_cmd->add_option("--lr", tr.config.lr);
  tr_cmd->add_option("--weight-decay", tr.config.weight_decay);
  tr_cmd->add_option("--batch-size", tr.config.batch_size);
  tr_cmd->add_option("--max-epochs", tr.config.max_epochs);
  tr_cmd->add_option("--patience", tr.config.patience);
  tr_cmd->add_option("--seed", tr.config.seed);
  tr_cmd->add_flag("--class-weights", tr.config.class_weights, "Inverse-frequency class weights");
  tr_cmd->add_option("--base-width", tr.config.base_width);
  tr_cmd->add_option("--num-stages", tr.config.num_stages);
  tr_cmd->add_flag("--condition-bottleneck", tr.config.condition_bottleneck);
  tr_cmd->add_option("--aggregation", tr.aggregation, "per_frame or pooled");
  tr_cmd->add_flag("--stage1-pseudo-only", tr.config.stage1_pseudo_only);
  tr_cmd->add_flag("--augment", tr.config.augment, "Horizontal flips and small rotations");
  tr_cmd->add_option("--predicted-phase-dir", tr.config.predicted_phase_dir);
  tr_cmd->add_flag("--quiet", tr.quiet, "No per-epoch progress on stderr");

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "Score label maps or summarize a run directory");
  common(ev_cmd, false);
  ev_cmd->add_option("--pred", ev.pred, "Directory of predicted label maps");
  ev_cmd->add_option("--gt", ev.gt, "Directory of reference label maps");
  ev_cmd->add_option("--run", ev.run, "Grid directory with report.json files");
  ev_cmd->add_option("--manifest", ev.manifest, "Manifest supplying the tool taxonomy");
  ev_cmd->add_option("--num-tools", ev.num_tools);
  ev_cmd->add_option("--aggregation", ev.aggregation, "per_frame or pooled");
  ev_cmd->add_option("--out", ev.out, "Optional JSON output file");

  PredictArgs pr;
  auto* pr_cmd = app.add_subcommand("predict", "Label frames with a trained checkpoint");
  common(pr_cmd, true);
  pr_cmd->add_option("--checkpoint", pr.checkpoint)->required();
  pr_cmd->add_option("--image", pr.image, "Single image to label");
  pr_cmd->add_option("--phase", pr.phase, "Phase id for --image (-1 for none)");
  pr_cmd->add_option("--manifest", pr.manifest, "Label every frame of a manifest");
  pr_cmd->add_option("--videos", pr.videos)->delimiter(',');
  pr_cmd->add_option("--phase-source", pr.phase_source, "auto, none, ground_truth or predicted_file");
  pr_cmd->add_option("--predicted-phase-dir", pr.predicted_phase_dir);
  pr_cmd->add_option("--out", pr.out, "Output PNG (--image) or directory (--manifest)");

  std::string cmd;
  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
      err << "error: usage: " << one_line(e.what()) << '\n';
      return 2;
    }
    CLI::App* sub = app.get_subcommands().front();
    cmd = sub->get_name();
    if (!config_file.empty()) apply_config(sub, config_file);
    const json resolved = resolved_config(sub);

    json result;
    if (cmd == "synthgen") result = cmd_synthgen(sy, resolved, resume, err);
    else if (cmd == "split") result = cmd_split(sp);
    else if (cmd == "cooccur") result = cmd_cooccur(co);
    else if (cmd == "denoise") result = cmd_denoise(dn, resolved, resume, err);
    else if (cmd == "pseudo") result = cmd_pseudo(ps, resolved, resume, err);
    else if (cmd == "train") result = cmd_train(tr, resolved, resume, err);
    else if (cmd == "eval") result = cmd_eval(ev);
    else result = cmd_predict(pr, resolved, resume, err);

    if (as_json) {
      result["command"] = cmd;
      out << result.dump(2) << '\n';
    } else {
      print_human(cmd, result, out);
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << to_string(e.kind()) << ": " << cmd << ": " << one_line(e.what()) << '\n';
  } catch (const fs::filesystem_error& e) {
    err << "error: io: " << cmd << ": " << one_line(e.what()) << '\n';
  } catch (const json::exception& e) {
    err << "error: parse: " << cmd << ": " << one_line(e.what()) << '\n';
  } catch (const std::exception& e) {
    err << "error: internal: " << cmd << ": " << one_line(e.what()) << '\n';
  }
  return 1;
}

}  // namespace phaseseg::cli

#include "phaseseg/trainer/train.hpp"

#include "phaseseg/error.hpp"
#include "phaseseg/rng.hpp"
#include "phaseseg/segnet/adamw.hpp"
#include "phaseseg/segnet/loss.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

namespace phaseseg::trainer {

namespace fs = std::filesystem;
using segnet::Checkpoint;
using segnet::NetworkConfig;
using segnet::Tensor;
using segnet::UNet;
using json = nlohmann::json;

std::string_view to_string(Stage s) noexcept {
  switch (s) {
    case Stage::supervised: return "supervised";
    case Stage::pseudo_pretrain: return "pseudo_pretrain";
    case Stage::finetune: return "finetune";
  }
  return "supervised";
}

Stage stage_from_string(std::string_view s) {
  if (s == "supervised") return Stage::supervised;
  if (s == "pseudo_pretrain") return Stage::pseudo_pretrain;
  if (s == "finetune") return Stage::finetune;
  fail(ErrorKind::parse, "unknown stage '" + std::string(s) + "'");
}

json checkpoint_meta_to_json(const CheckpointMeta& m) {
  return {{"epoch", m.epoch},
          {"val_mean_dsc", m.val_mean_dsc},
          {"path", m.path.string()},
          {"stage", std::string(to_string(m.stage))},
          {"completed", m.completed}};
}

CheckpointMeta checkpoint_meta_from_json(const json& j) {
  try {
    CheckpointMeta m;
    m.epoch = j.at("epoch").get<int>();
    m.val_mean_dsc = j.at("val_mean_dsc").get<double>();
    m.path = j.at("path").get<std::string>();
    m.stage = stage_from_string(j.at("stage").get<std::string>());
    m.completed = j.value("completed", true);
    return m;
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("checkpoint meta: ") + e.what());
  }
}

json epoch_record_to_json(const EpochRecord& r) {
  return {{"stage", std::string(to_string(r.stage))},
          {"epoch", r.epoch},
          {"train_loss", r.train_loss},
          {"val_mean_dsc", r.val_mean_dsc},
          {"val_mean_iou", r.val_mean_iou},
          {"improved", r.improved}};
}

EpochRecord epoch_record_from_json(const json& j) {
  try {
    EpochRecord r;
    r.stage = stage_from_string(j.at("stage").get<std::string>());
    r.epoch = j.at("epoch").get<int>();
    r.train_loss = j.at("train_loss").get<double>();
    r.val_mean_dsc = j.at("val_mean_dsc").get<double>();
    r.val_mean_iou = j.at("val_mean_iou").get<double>();
    r.improved = j.at("improved").get<bool>();
    return r;
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("curve record: ") + e.what());
  }
}

std::vector<EpochRecord> read_curve(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot read " + path.string());
  std::vector<EpochRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(epoch_record_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      fail(ErrorKind::parse, path.string() + ": " + e.what());
    }
  }
  return out;
}

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
  if (patience < 1) fail(ErrorKind::invalid_argument, "patience must be >= 1");
}

bool EarlyStopping::observe(int epoch, double score) {
  if (best_epoch_ == 0 || score > best_score_) {
    best_epoch_ = epoch;
    best_score_ = score;
    return true;
  }
  return false;
}

void EarlyStopping::restore(int best_epoch, double best_score) noexcept {
  best_epoch_ = best_epoch;
  best_score_ = best_score;
}

NetworkConfig network_config_for(const TrainConfig& config, const DatasetManifest& manifest) {
  NetworkConfig n;
  n.in_channels = 3;
  n.num_classes = manifest.tools.num_labels();
  n.base_width = config.base_width;
  n.num_stages = config.num_stages;
  n.pcd_mode = config.spec().pcd_mode;
  n.num_phases = manifest.phases.num_phases();
  n.working_resolution = manifest.working_resolution;
  n.condition_bottleneck = config.condition_bottleneck;
  n.validate();
  return n;
}

namespace {

Tensor<float> batch_tensor(const std::vector<const Image*>& images) {
  const Image& first = *images.front();
  Tensor<float> x(static_cast<int>(images.size()), 3, first.height(), first.width());
  for (std::size_t i = 0; i < images.size(); ++i) segnet::image_to_tensor(*images[i], x, static_cast<int>(i));
  return x;
}

}  // namespace

std::vector<LabelMap> predict_samples(UNet<float>& net, const std::vector<Sample>& samples, int batch_size) {
  std::vector<LabelMap> out;
  out.reserve(samples.size());
  for (std::size_t b = 0; b < samples.size(); b += static_cast<std::size_t>(batch_size)) {
    const std::size_t e = std::min(samples.size(), b + static_cast<std::size_t>(batch_size));
    std::vector<const Image*> imgs;
    std::vector<PhaseId> phases;
    for (std::size_t i = b; i < e; ++i) {
      imgs.push_back(&samples[i].image);
      phases.push_back(samples[i].phase);
    }
    const Tensor<float> scores = net.forward(batch_tensor(imgs), phases, false);
    for (int i = 0; i < scores.n; ++i) out.push_back(segnet::argmax_labels(scores, i));
  }
  return out;
}

ClassMetrics evaluate_model(UNet<float>& net, const std::vector<Sample>& samples, int num_tools,
                            Aggregation aggregation, int batch_size) {
  MetricAccumulator acc(num_tools, aggregation);
  const auto preds = predict_samples(net, samples, batch_size);
  for (std::size_t i = 0; i < samples.size(); ++i) acc.add(preds[i], samples[i].labels);
  return acc.finalize();
}

namespace {

struct StageFiles {
  fs::path curve, best, last, done;
  explicit StageFiles(const fs::path& dir)
      : curve(dir / "curve.jsonl"), best(dir / "best.ckpt"), last(dir / "last.ckpt"), done(dir / "done.json") {}
};

std::string stage_fingerprint(const StageInput& input, const TrainConfig& config, const NetworkConfig& net) {
  json j{{"config", train_config_to_json(config)},
         {"network", segnet::network_config_to_json(net)},
         {"stage", std::string(to_string(input.stage))}};
  auto ids = [](const std::vector<Sample>& v) {
    json a = json::array();
    for (const auto& s : v) a.push_back({s.video_id, s.frame_index, std::string(to_string(s.provenance)), s.phase});
    return a;
  };
  j["train"] = ids(*input.train);
  j["val"] = ids(*input.val);
  if (input.init) {
    std::uint64_t h = 0;
    for (const auto& a : input.init->arrays)
      h ^= fnv1a64(std::string_view(reinterpret_cast<const char*>(a.values.data()), a.values.size() * sizeof(float))) +
           0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    j["init"] = segnet::fingerprint_hex(h);
  }
  return segnet::fingerprint_hex(fnv1a64(j.dump()));
}

void write_json(const fs::path& path, const json& j) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) fail(ErrorKind::io, "cannot write " + tmp.string());
    out << j.dump(2) << '\n';
    if (!out) fail(ErrorKind::io, "cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::parse, path.string() + ": " + e.what());
  }
}

/// Keeps curve lines up to and including `last_epoch`.
void truncate_curve(const fs::path& path, int last_epoch) {
  if (!fs::exists(path)) return;
  std::vector<EpochRecord> keep;
  for (const auto& r : read_curve(path))
    if (r.epoch <= last_epoch) keep.push_back(r);
  std::ofstream out(path, std::ios::trunc);
  for (const auto& r : keep) out << epoch_record_to_json(r).dump() << '\n';
}

std::vector<double> class_weights_for(const std::vector<Sample>& train, int num_labels) {
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(num_labels), 0);
  for (const auto& s : train)
    for (auto v : s.labels.data()) ++counts[v];
  return segnet::inverse_frequency_weights(counts);
}

}  // namespace

CheckpointMeta run_stage(const StageInput& input, const TrainConfig& config, const DatasetManifest& manifest,
                         const fs::path& dir, const TrainOptions& options) {
  config.validate();
  if (!input.train || input.train->empty()) {
    fail(ErrorKind::validation, "empty train set for stage " + std::string(to_string(input.stage)));
  }
  const std::vector<Sample>& train = *input.train;
  const bool val_from_train = !input.val || input.val->empty();
  const std::vector<Sample>& val = val_from_train ? train : *input.val;
  if (val_from_train && options.log) *options.log << "warning: no validation frames; selecting on train frames\n";

  const NetworkConfig netcfg = network_config_for(config, manifest);
  const std::string fp = stage_fingerprint(input, config, netcfg);
  const std::string stage_name(to_string(input.stage));
  const StageFiles files(dir);
  fs::create_directories(dir);

  if (options.resume && fs::exists(files.done)) {
    const json done = read_json(files.done);
    if (done.value("stage_fingerprint", "") == fp) {
      CheckpointMeta m = checkpoint_meta_from_json(done.at("best"));
      m.path = files.best;
      return m;
    }
  }

  UNet<float> net(netcfg);
  Rng init_rng(derive_seed(config.seed, "model.init"));
  net.init(init_rng);
  if (input.init) segnet::load_weights(net, *input.init);
  segnet::AdamW opt(net.parameters(), {config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  EarlyStopping stopper(config.patience);
  int start_epoch = 1;

  bool resumed = false;
  if (options.resume && fs::exists(files.last)) {
    const Checkpoint last = segnet::read_checkpoint(files.last);
    if (last.meta.value("stage_fingerprint", "") == fp && fs::exists(files.best)) {
      segnet::load_weights(net, last);
      segnet::load_optimizer(opt, net, last);
      stopper.restore(last.meta.at("best_epoch").get<int>(), last.meta.at("best_score").get<double>());
      start_epoch = last.meta.at("epoch").get<int>() + 1;
      truncate_curve(files.curve, start_epoch - 1);
      resumed = true;
      if (options.log) *options.log << stage_name << ": resuming at epoch " << start_epoch << '\n';
    }
  }
  if (!resumed) {
    for (const auto& p : {files.curve, files.best, files.last, files.done}) fs::remove(p);
  }

  std::vector<double> weights;
  if (config.class_weights) weights = class_weights_for(train, netcfg.num_classes);
  const int num_tools = manifest.tools.num_tools();
  const std::uint64_t tool_fp = manifest.tools.fingerprint();
  const std::uint64_t phase_fp = manifest.phases.fingerprint();
  const int H = train.front().image.height();
  const int W = train.front().image.width();
  const std::size_t plane = static_cast<std::size_t>(H) * W;

  auto write_last = [&](int epoch) {
    Checkpoint ck = segnet::make_checkpoint(net, tool_fp, phase_fp, config.seed, &opt);
    ck.meta["stage"] = stage_name;
    ck.meta["stage_fingerprint"] = fp;
    ck.meta["epoch"] = epoch;
    ck.meta["best_epoch"] = stopper.best_epoch();
    ck.meta["best_score"] = stopper.best_score();
    segnet::write_checkpoint(files.last, ck);
  };

  int epoch = start_epoch;
  bool stopped = start_epoch > 1 && stopper.should_stop(start_epoch - 1);
  for (; !stopped && epoch <= config.max_epochs; ++epoch) {
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(config.seed, stage_name + ".epoch." + std::to_string(epoch)));
    shuffle_rng.shuffle(order.begin(), order.end());
    Rng aug_rng(derive_seed(config.seed, stage_name + ".augment." + std::to_string(epoch)));

    double loss_sum = 0.0;
    std::size_t loss_frames = 0;
    const auto bs = static_cast<std::size_t>(config.batch_size);
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::size_t e = std::min(order.size(), b + bs);
      const int n = static_cast<int>(e - b);
      Tensor<float> x(n, 3, H, W);
      std::vector<std::uint8_t> labels(static_cast<std::size_t>(n) * plane);
      std::vector<PhaseId> phases;
      for (int i = 0; i < n; ++i) {
        const Sample& s = train[order[b + static_cast<std::size_t>(i)]];
        if (s.image.height() != H || s.image.width() != W) {
          fail(ErrorKind::shape_mismatch, "training frames differ in size (" + s.video_id + ")");
        }
        if (config.augment) {
          Image img = s.image;
          LabelMap lab = s.labels;
          augment_sample(img, lab, aug_rng);
          segnet::image_to_tensor(img, x, i);
          std::copy(lab.data().begin(), lab.data().end(), labels.begin() + static_cast<std::ptrdiff_t>(i * plane));
        } else {
          segnet::image_to_tensor(s.image, x, i);
          std::copy(s.labels.data().begin(), s.labels.data().end(),
                    labels.begin() + static_cast<std::ptrdiff_t>(i * plane));
        }
        phases.push_back(s.phase);
      }
      opt.zero_grad();
      const Tensor<float> scores = net.forward(x, phases, true);
      const auto loss = segnet::segmentation_loss(scores, labels, weights);
      if (!std::isfinite(loss.value) || !loss.grad.all_finite()) {
        std::ostringstream msg;
        msg << "non-finite loss in stage " << stage_name << " epoch " << epoch << " batch " << b / bs
            << " (ce=" << loss.ce << ", dice=" << loss.dice << ", first frame "
            << train[order[b]].video_id << ":" << train[order[b]].frame_index << ")";
        fail(ErrorKind::numeric, msg.str());
      }
      net.backward(loss.grad);
      const double gn = opt.grad_norm_sq();
      if (!std::isfinite(gn)) {
        fail(ErrorKind::numeric, "non-finite gradient in stage " + stage_name + " epoch " + std::to_string(epoch));
      }
      opt.step();
      loss_sum += static_cast<double>(loss.value) * n;
      loss_frames += static_cast<std::size_t>(n);
    }

    const ClassMetrics vm = evaluate_model(net, val, num_tools, config.aggregation, config.batch_size);
    EpochRecord rec;
    rec.stage = input.stage;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(loss_frames);
    rec.val_mean_dsc = vm.mean_dsc;
    rec.val_mean_iou = vm.mean_iou;
    rec.improved = stopper.observe(epoch, vm.mean_dsc);
    if (rec.improved) {
      Checkpoint ck = segnet::make_checkpoint(net, tool_fp, phase_fp, config.seed);
      ck.meta["stage"] = stage_name;
      ck.meta["epoch"] = epoch;
      ck.meta["val_mean_dsc"] = vm.mean_dsc;
      ck.meta["val_mean_iou"] = vm.mean_iou;
      ck.meta["train_config"] = train_config_to_json(config);
      segnet::write_checkpoint(files.best, ck);
    }
    {
      std::ofstream out(files.curve, std::ios::app);
      out << epoch_record_to_json(rec).dump() << '\n';
      if (!out) fail(ErrorKind::io, "cannot append to " + files.curve.string());
    }
    write_last(epoch);
    if (options.log) {
      *options.log << stage_name << " epoch " << epoch << " loss " << rec.train_loss << " val_dsc " << vm.mean_dsc
                   << (rec.improved ? " *" : "") << '\n';
    }
    if (options.on_epoch && !options.on_epoch(rec)) {
      CheckpointMeta m{stopper.best_epoch(), stopper.best_score(), files.best, input.stage, false};
      return m;
    }
    stopped = stopper.should_stop(epoch);
  }

  CheckpointMeta m{stopper.best_epoch(), stopper.best_score(), files.best, input.stage, true};
  write_json(files.done, {{"stage_fingerprint", fp}, {"best", checkpoint_meta_to_json(m)}});
  return m;
}

namespace {

void require_videos(const DatasetManifest& manifest, const Fold& fold) {
  const auto ids = manifest.video_ids();
  auto check = [&](const std::vector<std::string>& vs) {
    for (const auto& v : vs)
      if (!std::binary_search(ids.begin(), ids.end(), v)) {
        fail(ErrorKind::validation, "fold references unknown video " + v);
      }
  };
  check(fold.train_videos);
  check(fold.val_videos);
  check(fold.test_videos);
}

std::vector<std::string> fit_videos(const Fold& fold) {
  std::vector<std::string> v = fold.train_videos;
  v.insert(v.end(), fold.val_videos.begin(), fold.val_videos.end());
  return v;
}

}  // namespace

CheckpointMeta train_supervised(const DatasetManifest& manifest, const Fold& fold, const TrainConfig& config,
                                const fs::path& out_dir, const TrainOptions& options) {
  require_videos(manifest, fold);
  const PhaseResolver phases(config, manifest, fit_videos(fold));
  const auto train = load_samples(manifest, fold.train_videos, FrameFilter::human, phases);
  if (train.empty()) fail(ErrorKind::validation, "fold has no human-labeled train frames");
  const auto val = load_samples(manifest, fold.val_videos, FrameFilter::human, phases);
  return run_stage({Stage::supervised, &train, &val, nullptr}, config, manifest, out_dir, options);
}

CheckpointMeta train_semisupervised(const DatasetManifest& manifest, const Fold& fold, const TrainConfig& config,
                                    const fs::path& out_dir, const TrainOptions& options) {
  require_videos(manifest, fold);
  const PhaseResolver phases(config, manifest, fit_videos(fold));
  const auto human = load_samples(manifest, fold.train_videos, FrameFilter::human, phases);
  if (human.empty()) fail(ErrorKind::validation, "fold has no human-labeled train frames");
  auto pseudo = load_samples(manifest, fold.train_videos, FrameFilter::pseudo, phases);
  const auto val = load_samples(manifest, fold.val_videos, FrameFilter::human, phases);
  fs::create_directories(out_dir);

  if (pseudo.empty()) {
    std::ostream& log = options.log ? *options.log : std::cerr;
    log << "warning: no pseudo-labeled frames in the train videos; training supervised only\n";
    CheckpointMeta m = run_stage({Stage::supervised, &human, &val, nullptr}, config, manifest, out_dir, options);
    write_json(out_dir / "stages.json", {{"mode", "supervised_fallback"}, {"final", checkpoint_meta_to_json(m)}});
    return m;
  }

  std::vector<Sample> stage1_train = std::move(pseudo);
  if (!config.stage1_pseudo_only) stage1_train.insert(stage1_train.end(), human.begin(), human.end());
  const CheckpointMeta s1 =
      run_stage({Stage::pseudo_pretrain, &stage1_train, &val, nullptr}, config, manifest, out_dir / "stage1", options);
  json stages{{"mode", "two_stage"},
              {"stage1", checkpoint_meta_to_json(s1)},
              {"stage1_frames", stage1_train.size()},
              {"stage2_frames", human.size()},
              {"note", "stages are independent: fresh optimizer and early-stopping state in stage 2"}};
  if (!s1.completed) {
    write_json(out_dir / "stages.json", stages);
    return s1;
  }
  const Checkpoint init = segnet::read_checkpoint(s1.path);
  CheckpointMeta s2 = run_stage({Stage::finetune, &human, &val, &init}, config, manifest, out_dir / "stage2", options);
  stages["stage2"] = checkpoint_meta_to_json(s2);
  if (s2.completed) {
    fs::copy_file(s2.path, out_dir / "best.ckpt", fs::copy_options::overwrite_existing);
    std::ofstream curve(out_dir / "curve.jsonl", std::ios::trunc);
    for (const auto& d : {out_dir / "stage1", out_dir / "stage2"})
      for (const auto& r : read_curve(d / "curve.jsonl")) curve << epoch_record_to_json(r).dump() << '\n';
    s2.path = out_dir / "best.ckpt";
    stages["final"] = checkpoint_meta_to_json(s2);
  }
  write_json(out_dir / "stages.json", stages);
  return s2;
}

CheckpointMeta train_variant(const DatasetManifest& manifest, const Fold& fold, const TrainConfig& config,
                             const fs::path& out_dir, const TrainOptions& options) {
  return config.spec().use_pseudo ? train_semisupervised(manifest, fold, config, out_dir, options)
                                  : train_supervised(manifest, fold, config, out_dir, options);
}

Predictor::Predictor(const Checkpoint& ckpt) : net_(std::make_unique<UNet<float>>(ckpt.config)) {
  segnet::load_weights(*net_, ckpt);
}

Predictor::Predictor(const Checkpoint& ckpt, const NetworkConfig& expected) {
  if (!(ckpt.config == expected)) {
    fail(ErrorKind::fingerprint_mismatch, "checkpoint network " + segnet::fingerprint_hex(ckpt.config.fingerprint()) +
                                              " does not match the expected " +
                                              segnet::fingerprint_hex(expected.fingerprint()));
  }
  net_ = std::make_unique<UNet<float>>(ckpt.config);
  segnet::load_weights(*net_, ckpt);
}

Predictor::~Predictor() = default;
Predictor::Predictor(Predictor&&) noexcept = default;
Predictor& Predictor::operator=(Predictor&&) noexcept = default;

const NetworkConfig& Predictor::config() const noexcept { return net_->config(); }

LabelMap Predictor::predict(const Image& image, PhaseId phase) {
  const Resolution r = net_->config().working_resolution;
  if (r.width > 0 && (image.width() != r.width || image.height() != r.height)) {
    fail(ErrorKind::shape_mismatch, "image is " + std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                                        " but the checkpoint expects " + std::to_string(r.width) + "x" +
                                        std::to_string(r.height));
  }
  Tensor<float> x(1, 3, image.height(), image.width());
  segnet::image_to_tensor(image, x, 0);
  const PhaseId p[1] = {phase};
  return segnet::argmax_labels(net_->forward(x, p, false), 0);
}

LabelMap predict(const fs::path& checkpoint, const Image& image, PhaseId phase) {
  Predictor pred(segnet::read_checkpoint(checkpoint));
  return pred.predict(image, phase);
}

ClassMetrics evaluate_checkpoint(const fs::path& checkpoint, const DatasetManifest& manifest,
                                 const std::vector<std::string>& videos, const TrainConfig& config) {
  Predictor pred(segnet::read_checkpoint(checkpoint), network_config_for(config, manifest));
  const PhaseResolver phases(config, manifest, videos);
  const auto samples = load_samples(manifest, videos, FrameFilter::human, phases);
  if (samples.empty()) fail(ErrorKind::validation, "no human-labeled frames to evaluate");
  return evaluate_model(pred.network(), samples, manifest.tools.num_tools(), config.aggregation, config.batch_size);
}

}  // namespace phaseseg::trainer

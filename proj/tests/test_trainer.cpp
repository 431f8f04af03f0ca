#include "phaseseg/core/image_io.hpp"
#include "phaseseg/error.hpp"
#include "phaseseg/synth/world.hpp"
#include "phaseseg/trainer/grid.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace phaseseg;
using namespace phaseseg::trainer;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("phaseseg_test_trainer_" + name);
  fs::remove_all(p);
  return p;
}

synth::WorldConfig tiny_world(int videos = 4) {
  synth::WorldConfig c;
  c.videos = videos;
  c.frames = 120;
  c.tools = 2;
  c.phases = 2;
  c.seed = 5;
  c.working = {16, 16};
  c.downscale = 1;
  c.frame_stride = 30;
  return c;
}

TrainConfig tiny_config(Variant v = Variant::v0) {
  TrainConfig c;
  c.variant = v;
  c.lr = 3e-3;
  c.batch_size = 4;
  c.max_epochs = 4;
  c.patience = 2;
  c.base_width = 4;
  c.num_stages = 2;
  c.seed = 11;
  return c;
}

Fold fold_of(const DatasetManifest& m) {
  const auto ids = m.video_ids();
  Fold f;
  f.train_videos = {ids[0], ids[1]};
  f.val_videos = {ids[2]};
  f.test_videos = {ids[3]};
  return f;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::validation;
}

}  // namespace

TEST_CASE("variant table reproduces the eight ablation rows") {
  using segnet::PcdMode;
  const std::array<std::tuple<const char*, PcdMode, PhaseSource, bool>, 8> want{{
      {"v0", PcdMode::none, PhaseSource::none, false},
      {"v1", PcdMode::none, PhaseSource::none, true},
      {"v2", PcdMode::basic, PhaseSource::predicted_file, false},
      {"v3", PcdMode::gated, PhaseSource::predicted_file, false},
      {"v4", PcdMode::gated, PhaseSource::predicted_file, true},
      {"v5", PcdMode::basic, PhaseSource::ground_truth, false},
      {"v6", PcdMode::gated, PhaseSource::ground_truth, false},
      {"v7", PcdMode::gated, PhaseSource::ground_truth, true},
  }};
  for (std::size_t i = 0; i < want.size(); ++i) {
    const auto& [name, mode, source, pseudo] = want[i];
    const VariantSpec& s = variant_table()[i];
    CHECK(to_string(s.variant) == name);
    CHECK(variant_from_string(name) == s.variant);
    CHECK(s.pcd_mode == mode);
    CHECK(s.phase_source == source);
    CHECK(s.use_pseudo == pseudo);
  }
  CHECK(kind_of([] { variant_from_string("v8"); }) == ErrorKind::invalid_argument);
}

TEST_CASE("train config json round trip and validation") {
  TrainConfig c;
  c.variant = Variant::v6;
  c.lr = 2.5e-4;
  c.augment = true;
  c.aggregation = Aggregation::pooled;
  const auto j = train_config_to_json(c);
  CHECK(train_config_to_json(train_config_from_json(j)) == j);
  CHECK(train_config_fingerprint(train_config_from_json(j)) == train_config_fingerprint(c));
  TrainConfig d;
  CHECK(d.lr == 1e-4);
  CHECK(d.batch_size == 16);
  CHECK(d.max_epochs == 100);
  CHECK(d.patience == 10);
  CHECK(d.weight_decay == 1e-2);
  auto bad = j;
  bad["momentum"] = 0.9;
  CHECK(kind_of([&] { train_config_from_json(bad); }) == ErrorKind::validation);
  auto worse = j;
  worse["patience"] = 200;
  CHECK(kind_of([&] { train_config_from_json(worse); }) == ErrorKind::validation);
}

TEST_CASE("early stopping with patience 1 stops right after the best epoch") {
  EarlyStopping es(1);
  const double curve[] = {0.5, 0.4, 0.3, 0.2};
  int stopped_at = 0;
  for (int e = 1; e <= 4; ++e) {
    es.observe(e, curve[e - 1]);
    if (es.should_stop(e)) {
      stopped_at = e;
      break;
    }
  }
  CHECK(stopped_at == 2);
  CHECK(es.best_epoch() == 1);
}

TEST_CASE("early stopping never runs past best + patience") {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    const int patience = 1 + static_cast<int>(rng.index(5));
    EarlyStopping es(patience);
    int e = 1;
    for (; e <= 60; ++e) {
      es.observe(e, rng.uniform());
      if (es.should_stop(e)) break;
    }
    CHECK(e <= es.best_epoch() + patience);
  }
  EarlyStopping ties(2);
  ties.observe(1, 0.5);
  CHECK(!ties.observe(2, 0.5));
  CHECK(ties.best_epoch() == 1);
}

TEST_CASE("population standard deviation") {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const MeanStd m = mean_std(v);
  CHECK(m.mean == 2.5);
  CHECK(m.std == doctest::Approx(std::sqrt(1.25)));
}

TEST_CASE("rendered tables parse back to the exact values") {
  Rng rng(9);
  std::vector<VariantSummary> sums;
  for (const auto& spec : variant_table()) {
    VariantSummary s;
    s.variant = spec.variant;
    s.folds = 5;
    s.iou = {rng.uniform(), rng.uniform() * 0.1};
    s.dsc = {rng.uniform(), rng.uniform() * 0.1};
    sums.push_back(s);
  }
  const auto rows = parse_table(render_table(sums));
  REQUIRE(rows.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(rows[i].variant == sums[i].variant);
    CHECK(rows[i].iou == sums[i].iou);
    CHECK(rows[i].dsc == sums[i].dsc);
    CHECK(rows[i].folds == 5);
    CHECK(rows[i].conditioning == conditioning_label(sums[i].variant));
  }
  CHECK(rows[6].conditioning == "Gated");
  CHECK(rows[6].phase_source == "Ground Truth");
  CHECK(rows[7].pseudo == "Yes");
}

TEST_CASE("eval report json round trip") {
  EvalReport r;
  r.variant = Variant::v4;
  r.fold_id = 3;
  r.metrics.per_class[1] = {0.25, 0.4, 7};
  r.metrics.mean_iou = 0.25;
  r.metrics.mean_dsc = 0.4;
  r.config_fingerprint = "00ff";
  r.seed = 99;
  r.best_epoch = 12;
  r.stage = "finetune";
  CHECK(eval_report_from_json(eval_report_to_json(r)) == r);
  CHECK(eval_report_to_json(r)["aggregation_protocol"] == "per_frame");
}

TEST_CASE("phase sources") {
  const auto dir = scratch("phase_source");
  const DatasetManifest m = synth::generate_dataset(tiny_world(), dir);
  const TrackMap none;
  for (const auto& f : m.frames) {
    CHECK(phase_source_resolve(PhaseSource::none, f, m, none) == kNullPhase);
    CHECK(phase_source_resolve(PhaseSource::ground_truth, f, m, none) == f.phase_id);
  }
  CHECK(kind_of([&] { phase_source_resolve(PhaseSource::predicted_file, m.frames[0], m, none); }) ==
        ErrorKind::not_found);
  CHECK(kind_of([&] { load_predicted_tracks(dir / "nowhere", m.video_ids()); }) == ErrorKind::not_found);
  const auto tracks = load_predicted_tracks(dir / synth::kPredictedPhaseDir, m.video_ids());
  CHECK(tracks.size() == m.video_ids().size());
}

TEST_CASE("predicted phases equal to ground truth give identical outputs") {
  const auto dir = scratch("pred_equal");
  const DatasetManifest m = synth::generate_dataset(tiny_world(), dir);
  TrackMap same;
  for (const auto& t : m.tracks) same.emplace(t.video_id, t);
  const PhaseResolver gt(PhaseSource::ground_truth, m), pred(PhaseSource::predicted_file, m, same);
  const auto a = load_samples(m, m.video_ids(), FrameFilter::human, gt);
  const auto b = load_samples(m, m.video_ids(), FrameFilter::human, pred);
  REQUIRE(a.size() == b.size());
  TrainConfig cfg = tiny_config(Variant::v6);
  segnet::UNet<float> net(network_config_for(cfg, m));
  Rng rng(4);
  net.init(rng);
  // Distinct phase rows so the phase actually matters.
  for (auto& level : net.pcd().table.beta)
    for (auto& v : level.value) v = static_cast<float>(rng.normal() * 0.3);
  const auto pa = predict_samples(net, a, 4);
  const auto pb = predict_samples(net, b, 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].phase == b[i].phase);
    CHECK(pa[i] == pb[i]);
  }
}

TEST_CASE("overfitting eight frames reaches 0.95 DSC and predicts its own frames") {
  const auto dir = scratch("overfit");
  synth::WorldConfig wc = tiny_world(1);
  wc.frames = 240;
  wc.working = {32, 32};
  const DatasetManifest m = synth::generate_dataset(wc, dir);
  const PhaseResolver phases(PhaseSource::none, m);
  const auto samples = load_samples(m, m.video_ids(), FrameFilter::human, phases);
  REQUIRE(samples.size() == 8);
  TrainConfig cfg = tiny_config();
  cfg.lr = 1e-2;
  cfg.base_width = 8;
  cfg.num_stages = 3;
  cfg.batch_size = 8;
  cfg.max_epochs = 200;
  cfg.patience = 200;
  int epochs = 0;
  TrainOptions opt;
  opt.on_epoch = [&](const EpochRecord& r) {
    epochs = r.epoch;
    return r.val_mean_dsc < 0.97;
  };
  const CheckpointMeta best = run_stage({Stage::supervised, &samples, &samples, nullptr}, cfg, m, dir / "run", opt);
  MESSAGE("overfit: best epoch " << best.epoch << " dsc " << best.val_mean_dsc << " after " << epochs << " epochs");
  CHECK(best.val_mean_dsc >= 0.95);
  CHECK(best.epoch <= 200);

  const auto curve = read_curve(dir / "run" / "curve.jsonl");
  double top = -1;
  int top_epoch = 0;
  for (const auto& r : curve)
    if (r.val_mean_dsc > top) {
      top = r.val_mean_dsc;
      top_epoch = r.epoch;
    }
  CHECK(top_epoch == best.epoch);

  const auto ckpt = segnet::read_checkpoint(best.path);
  Predictor pred(ckpt, network_config_for(cfg, m));
  const ToolTaxonomy tools = m.tools;
  std::vector<LabelMap> preds, gts;
  for (const auto& s : samples) {
    preds.push_back(pred.predict(s.image, kNullPhase));
    gts.push_back(s.labels);
  }
  CHECK(evaluate_label_maps(preds, gts, tools).mean_dsc >= 0.95);
  CHECK(pred.predict(samples[0].image, kNullPhase) == preds[0]);
  CHECK(trainer::predict(best.path, samples[0].image, kNullPhase) == preds[0]);
}

TEST_CASE("predictor guards geometry and configuration") {
  const auto dir = scratch("predictor");
  const DatasetManifest m = synth::generate_dataset(tiny_world(), dir);
  TrainConfig cfg = tiny_config();
  segnet::UNet<float> net(network_config_for(cfg, m));
  Rng rng(1);
  net.init(rng);
  auto ckpt = segnet::make_checkpoint(net, m.tools.fingerprint(), m.phases.fingerprint(), 1);
  TrainConfig other = cfg;
  other.base_width = 8;
  CHECK(kind_of([&] { Predictor p(ckpt, network_config_for(other, m)); }) == ErrorKind::fingerprint_mismatch);
  Predictor p(ckpt);
  CHECK(kind_of([&] { p.predict(Image(8, 8, 3), kNullPhase); }) == ErrorKind::shape_mismatch);

  for (auto& a : ckpt.arrays) {
    if (a.name == "head.weight") std::fill(a.values.begin(), a.values.end(), 0.0f);
    if (a.name == "head.bias") a.values = {5.0f, -5.0f, -5.0f};
  }
  Predictor degenerate(ckpt);
  const LabelMap out = degenerate.predict(Image(16, 16, 3, 200), kNullPhase);
  for (auto v : out.data()) CHECK(v == 0);
}

TEST_CASE("training is deterministic and resumable") {
  const auto dir = scratch("determinism");
  const DatasetManifest m = synth::generate_dataset(tiny_world(), dir);
  const Fold fold = fold_of(m);
  const TrainConfig cfg = tiny_config(Variant::v6);
  const auto a = train_supervised(m, fold, cfg, dir / "a");
  const auto b = train_supervised(m, fold, cfg, dir / "b");
  CHECK(a.epoch == b.epoch);
  CHECK(std::abs(a.val_mean_dsc - b.val_mean_dsc) <= 1e-6);

  TrainOptions stop_early;
  stop_early.on_epoch = [](const EpochRecord& r) { return r.epoch < 2; };
  const auto partial = train_supervised(m, fold, cfg, dir / "c", stop_early);
  CHECK(!partial.completed);
  CHECK(fs::exists(dir / "c" / "last.ckpt"));
  const auto resumed = train_supervised(m, fold, cfg, dir / "c");
  CHECK(resumed.completed);
  CHECK(resumed.epoch == a.epoch);
  CHECK(std::abs(resumed.val_mean_dsc - a.val_mean_dsc) <= 1e-6);
  const auto ca = read_curve(dir / "a" / "curve.jsonl");
  const auto cc = read_curve(dir / "c" / "curve.jsonl");
  REQUIRE(ca.size() == cc.size());
  for (std::size_t i = 0; i < ca.size(); ++i) {
    CHECK(ca[i].epoch == cc[i].epoch);
    CHECK(std::abs(ca[i].train_loss - cc[i].train_loss) <= 1e-6);
  }
}

TEST_CASE("empty train set and bad folds are rejected") {
  const auto dir = scratch("empty");
  synth::WorldConfig wc = tiny_world();
  const DatasetManifest m = synth::generate_dataset(wc, dir);
  Fold f = fold_of(m);
  f.train_videos = {"video_999"};
  CHECK(kind_of([&] { train_supervised(m, f, tiny_config(), dir / "x"); }) == ErrorKind::validation);
  DatasetManifest unlabeled = m;
  for (auto& fr : unlabeled.frames) {
    fr.provenance = Provenance::none;
    fr.label_map_path.reset();
  }
  CHECK(kind_of([&] { train_supervised(unlabeled, fold_of(m), tiny_config(), dir / "y"); }) == ErrorKind::validation);
}

TEST_CASE("semi-supervised training: fallback, two stages and interrupted stage 2") {
  const auto dir = scratch("semi");
  synth::WorldConfig wc = tiny_world();
  wc.label_every = 2;
  const DatasetManifest m = synth::generate_dataset(wc, dir);
  const Fold fold = fold_of(m);
  TrainConfig cfg = tiny_config(Variant::v7);

  std::ostringstream log;
  TrainOptions opt;
  opt.log = &log;
  const auto fallback = train_semisupervised(m, fold, cfg, dir / "fallback", opt);
  CHECK(fallback.stage == Stage::supervised);
  CHECK(log.str().find("warning") != std::string::npos);

  // Promote the unlabeled frames to pseudo frames using the stored ground truth.
  DatasetManifest pm = m;
  for (auto& f : pm.frames)
    if (f.provenance == Provenance::none) {
      f.provenance = Provenance::pseudo;
      f.label_map_path = fs::path("gt") / f.video_id / f.image_path.filename();
    }
  validate_manifest(pm);

  TrainOptions cut;
  cut.on_epoch = [](const EpochRecord& r) { return !(r.stage == Stage::finetune && r.epoch == 1); };
  const auto interrupted = train_semisupervised(pm, fold, cfg, dir / "two", cut);
  CHECK(!interrupted.completed);
  CHECK(fs::exists(dir / "two" / "stage1" / "best.ckpt"));
  CHECK(fs::exists(dir / "two" / "stage1" / "done.json"));
  CHECK(!fs::exists(dir / "two" / "best.ckpt"));

  const auto done = train_semisupervised(pm, fold, cfg, dir / "two");
  CHECK(done.completed);
  CHECK(done.stage == Stage::finetune);
  CHECK(fs::exists(dir / "two" / "best.ckpt"));
  CHECK(fs::exists(dir / "two" / "stages.json"));
  const auto uninterrupted = train_semisupervised(pm, fold, cfg, dir / "three");
  CHECK(uninterrupted.epoch == done.epoch);
  CHECK(std::abs(uninterrupted.val_mean_dsc - done.val_mean_dsc) <= 1e-6);
  const auto curve = read_curve(dir / "three" / "curve.jsonl");
  CHECK(curve.front().stage == Stage::pseudo_pretrain);
  CHECK(curve.back().stage == Stage::finetune);
}

TEST_CASE("grid: reports per fold, exact means, resumability and order independence") {
  const auto dir = scratch("grid");
  const DatasetManifest m = synth::generate_dataset(tiny_world(6), dir);
  const SplitPlan plan = generate_splits(m, 2, 0.2, 1);
  const std::vector<TrainConfig> grid{tiny_config()};
  const auto result = cross_validate(m, plan, grid, dir / "runs");
  REQUIRE(result.reports.size() == 2);
  REQUIRE(result.failures.empty());
  const double hand = (result.reports[0].metrics.mean_dsc + result.reports[1].metrics.mean_dsc) / 2;
  REQUIRE(result.summaries.size() == 1);
  CHECK(result.summaries[0].dsc.mean == hand);
  for (const char* f : {"config.json", "curve.jsonl", "best.ckpt", "report.json"})
    CHECK(fs::exists(cell_dir(dir / "runs", Variant::v0, 0) / f));
  CHECK(fs::exists(dir / "runs" / "table.txt"));

  const auto report_file = cell_dir(dir / "runs", Variant::v0, 1) / "report.json";
  const auto stamp = fs::last_write_time(report_file);
  std::ostringstream log;
  GridOptions again;
  again.log = &log;
  const auto rerun = cross_validate(m, plan, grid, dir / "runs", again);
  CHECK(fs::last_write_time(report_file) == stamp);
  CHECK(log.str().find("reusing") != std::string::npos);
  CHECK(rerun.reports == result.reports);

  GridOptions reversed;
  reversed.folds = {1, 0};
  const auto other = cross_validate(m, plan, grid, dir / "runs_reversed", reversed);
  REQUIRE(other.reports.size() == 2);
  CHECK(other.reports[0] == result.reports[1]);
  CHECK(other.reports[1] == result.reports[0]);
}

TEST_CASE("grid keeps going when a cell fails") {
  const auto dir = scratch("grid_fail");
  const DatasetManifest m = synth::generate_dataset(tiny_world(), dir);
  const SplitPlan plan = generate_splits(m, 2, 0.2, 1);
  TrainConfig broken = tiny_config(Variant::v3);
  broken.predicted_phase_dir = "no_such_dir";
  const std::vector<TrainConfig> grid{broken, tiny_config()};
  GridOptions opt;
  opt.folds = {0};
  const auto result = cross_validate(m, plan, grid, dir / "runs", opt);
  CHECK(result.reports.size() == 1);
  REQUIRE(result.failures.size() == 1);
  CHECK(result.failures[0].kind == "not_found");
  CHECK(fs::exists(cell_dir(dir / "runs", Variant::v3, 0) / "error.json"));
}

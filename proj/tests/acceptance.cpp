// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is
// nonzero when any criterion fails. Pass criterion ids (AC1 ... AC9) to run a
// subset.

#include "oracles.hpp"

#include "phaseseg/core/image_io.hpp"
#include "phaseseg/core/splits.hpp"
#include "phaseseg/error.hpp"
#include "phaseseg/maskops/denoise.hpp"
#include "phaseseg/maskops/metrics.hpp"
#include "phaseseg/maskops/morphology.hpp"
#include "phaseseg/pseudolabel/engine.hpp"
#include "phaseseg/pseudolabel/oracle.hpp"
#include "phaseseg/segnet/loss.hpp"
#include "phaseseg/segnet/pcd.hpp"
#include "phaseseg/segnet/unet.hpp"
#include "phaseseg/synth/world.hpp"
#include "phaseseg/trainer/grid.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

using namespace phaseseg;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail << "failed: ";
      else detail << "; ";
      detail << what;
      pass = false;
    }
  }
};

fs::path work_root() {
  const char* env = std::getenv("PHASESEG_ACCEPTANCE_DIR");
  return env ? fs::path(env) : fs::temp_directory_path() / "phaseseg_acceptance";
}

fs::path scratch(const std::string& name) {
  const fs::path p = work_root() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(a) + std::abs(b), 1e-8); }

template <typename V>
double central_diff(V& v, std::size_t i, const std::function<double()>& f, double h = 1e-5) {
  const double x = v[i];
  v[i] = x + h;
  const double up = f();
  v[i] = x - h;
  const double down = f();
  v[i] = x;
  return (up - down) / (2 * h);
}

template <typename V>
void fill(V& v, Rng& rng, double lo = -1, double hi = 1) {
  for (auto& x : v) x = rng.uniform(lo, hi);
}

// ---------------------------------------------------------------------------

void ac1(Verdict& v) {
  Rng rng(101);
  const auto tax = ToolTaxonomy::from_names({"t1", "t2", "t3", "t4"});
  double worst_identity = 0;
  int mismatches = 0;
  std::vector<LabelMap> preds, gts;
  for (int t = 0; t < 1000; ++t) {
    const auto a = oracle::random_mask(rng, 64, 64, rng.uniform());
    const auto b = oracle::random_mask(rng, 64, 64, rng.uniform());
    const double i = iou(a, b), d = dsc(a, b);
    if (i != oracle::iou(a, b) || d != oracle::dsc(a, b)) ++mismatches;
    worst_identity = std::max(worst_identity, std::abs(d - 2 * i / (1 + i)));

    LabelMap p(64, 64), g(64, 64);
    for (std::size_t k = 0; k < p.data().size(); ++k) {
      p.data()[k] = static_cast<std::uint8_t>((a[k] ? 1 : 0) + (b[k] ? 2 : 0));
      g.data()[k] = static_cast<std::uint8_t>(rng.index(5));
    }
    preds.push_back(std::move(p));
    gts.push_back(std::move(g));
  }
  int map_mismatches = 0;
  for (bool pooled : {false, true}) {
    const auto got = evaluate_label_maps(preds, gts, tax, pooled ? Aggregation::pooled : Aggregation::per_frame);
    const auto [per, means] = oracle::evaluate(preds, gts, 4, pooled);
    for (int c = 1; c <= 4; ++c)
      if (rel_err(got.per_class.at(c).iou, per.at(c).iou) > 1e-12 ||
          rel_err(got.per_class.at(c).dsc, per.at(c).dsc) > 1e-12 || got.per_class.at(c).support_frames != per.at(c).support)
        ++map_mismatches;
    if (rel_err(got.mean_iou, means.first) > 1e-12 || rel_err(got.mean_dsc, means.second) > 1e-12) ++map_mismatches;
  }
  v.require(mismatches == 0, std::to_string(mismatches) + " mask pairs disagree with pixel counting");
  v.require(map_mismatches == 0, std::to_string(map_mismatches) + " label-map aggregates disagree");
  v.require(worst_identity <= 1e-12, "dsc identity off by " + std::to_string(worst_identity));
  v.detail << "1000 pairs, max |dsc - 2iou/(1+iou)| = " << worst_identity;
}

void ac2(Verdict& v) {
  using namespace segnet;
  Rng rng(202);
  double worst = 0;
  const int K = 4;
  const std::size_t hw = 30;
  std::vector<double> f(K * hw), gamma(K), beta(K), w(K), b(1), eta(1), r(K * hw);
  for (int trial = 0; trial < 5; ++trial) {
    fill(f, rng);
    fill(gamma, rng, 0.5, 1.5);
    fill(beta, rng);
    fill(w, rng);
    fill(b, rng);
    fill(eta, rng);
    fill(r, rng);
    auto objective = [&] {
      std::vector<double> fp(K * hw), alpha(hw), out(K * hw);
      kernels::paft_forward(f.data(), gamma.data(), beta.data(), K, hw, fp.data());
      kernels::dfbf_forward(f.data(), w.data(), b[0], eta[0], K, hw, alpha.data());
      kernels::cgate_forward(f.data(), fp.data(), alpha.data(), K, hw, out.data());
      double s = 0;
      for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * r[i];
      return s;
    };
    std::vector<double> fp(K * hw), alpha(hw);
    kernels::paft_forward(f.data(), gamma.data(), beta.data(), K, hw, fp.data());
    kernels::dfbf_forward(f.data(), w.data(), b[0], eta[0], K, hw, alpha.data());
    std::vector<double> df(K * hw, 0), dfp(K * hw, 0), da(hw, 0), dg(K, 0), db(K, 0), dw(K, 0), dbias(1, 0), de(1, 0);
    kernels::cgate_backward(f.data(), fp.data(), alpha.data(), r.data(), K, hw, df.data(), dfp.data(), da.data());
    kernels::paft_backward(f.data(), gamma.data(), dfp.data(), K, hw, df.data(), dg.data(), db.data());
    kernels::dfbf_backward(f.data(), w.data(), alpha.data(), da.data(), K, hw, df.data(), dw.data(), dbias.data(),
                           de.data());
    for (auto [param, grad] : {std::pair{&f, &df}, {&gamma, &dg}, {&beta, &db}, {&w, &dw}, {&b, &dbias}, {&eta, &de}})
      for (std::size_t i = 0; i < param->size(); ++i)
        worst = std::max(worst, rel_err((*grad)[i], central_diff(*param, i, objective)));
  }
  const double pcd_worst = worst;

  double loss_worst = 0;
  for (bool weighted : {false, true}) {
    Tensor<double> s(2, 4, 6, 6);
    fill(s.data, rng, -3, 3);
    std::vector<std::uint8_t> y(2 * 36);
    for (auto& l : y) l = static_cast<std::uint8_t>(rng.index(4));
    std::vector<double> wts;
    if (weighted) wts = {0.3, 1.0, 2.0, 0.8};
    const auto res = segmentation_loss<double>(s, y, wts);
    auto obj = [&] { return segmentation_loss<double>(s, y, wts).value; };
    for (std::size_t i = 0; i < s.size(); ++i)
      loss_worst = std::max(loss_worst, rel_err(res.grad.data[i], central_diff(s.data, i, obj)));
  }
  v.require(pcd_worst < 1e-5, "PCD relative error " + std::to_string(pcd_worst));
  v.require(loss_worst < 1e-5, "loss relative error " + std::to_string(loss_worst));
  v.detail << "max relative error PAFT/DFBF/CGate " << pcd_worst << ", loss " << loss_worst;
}

void ac3(Verdict& v) {
  using namespace segnet;
  NetworkConfig cfg;
  cfg.num_classes = 4;
  cfg.base_width = 4;
  cfg.num_stages = 3;
  cfg.num_phases = 5;
  cfg.working_resolution = {40, 36};
  NetworkConfig gated_cfg = cfg;
  gated_cfg.pcd_mode = PcdMode::gated;
  UNet<float> plain(cfg), gated(gated_cfg);
  Rng r1(303), r2(304);
  plain.init(r1);
  gated.init(r2);
  // Same non-conditioning weights; random blend field so alpha is not constant.
  std::map<std::string, Parameter<float>*> by_name;
  for (auto* p : plain.parameters()) by_name[p->name] = p;
  Rng rb(305);
  for (auto* p : gated.parameters()) {
    if (auto it = by_name.find(p->name); it != by_name.end()) p->value = it->second->value;
    else if (p->name.rfind("pcd.blend", 0) == 0 || p->name.rfind("pcd.eta", 0) == 0)
      for (auto& x : p->value) x = static_cast<float>(rb.normal());
  }
  Rng rx(306);
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    Tensor<float> x(1, 3, 36, 40);
    for (auto& e : x.data) e = static_cast<float>(rx.uniform());
    const PhaseId phase = t % 6 == 5 ? kNullPhase : t % 6;
    const std::vector<PhaseId> phases{phase};
    const auto a = plain.forward(x, phases);
    const auto b = gated.forward(x, phases);
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, static_cast<double>(std::abs(a.data[i] - b.data[i])));
  }
  v.require(worst <= 1e-6, "max deviation " + std::to_string(worst));
  v.detail << "20 inputs, max |gated - plain| = " << worst;
}

// ---------------------------------------------------------------------------

trainer::TrainConfig bench_config(trainer::Variant variant) {
  trainer::TrainConfig c;
  c.variant = variant;
  c.lr = 1e-3;
  c.batch_size = 8;
  c.max_epochs = 40;
  c.patience = 8;
  c.base_width = 8;
  c.num_stages = 4;
  c.seed = 17;
  return c;
}

std::ofstream& train_log() {
  static std::ofstream log(work_root() / "training.log", std::ios::app);
  return log;
}

void ac4(Verdict& v) {
  const fs::path dir = scratch("ac4");
  synth::WorldConfig wc;
  wc.videos = 10;
  wc.frames = 1800;
  wc.tools = 2;
  wc.phases = 6;
  wc.seed = 41;
  wc.working = {64, 64};
  wc.downscale = 1;
  wc.frame_stride = 30;
  wc.ambiguous_pair = true;
  wc.phase_length_jitter = 0.0;
  wc.predicted_accuracy = 0.5;
  const DatasetManifest m = synth::generate_dataset(wc, dir / "data");
  const SplitPlan plan = generate_splits(m, 5, 0.15, 1);

  int train_frames = 0;
  for (const auto& f : m.frames)
    if (std::count(plan.folds[0].train_videos.begin(), plan.folds[0].train_videos.end(), f.video_id)) ++train_frames;

  trainer::GridOptions opt;
  opt.log = &train_log();
  std::map<trainer::Variant, ClassMetrics> res;
  for (auto variant : {trainer::Variant::v0, trainer::Variant::v3, trainer::Variant::v6}) {
    const auto cfg = bench_config(variant);
    res[variant] = trainer::run_cell(m, plan, 0, cfg, trainer::cell_dir(dir / "grid", variant, 0), opt).metrics;
  }
  const auto& v0 = res[trainer::Variant::v0];
  const auto& v3 = res[trainer::Variant::v3];
  const auto& v6 = res[trainer::Variant::v6];
  const double v0_pair = (v0.per_class.at(1).dsc + v0.per_class.at(2).dsc) / 2;
  v.require(v0_pair <= 0.55, "v0 pair DSC " + fmt(v0_pair) + " > 0.55");
  v.require(v6.per_class.at(1).dsc >= 0.90 && v6.per_class.at(2).dsc >= 0.90,
            "v6 class DSC " + fmt(v6.per_class.at(1).dsc) + "/" + fmt(v6.per_class.at(2).dsc) + " below 0.90");
  v.require(v6.mean_dsc > v3.mean_dsc && v3.mean_dsc > v0.mean_dsc, "ordering v0 < v3 < v6 violated");
  v.detail << train_frames << " train frames; mean DSC v0 " << fmt(v0.mean_dsc) << " (pair " << fmt(v0_pair)
           << "), v3 " << fmt(v3.mean_dsc) << ", v6 " << fmt(v6.mean_dsc) << " (classes "
           << fmt(v6.per_class.at(1).dsc) << "/" << fmt(v6.per_class.at(2).dsc) << ")";
}

// Every unlabeled frame of the given videos becomes an evaluation frame
// labeled by the stored world ground truth.
DatasetManifest with_full_test_labels(DatasetManifest m, const std::vector<std::string>& videos,
                                      const fs::path& gt_root) {
  for (auto& f : m.frames)
    if (f.provenance == Provenance::none && std::count(videos.begin(), videos.end(), f.video_id)) {
      f.provenance = Provenance::human;
      f.label_map_path = gt_root / f.video_id / f.image_path.filename();
    }
  validate_manifest(m);
  return m;
}

void ac5(Verdict& v) {
  const fs::path dir = scratch("ac5");
  synth::WorldConfig wc;
  wc.videos = 10;
  wc.frames = 900;
  wc.tools = 4;
  wc.phases = 4;
  wc.seed = 53;
  wc.working = {64, 64};
  wc.downscale = 1;
  wc.frame_stride = 30;
  wc.label_every = 4;
  const DatasetManifest m = synth::generate_dataset(wc, dir / "data");
  const synth::World world = synth::load_world(dir / "data");
  pseudo::OracleSegmenter seg(world, pseudo::Fidelity::dilated, 0, 2);
  pseudo::PseudoOptions popt;
  popt.seed = 5;
  const auto run = pseudo::run_pseudo_pipeline(m, seg, popt, dir / "pseudo");
  const DatasetManifest& pm = run.manifest;
  int human = 0, pseudo_frames = 0;
  for (const auto& f : pm.frames) {
    human += f.provenance == Provenance::human;
    pseudo_frames += f.provenance == Provenance::pseudo;
  }

  const SplitPlan plan = generate_splits(pm, 5, 0.2, 2);
  const Fold& fold = plan.folds[0];
  const DatasetManifest eval_manifest = with_full_test_labels(pm, fold.test_videos, fs::absolute(dir / "data" / "gt"));

  trainer::TrainOptions topt;
  topt.log = &train_log();
  auto sup_cfg = bench_config(trainer::Variant::v0);
  auto semi_cfg = bench_config(trainer::Variant::v1);
  const auto sup = trainer::train_variant(pm, fold, sup_cfg, dir / "supervised", topt);
  const auto semi = trainer::train_variant(pm, fold, semi_cfg, dir / "two_stage", topt);
  const auto ms = trainer::evaluate_checkpoint(sup.path, eval_manifest, fold.test_videos, sup_cfg);
  const auto mt = trainer::evaluate_checkpoint(semi.path, eval_manifest, fold.test_videos, semi_cfg);
  const double gain = (mt.mean_dsc - ms.mean_dsc) * 100;
  v.require(semi.stage == trainer::Stage::finetune, "two-stage run fell back to supervised");
  v.require(gain >= 2.0, "gain " + fmt(gain, 2) + " DSC points < 2");
  v.detail << human << " human + " << pseudo_frames << " pseudo frames; test DSC supervised " << fmt(ms.mean_dsc)
           << ", two-stage " << fmt(mt.mean_dsc) << " (+" << fmt(gain, 2) << " points)";
}

void ac6(Verdict& v) {
  const fs::path dir = scratch("ac6");
  synth::WorldConfig wc;
  wc.videos = 3;
  wc.frames = 900;
  wc.tools = 3;
  wc.phases = 3;
  wc.seed = 61;
  wc.working = {48, 48};
  wc.downscale = 1;
  wc.label_every = 4;
  wc.label_margin = 90;
  wc.phase_length_jitter = 0.0;
  const DatasetManifest m = synth::generate_dataset(wc, dir / "data");
  const synth::World world = synth::load_world(dir / "data");

  pseudo::OracleSegmenter perfect(world, pseudo::Fidelity::perfect);
  pseudo::PseudoOptions opt;
  opt.seed = 3;
  const auto run = pseudo::run_pseudo_pipeline(m, perfect, opt, dir / "pseudo");
  std::vector<LabelMap> preds, gts;
  for (const auto& f : run.manifest.frames) {
    if (f.provenance != Provenance::pseudo) continue;
    preds.push_back(read_label_map(run.manifest.resolve(*f.label_map_path)));
    gts.push_back(world.labels(f.video_id, f.frame_index));
  }
  v.require(!preds.empty(), "no pseudo frames");
  const double pseudo_dsc = preds.empty() ? 0.0 : evaluate_label_maps(preds, gts, m.tools).mean_dsc;
  v.require(pseudo_dsc == 1.0, "pseudo-label DSC " + fmt(pseudo_dsc, 6));

  // Refinement monotonicity over 100 seeds with an imperfect segmenter.
  pseudo::OracleSegmenter dilated(world, pseudo::Fidelity::dilated, 0, 2);
  pseudo::FrameRef frame;
  ClassId cls = 0;
  for (const auto& f : m.frames) {
    const auto lab = world.labels(f.video_id, f.frame_index);
    for (auto px : lab.data())
      if (px) {
        frame = {f.video_id, f.frame_index};
        cls = px;
        break;
      }
    if (cls) break;
  }
  const auto gt = BinaryMask::from_labels(world.labels(frame.video_id, frame.frame_index), cls);
  int decreases = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    auto init = pseudo::sample_initial_prompts(gt, s);
    init.frame = frame;
    init.class_id = cls;
    init.score = oracle::iou(dilated.segment_frame(frame, init.points), gt);
    const auto best = pseudo::refine_prompts(dilated, frame, gt, init, 3, 0.95, s + 7);
    if (best.score < init.score) ++decreases;
  }
  v.require(decreases == 0, std::to_string(decreases) + " refinements lowered the score");

  const auto interior = pseudo::propagation_offsets(450, 900);
  v.require(interior == std::vector<int>{360, 390, 420, 480, 510, 540}, "interior offsets wrong");
  v.require(pseudo::propagation_offsets(0, 900) == std::vector<int>{30, 60, 90}, "start boundary offsets wrong");
  v.require(pseudo::propagation_offsets(60, 900) == std::vector<int>{0, 30, 90, 120, 150}, "start clipping wrong");
  v.require(pseudo::propagation_offsets(880, 900) == std::vector<int>{790, 820, 850}, "end boundary offsets wrong");
  v.detail << preds.size() << " pseudo frames at DSC " << pseudo_dsc << "; 100 refinement seeds, " << decreases
           << " decreases; interior anchor -> " << interior.size() << " offsets";
}

void ac7(Verdict& v) {
  Rng rng(707);
  int violations = 0;
  std::size_t survivors = 0;
  for (int t = 0; t < 500; ++t) {
    const int h = 48 + static_cast<int>(rng.index(48)), w = 48 + static_cast<int>(rng.index(48));
    const auto noisy = oracle::random_blobs(rng, h, w, 1 + static_cast<int>(rng.index(6)), 0.01 + 0.04 * rng.uniform());
    const auto clean = denoise_mask(noisy);
    const double fg = static_cast<double>(clean.count());
    for (const auto& comp : oracle::components(clean, true)) {
      ++survivors;
      if (comp.size() < 100 || static_cast<double>(comp.size()) < 0.1 * fg) ++violations;
    }
  }
  int non_idempotent = 0;
  for (int t = 0; t < 200; ++t) {
    const auto m = oracle::random_blobs(rng, 40, 40, 3, 0.05);
    for (int r : {1, 2, 3}) {
      const auto o = morph(m, MorphOp::open, r);
      const auto c = morph(m, MorphOp::close, r);
      non_idempotent += !(morph(o, MorphOp::open, r) == o);
      non_idempotent += !(morph(c, MorphOp::close, r) == c);
    }
  }
  v.require(violations == 0, std::to_string(violations) + " undersized components survived");
  v.require(non_idempotent == 0, std::to_string(non_idempotent) + " open/close results not idempotent");
  v.detail << "500 noisy masks, " << survivors << " surviving components, " << violations
           << " violations; 1200 open/close idempotence checks";
}

void ac8(Verdict& v) {
  std::vector<std::string> videos;
  for (int i = 0; i < 53; ++i) {
    std::ostringstream s;
    s << "video_" << std::setw(3) << std::setfill('0') << i;
    videos.push_back(s.str());
  }
  const SplitPlan plan = generate_splits(videos, 5, 0.2, 8);
  std::multiset<std::size_t> sizes;
  std::set<std::string> covered;
  bool disjoint = true;
  for (const auto& f : plan.folds) {
    sizes.insert(f.test_videos.size());
    for (const auto& t : f.test_videos) disjoint &= covered.insert(t).second;
    std::set<std::string> roles;
    std::size_t n = 0;
    for (const auto* part : {&f.train_videos, &f.val_videos, &f.test_videos})
      for (const auto& id : *part) {
        roles.insert(id);
        ++n;
      }
    disjoint &= roles.size() == n;
  }
  bool valid = true;
  try {
    validate_split(plan, videos);
  } catch (const Error&) {
    valid = false;
  }
  std::ostringstream got;
  for (auto it = sizes.rbegin(); it != sizes.rend(); ++it) got << (it == sizes.rbegin() ? "" : ",") << *it;
  const std::multiset<std::size_t> want{9, 8, 7, 7, 7};
  v.require(disjoint, "folds overlap");
  v.require(covered.size() == videos.size(), "test sets do not cover every video");
  v.require(valid, "validate_split rejected the plan");
  v.require(sizes == want, "test sizes {" + got.str() + "} differ from {9,8,7,7,7}");
  v.detail << " (test sizes {" << got.str() << "}, " << covered.size() << "/53 covered)";
}

void ac9(Verdict& v) {
  const fs::path dir = scratch("ac9");
  synth::WorldConfig wc;
  wc.videos = 5;
  wc.frames = 300;
  wc.tools = 3;
  wc.phases = 3;
  wc.seed = 91;
  wc.working = {32, 32};
  wc.downscale = 1;
  const DatasetManifest m = synth::generate_dataset(wc, dir / "data");
  const SplitPlan plan = generate_splits(m, 5, 0.2, 3);
  trainer::TrainConfig cfg;
  cfg.variant = trainer::Variant::v6;
  cfg.lr = 1e-3;
  cfg.batch_size = 4;
  cfg.max_epochs = 5;
  cfg.patience = 3;
  cfg.base_width = 4;
  cfg.num_stages = 3;
  cfg.seed = 9;
  const auto a = trainer::run_cell(m, plan, 0, cfg, dir / "run_a");
  const auto b = trainer::run_cell(m, plan, 0, cfg, dir / "run_b");
  double worst = std::abs(a.metrics.mean_dsc - b.metrics.mean_dsc);
  worst = std::max(worst, std::abs(a.metrics.mean_iou - b.metrics.mean_iou));
  worst = std::max(worst, std::abs(a.val_mean_dsc - b.val_mean_dsc));
  for (const auto& [c, s] : a.metrics.per_class) {
    worst = std::max(worst, std::abs(s.dsc - b.metrics.per_class.at(c).dsc));
    worst = std::max(worst, std::abs(s.iou - b.metrics.per_class.at(c).iou));
  }
  v.require(worst <= 1e-6, "reports differ by " + std::to_string(worst));
  v.require(a.best_epoch == b.best_epoch && a.config_fingerprint == b.config_fingerprint, "report identity differs");

  using segnet::PcdMode;
  using trainer::PhaseSource;
  const std::array<std::tuple<PcdMode, PhaseSource, bool>, 8> table{{
      {PcdMode::none, PhaseSource::none, false},
      {PcdMode::none, PhaseSource::none, true},
      {PcdMode::basic, PhaseSource::predicted_file, false},
      {PcdMode::gated, PhaseSource::predicted_file, false},
      {PcdMode::gated, PhaseSource::predicted_file, true},
      {PcdMode::basic, PhaseSource::ground_truth, false},
      {PcdMode::gated, PhaseSource::ground_truth, false},
      {PcdMode::gated, PhaseSource::ground_truth, true},
  }};
  int wrong_rows = 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& s = trainer::variant_table()[i];
    const auto& [mode, source, pseudo] = table[i];
    wrong_rows += !(static_cast<std::size_t>(s.variant) == i && s.pcd_mode == mode && s.phase_source == source &&
                    s.use_pseudo == pseudo);
  }
  v.require(trainer::variant_table().size() == 8 && wrong_rows == 0, std::to_string(wrong_rows) + " variant rows differ");
  v.detail << "max report difference " << worst << "; 8/8 variant rows match";
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria{
      {"AC1", ac1}, {"AC2", ac2}, {"AC3", ac3}, {"AC4", ac4}, {"AC5", ac5},
      {"AC6", ac6}, {"AC7", ac7}, {"AC8", ac8}, {"AC9", ac9}};
  const std::set<std::string> only(argv + 1, argv + argc);
  fs::create_directories(work_root());
  int failures = 0;
  for (const auto& [id, check] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      check(v);
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (id == "AC1") v.require(secs < 10, "runtime " + fmt(secs, 1) + " s >= 10 s");
    if (id == "AC2") v.require(secs < 30, "runtime " + fmt(secs, 1) + " s >= 30 s");
    if (id == "AC4") v.require(secs <= 1800, "runtime " + fmt(secs, 1) + " s > 30 min");
    failures += !v.pass;
    std::cout << (v.pass ? "PASS " : "FAIL ") << id << ": " << v.detail.str() << " [" << fmt(secs, 1) << " s]"
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}

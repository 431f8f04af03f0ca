#include "phaseseg/core/splits.hpp"

#include "phaseseg/error.hpp"
#include "phaseseg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace phaseseg {

namespace fs = std::filesystem;
using nlohmann::json;

SplitPlan generate_splits(std::vector<std::string> videos, int n_folds, double val_fraction,
                          std::uint64_t seed) {
  if (n_folds < 2) fail(ErrorKind::invalid_argument, "n_folds must be >= 2");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    fail(ErrorKind::invalid_argument, "val_fraction must lie in (0, 1)");
  }
  std::sort(videos.begin(), videos.end());
  videos.erase(std::unique(videos.begin(), videos.end()), videos.end());
  if (static_cast<int>(videos.size()) < n_folds) {
    fail(ErrorKind::invalid_argument, "need at least " + std::to_string(n_folds) +
                                          " videos for " + std::to_string(n_folds) +
                                          " folds, have " + std::to_string(videos.size()));
  }

  std::vector<std::string> order = videos;
  Rng test_rng(derive_seed(seed, "split.test"));
  test_rng.shuffle(order.begin(), order.end());

  SplitPlan plan;
  plan.seed = seed;
  plan.val_fraction = val_fraction;
  const std::size_t n = order.size();
  const std::size_t base = n / static_cast<std::size_t>(n_folds);
  const std::size_t extra = n % static_cast<std::size_t>(n_folds);
  std::size_t cursor = 0;
  for (int k = 0; k < n_folds; ++k) {
    const std::size_t size = base + (static_cast<std::size_t>(k) < extra ? 1 : 0);
    Fold fold;
    fold.test_videos.assign(order.begin() + static_cast<long>(cursor),
                            order.begin() + static_cast<long>(cursor + size));
    cursor += size;
    std::sort(fold.test_videos.begin(), fold.test_videos.end());

    std::vector<std::string> rest;
    std::set_difference(videos.begin(), videos.end(), fold.test_videos.begin(),
                        fold.test_videos.end(), std::back_inserter(rest));
    Rng val_rng(derive_seed(seed, "split.val." + std::to_string(k)));
    val_rng.shuffle(rest.begin(), rest.end());
    // Small epsilon so products like 0.2 * 45 do not round up an extra video.
    std::size_t n_val =
        static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(rest.size()) - 1e-9));
    if (rest.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, rest.size() - 1);
    else n_val = 0;
    fold.val_videos.assign(rest.begin(), rest.begin() + static_cast<long>(n_val));
    fold.train_videos.assign(rest.begin() + static_cast<long>(n_val), rest.end());
    std::sort(fold.val_videos.begin(), fold.val_videos.end());
    std::sort(fold.train_videos.begin(), fold.train_videos.end());
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

SplitPlan generate_splits(const DatasetManifest& manifest, int n_folds, double val_fraction,
                          std::uint64_t seed) {
  return generate_splits(manifest.video_ids(), n_folds, val_fraction, seed);
}

void validate_split(const SplitPlan& plan, const std::vector<std::string>& videos) {
  const std::set<std::string> all(videos.begin(), videos.end());
  std::set<std::string> tested;
  for (std::size_t k = 0; k < plan.folds.size(); ++k) {
    const Fold& fold = plan.folds[k];
    std::set<std::string> in_fold;
    std::size_t count = 0;
    for (const auto* group : {&fold.test_videos, &fold.train_videos, &fold.val_videos}) {
      for (const auto& v : *group) {
        ++count;
        if (!all.count(v)) {
          fail(ErrorKind::validation, "fold " + std::to_string(k) + " references unknown video " + v);
        }
        in_fold.insert(v);
      }
    }
    if (in_fold.size() != count) {
      fail(ErrorKind::validation, "fold " + std::to_string(k) + " assigns a video twice");
    }
    if (in_fold.size() != all.size()) {
      fail(ErrorKind::validation, "fold " + std::to_string(k) + " does not cover every video");
    }
    for (const auto& v : fold.test_videos) {
      if (!tested.insert(v).second) {
        fail(ErrorKind::validation, "video " + v + " is a test video in more than one fold");
      }
    }
  }
  if (tested.size() != all.size()) {
    fail(ErrorKind::validation, "test sets do not jointly cover every video");
  }
}

json split_to_json(const SplitPlan& plan) {
  json folds = json::array();
  for (const auto& f : plan.folds) {
    folds.push_back({{"test_videos", f.test_videos},
                     {"train_videos", f.train_videos},
                     {"val_videos", f.val_videos}});
  }
  return {{"seed", plan.seed}, {"val_fraction", plan.val_fraction}, {"folds", folds}};
}

SplitPlan split_from_json(const json& j) {
  SplitPlan plan;
  try {
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.val_fraction = j.value("val_fraction", 0.2);
    for (const auto& f : j.at("folds")) {
      plan.folds.push_back({f.at("test_videos").get<std::vector<std::string>>(),
                            f.at("train_videos").get<std::vector<std::string>>(),
                            f.at("val_videos").get<std::vector<std::string>>()});
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("split plan: ") + e.what());
  }
  return plan;
}

void save_split(const SplitPlan& plan, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write " + path.string());
  out << split_to_json(plan).dump(2) << '\n';
}

SplitPlan load_split(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open split plan " + path.string());
  try {
    return split_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::parse, path.string() + ": " + e.what());
  }
}

}  // namespace phaseseg

#include "phaseseg/cli/cli.hpp"
#include "phaseseg/core/manifest.hpp"
#include "phaseseg/trainer/report.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
  json result() const { return json::parse(out); }
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "phaseseg");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = phaseseg::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("phaseseg_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::string> tiny_synth(const fs::path& out, const std::string& seed = "3") {
  return {"synthgen", "--out", out.string(), "--videos", "4", "--frames", "120", "--tools", "2",
          "--phases", "2", "--width", "16", "--height", "16", "--downscale", "1", "--stride", "30",
          "--seed", seed, "--json"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("synthgen is deterministic in its seed") {
  const auto dir = scratch("synth");
  const auto a = run(tiny_synth(dir / "a"));
  const auto b = run(tiny_synth(dir / "b"));
  const auto c = run(tiny_synth(dir / "c", "4"));
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(a.result()["frames"] == 16);
  CHECK(slurp(dir / "a" / "images" / "video_001" / "000030.png") ==
        slurp(dir / "b" / "images" / "video_001" / "000030.png"));
  CHECK(slurp(dir / "a" / "images" / "video_001" / "000030.png") !=
        slurp(dir / "c" / "images" / "video_001" / "000030.png"));
}

TEST_CASE("eval of a label directory against itself is perfect") {
  const auto dir = scratch("eval");
  REQUIRE(run(tiny_synth(dir / "ds")).code == 0);
  const auto labels = (dir / "ds" / "labels").string();
  const auto r = run({"eval", "--pred", labels, "--gt", labels, "--manifest", (dir / "ds" / "manifest.json").string(),
                      "--json"});
  REQUIRE(r.code == 0);
  CHECK(r.result()["mean_dsc"] == 1.0);
  CHECK(r.result()["mean_iou"] == 1.0);
  CHECK(r.result()["frames"] == 16);
}

TEST_CASE("pseudo with the perfect oracle fills every unlabeled frame near an anchor") {
  const auto dir = scratch("pseudo");
  auto synth = tiny_synth(dir / "ds");
  synth.insert(synth.end(), {"--label-every", "2"});
  REQUIRE(run(synth).code == 0);
  const auto r = run({"pseudo", "--manifest", (dir / "ds" / "manifest.json").string(), "--out",
                      (dir / "ps").string(), "--segmenter", "oracle:perfect", "--stride", "30", "--json"});
  REQUIRE(r.code == 0);
  CHECK(r.result()["anchors"] == 8);
  CHECK(!r.result()["exclusion_reasons"].contains("below_min_source_iou"));
  const auto m = phaseseg::load_manifest(dir / "ps" / "manifest.json");
  int pseudo = 0;
  for (const auto& f : m.frames)
    if (f.provenance == phaseseg::Provenance::pseudo) ++pseudo;
  CHECK(pseudo == r.result()["pseudo_frames"].get<int>());
  CHECK(pseudo == 8);
}

TEST_CASE("train then eval --run yields the variant row") {
  const auto dir = scratch("train");
  REQUIRE(run(tiny_synth(dir / "ds")).code == 0);
  const auto r = run({"train", "--manifest", (dir / "ds" / "manifest.json").string(), "--out", (dir / "runs").string(),
                      "--variant", "v6", "--n-folds", "2", "--folds", "0", "--max-epochs", "2", "--patience", "1",
                      "--base-width", "4", "--num-stages", "2", "--batch-size", "4", "--quiet", "--json"});
  REQUIRE(r.code == 0);
  CHECK(r.result()["reports"].size() == 1);
  const auto e = run({"eval", "--run", (dir / "runs" / "default").string(), "--json"});
  REQUIRE(e.code == 0);
  const auto rows = phaseseg::trainer::parse_table(e.result()["table"].get<std::string>());
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].variant == phaseseg::trainer::Variant::v6);
  CHECK(rows[0].conditioning == "Gated");
  CHECK(rows[0].phase_source == "Ground Truth");

  const auto again = run({"train", "--manifest", (dir / "ds" / "manifest.json").string(), "--out",
                          (dir / "runs").string(), "--variant", "v6", "--n-folds", "2", "--folds", "0",
                          "--max-epochs", "2", "--patience", "1", "--base-width", "4", "--num-stages", "2",
                          "--batch-size", "4", "--quiet", "--json"});
  REQUIRE(again.code == 0);
  CHECK(again.result()["reports"] == r.result()["reports"]);
}

TEST_CASE("config files, flag precedence and error lines") {
  const auto dir = scratch("config");
  {
    std::ofstream(dir / "cfg.json") << R"({"synthgen": {"videos": 4, "frames": 120, "tools": 2, "phases": 2,
      "width": 16, "height": 16, "downscale": 1, "stride": 30, "seed": 3}})";
    std::ofstream(dir / "bad.json") << R"({"videos": 4, "learning_rate": 1})";
  }
  const auto a = run({"synthgen", "--config", (dir / "cfg.json").string(), "--out", (dir / "a").string(), "--json"});
  REQUIRE(a.code == 0);
  CHECK(a.result()["videos"] == 4);
  const auto b = run({"synthgen", "--config", (dir / "cfg.json").string(), "--videos", "5", "--out",
                      (dir / "b").string(), "--json"});
  REQUIRE(b.code == 0);
  CHECK(b.result()["videos"] == 5);

  const auto bad = run({"synthgen", "--config", (dir / "bad.json").string(), "--out", (dir / "c").string()});
  CHECK(bad.code == 1);
  CHECK(bad.err.rfind("error: validation: synthgen:", 0) == 0);
  CHECK(bad.err.find("learning_rate") != std::string::npos);

  const auto variant = run({"train", "--manifest", (dir / "a" / "manifest.json").string(), "--variant", "v9"});
  CHECK(variant.code == 1);
  CHECK(variant.err.rfind("error: invalid_argument: train:", 0) == 0);

  const auto missing = run({"cooccur", "--manifest", (dir / "nowhere.json").string()});
  CHECK(missing.code == 1);
  CHECK(missing.err.rfind("error: ", 0) == 0);

  CHECK(run({"split"}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("resume returns the stored result for an identical configuration") {
  const auto dir = scratch("resume");
  auto args = tiny_synth(dir / "ds");
  const auto first = run(args);
  REQUIRE(first.code == 0);
  args.push_back("--resume");
  const auto stamp = fs::last_write_time(dir / "ds" / "manifest.json");
  const auto second = run(args);
  REQUIRE(second.code == 0);
  CHECK(fs::last_write_time(dir / "ds" / "manifest.json") == stamp);
  auto a = first.result(), b = second.result();
  CHECK(a == b);
}

TEST_CASE("ambiguous pair worlds through the command line") {
  const auto dir = scratch("ambiguous");
  auto args = tiny_synth(dir / "ds");
  args.push_back("--ambiguous-pair");
  const auto r = run(args);
  REQUIRE(r.code == 0);
  CHECK(r.result()["world"]["ambiguous_pair"] == true);
  const auto co = run({"cooccur", "--manifest", (dir / "ds" / "manifest.json").string(), "--json"});
  REQUIRE(co.code == 0);
  const auto values = co.result()["values"];
  // Each phase shows exactly one of the two look-alike tools.
  for (const auto& row : values) CHECK((row[0].get<double>() == 0.0) != (row[1].get<double>() == 0.0));
}

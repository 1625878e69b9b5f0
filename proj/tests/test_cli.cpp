#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

const std::string kBin = TSXPLAIN_BIN;
const fs::path kRoot = "/tmp/tsx_cli_test";

int run(const std::string& args) {
  const std::string cmd = kBin + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

/// Shared tiny dataset and checkpoint, built once.
struct Fixture {
  fs::path data = kRoot / "data";
  fs::path train = kRoot / "train";
  Fixture() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    REQUIRE(run("synth --n 40 --T 40 --seed 5 --out " + data.string()) == 0);
    REQUIRE(run("train --data " + (data / "bundle.json").string() +
                " --model resnet --epochs 2 --batch 8 --seed 1 --out " +
                train.string()) == 0);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("help and bad usage exit codes") {
  CHECK(run("--help") == 0);
  CHECK(run("synth --help") == 0);
  CHECK(run("definitely-not-a-command") == 2);
  CHECK(run("") == 2);  // a subcommand is required
}

TEST_CASE("synth rejects invalid parameters with exit 2") {
  CHECK(run("synth --n 0 --out " + (kRoot / "bad").string()) == 2);
  CHECK(run("synth --n 10 --anomaly-rate 2.0 --out " + (kRoot / "bad").string()) == 2);
}

TEST_CASE("synth output is byte-identical across reruns") {
  fs::path a = kRoot / "synth_a", b = kRoot / "synth_b";
  REQUIRE(run("synth --n 20 --T 30 --seed 7 --out " + a.string()) == 0);
  REQUIRE(run("synth --n 20 --T 30 --seed 7 --out " + b.string()) == 0);
  CHECK(slurp(a / "bundle.json") == slurp(b / "bundle.json"));
  CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
  // rerunning into the same directory leaves every artifact byte-identical
  const std::string before = slurp(a / "resolved_config.json");
  REQUIRE(run("synth --n 20 --T 30 --seed 7 --out " + a.string()) == 0);
  CHECK(slurp(a / "resolved_config.json") == before);
  // wall-clock data is isolated in run_info.json
  CHECK(fs::exists(a / "run_info.json"));
}

TEST_CASE("train errors: unknown model 2, missing data 3") {
  auto& f = fixture();
  CHECK(run("train --data " + (f.data / "bundle.json").string() +
            " --model perceptron --out " + (kRoot / "x").string()) == 2);
  CHECK(run("train --data /tmp/no_such_bundle_tsx.json --out " +
            (kRoot / "x").string()) == 3);
}

TEST_CASE("explain writes heatmaps; weighted alpha 1 reproduces the resnet map") {
  auto& f = fixture();
  fs::path out = kRoot / "explain";
  REQUIRE(run("explain --checkpoint " + (f.train / "checkpoint.json").string() +
              " --data " + (f.data / "bundle.json").string() +
              " --sample-id 0 --fusion weighted --alpha 1.0 --out " +
              out.string()) == 0);
  nlohmann::json r, fused;
  std::ifstream(out / "heatmap_resnet.json") >> r;
  std::ifstream(out / "heatmap_fused.json") >> fused;
  const auto rv = r.at("values").get<std::vector<double>>();
  const auto fv = fused.at("values").get<std::vector<double>>();
  REQUIRE(rv.size() == fv.size());
  for (size_t i = 0; i < rv.size(); ++i)
    CHECK(fv[i] == doctest::Approx(rv[i]).epsilon(1e-9));
  CHECK(fused.at("strategy") == "weighted");
  CHECK(fs::exists(out / "report.md"));
  CHECK(fs::exists(out / "report.json"));

  CHECK(run("explain --checkpoint " + (f.train / "checkpoint.json").string() +
            " --data " + (f.data / "bundle.json").string() +
            " --sample-id 9999 --out " + (kRoot / "x").string()) == 3);
}

TEST_CASE("eval emits metrics and faithfulness csv") {
  auto& f = fixture();
  fs::path out = kRoot / "eval";
  REQUIRE(run("eval --checkpoint " + (f.train / "checkpoint.json").string() +
              " --data " + (f.data / "bundle.json").string() +
              " --max-samples 3 --out " + out.string()) == 0);
  nlohmann::json m;
  std::ifstream(out / "metrics.json") >> m;
  CHECK(m.at("task") == "classification");
  CHECK(m.at("accuracy").get<double>() >= 0.0);
  CHECK(m.at("accuracy").get<double>() <= 1.0);
  CHECK(m.contains("deletion"));
  const std::string csv = slurp(out / "faithfulness.csv");
  CHECK(csv.find("fraction") != std::string::npos);

  CHECK(run("eval --checkpoint /tmp/no_such_ckpt_tsx.json --data " +
            (f.data / "bundle.json").string() + " --out " +
            (kRoot / "x").string()) == 3);
}

TEST_CASE("config file and environment variables feed defaults") {
  fs::path cfg = kRoot / "synth.ini";
  {
    std::ofstream f(cfg);
    f << "[synth]\nn=15\nT=30\nseed=3\n";
  }
  fs::path out = kRoot / "synth_cfg";
  REQUIRE(run("--config " + cfg.string() + " synth --out " + out.string()) == 0);
  nlohmann::json j;
  std::ifstream(out / "resolved_config.json") >> j;
  CHECK(j.at("n") == 15);
  CHECK(j.at("seed") == 3);

  // flags beat the config file
  fs::path out2 = kRoot / "synth_cfg2";
  REQUIRE(run("--config " + cfg.string() + " synth --n 25 --out " +
              out2.string()) == 0);
  nlohmann::json j2;
  std::ifstream(out2 / "resolved_config.json") >> j2;
  CHECK(j2.at("n") == 25);

  // environment variable fills in when no flag is given
  fs::path out3 = kRoot / "synth_env";
  const std::string cmd = "TSXPLAIN_SEED=11 " + kBin + " synth --n 12 --T 30 --out " +
                          out3.string() + " > /dev/null 2>&1";
  REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
  nlohmann::json j3;
  std::ifstream(out3 / "resolved_config.json") >> j3;
  CHECK(j3.at("seed") == 11);
}

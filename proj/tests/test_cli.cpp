// End-to-end checks of the camo binary: every verb runs against a tiny
// synthetic pipeline in a scratch directory.

#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

const std::string kCli = CAMO_CLI_PATH;

int run(const std::string& args, const std::string& log = "") {
  std::string cmd = kCli + " " + args;
  if (!log.empty()) cmd += " >" + log + " 2>&1";
  return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), {});
}

// per-section scratch dir, wiped at acquisition
fs::path fresh(const std::string& name) {
  const fs::path root = fs::path("cli_scratch") / name;
  fs::remove_all(root);
  fs::create_directories(root);
  return root;
}

}  // namespace

TEST_CASE("synth is deterministic and n=0 succeeds") {
  const fs::path root = fresh("synth");
  auto p = [&](const char* rel) { return (root / rel).string(); };

  REQUIRE(run("synth --n 6 --seed 11 --size 48 --out " + p("a")) == 0);
  REQUIRE(run("synth --n 6 --seed 11 --size 48 --out " + p("b")) == 0);
  for (int i = 0; i < 6; ++i) {
    char stem[16];
    std::snprintf(stem, sizeof stem, "%06d", i);
    CHECK(slurp(root / "a" / "labels" / (std::string(stem) + ".txt")) ==
          slurp(root / "b" / "labels" / (std::string(stem) + ".txt")));
    CHECK(slurp(root / "a" / "images" / (std::string(stem) + ".png")) ==
          slurp(root / "b" / "images" / (std::string(stem) + ".png")));
  }
  CHECK(fs::exists(root / "a" / "manifest.json"));

  REQUIRE(run("synth --n 0 --seed 1 --out " + p("empty")) == 0);
  CHECK(fs::exists(root / "empty" / "manifest.json"));
}

TEST_CASE("full tiny pipeline: train, eval, patch, patch-detector, sweep, report") {
  const fs::path root = fresh("pipeline");
  auto p = [&](const char* rel) { return (root / rel).string(); };

  REQUIRE(run("synth --n 24 --seed 3 --size 48 --out " + p("train")) == 0);
  REQUIRE(run("synth --n 8 --seed 4 --size 48 --out " + p("test")) == 0);

  // enough steps for a usable (nonzero-baseline) toy detector
  REQUIRE(run("train-detector --data " + p("train") + " --out " + p("det") +
              " --seed 5 --epochs 150 --batch 4 --input-size 48 --grid 6",
              p("train_det.log")) == 0);
  REQUIRE(fs::exists(root / "det" / "weights.camw"));
  REQUIRE(fs::exists(root / "det" / "loss.csv"));
  REQUIRE(fs::exists(root / "det" / "manifest.json"));

  REQUIRE(run("eval --weights " + p("det/weights.camw") + " --data " +
              p("test") + " --out " + p("eval") + " --seed 6 --boot 50",
              p("eval.log")) == 0);
  const std::string csv = slurp(root / "eval" / "eval.csv");
  CHECK(csv.find("class,precision,recall,f1,sigma") != std::string::npos);
  CHECK(csv.find("mean,") != std::string::npos);

  {
    std::ofstream os(root / "exp.cfg");
    os << "name tiny_patch\nloss obj\nsize 0.3\nalpha 1.0\ngray false\n"
          "init random\nnoise 0.05\nepochs 2\nseed 7\npatch_pixels 12\n";
  }
  REQUIRE(run("train-patch --weights " + p("det/weights.camw") + " --data " +
              p("train") + " --config " + p("exp.cfg") + " --out " +
              p("patch") + " --smoke",
              p("train_patch.log")) == 0);
  REQUIRE(fs::exists(root / "patch" / "tiny_patch.png"));
  REQUIRE(fs::exists(root / "patch" / "tiny_patch.cfg"));

  REQUIRE(run("train-patch-detector --data " + p("train") + " --patch-dir " +
              p("patch") + " --out " + p("pdet") +
              " --seed 8 --epochs 2 --batch 4",
              p("train_pdet.log")) == 0);
  REQUIRE(fs::exists(root / "pdet" / "weights.camw"));

  REQUIRE(run("apply --data " + p("test") + " --patch " +
              p("patch/tiny_patch.png") + " --out " + p("applied") +
              " --seed 9 --alpha 0.5",
              p("apply.log")) == 0);
  CHECK(fs::exists(root / "applied" / "images" / "000000.png"));
  CHECK(fs::exists(root / "applied" / "jitter" / "000000.txt"));

  REQUIRE(run("sweep --weights " + p("det/weights.camw") +
              " --patch-detector " + p("pdet/weights.camw") + " --patch-dir " +
              p("patch") + " --data " + p("test") + " --out " + p("sweep") +
              " --seed 10",
              p("sweep.log")) == 0);
  const std::string sweep_csv = slurp(root / "sweep" / "sweep.csv");
  CHECK(sweep_csv.find("tiny_patch") != std::string::npos);

  REQUIRE(run("report --sweep " + p("sweep/sweep.csv") + " --out " +
              p("report"),
              p("report.log")) == 0);
  for (const char* f :
       {"bars.svg", "scatter_score_size.svg", "scatter_score_alpha.svg",
        "scatter_reduction_size.svg", "scatter_reduction_alpha.svg"})
    CHECK(fs::exists(root / "report" / f));
}

TEST_CASE("alpha zero patch training warns and keeps the patch") {
  const fs::path root = fresh("alpha0");
  auto p = [&](const char* rel) { return (root / rel).string(); };

  REQUIRE(run("synth --n 4 --seed 3 --size 48 --out " + p("train")) == 0);
  REQUIRE(run("train-detector --data " + p("train") + " --out " + p("det") +
              " --seed 5 --epochs 1 --batch 4 --input-size 48 --grid 6",
              p("d.log")) == 0);
  {
    std::ofstream os(root / "zero.cfg");
    os << "name zero\nloss obj\nsize 0.3\nalpha 0.0\ninit gray_flat\n"
          "epochs 2\nseed 7\npatch_pixels 8\n";
  }
  REQUIRE(run("train-patch --weights " + p("det/weights.camw") + " --data " +
              p("train") + " --config " + p("zero.cfg") + " --out " + p("zp") +
              " --smoke",
              p("zp.log")) == 0);
  CHECK(slurp(root / "zp.log").find("alpha") != std::string::npos);
  CHECK(fs::exists(root / "zp" / "zero.png"));
}

TEST_CASE("missing inputs fail with a named path and nonzero exit") {
  const fs::path root = fresh("missing");
  auto p = [&](const char* rel) { return (root / rel).string(); };
  const int rc = run("eval --weights missing.camw --data nowhere --out " +
                         p("x") + " --seed 1",
                     p("err.log"));
  CHECK(rc != 0);
  CHECK(slurp(root / "err.log").find("missing.camw") != std::string::npos);
}

TEST_CASE("tile and stats run on a dataset directory") {
  const fs::path root = fresh("tilestats");
  auto p = [&](const char* rel) { return (root / rel).string(); };

  REQUIRE(run("synth --n 3 --seed 12 --size 64 --out " + p("big")) == 0);
  REQUIRE(run("tile --data " + p("big") + " --window 32 --overlap 0 --out " +
              p("tiles"),
              p("tile.log")) == 0);
  int count = 0;
  for (const auto& e : fs::directory_iterator(root / "tiles" / "images"))
    count += e.path().extension() == ".png";
  CHECK(count == 12);  // 64/32 -> 4 tiles per image
  REQUIRE(run("stats --data " + p("tiles") + " --out " + p("st"),
              p("stats.log")) == 0);
  CHECK(slurp(root / "stats.log").find("labels_per_image_median") !=
        std::string::npos);
  CHECK(fs::exists(root / "st" / "stats.csv"));
}

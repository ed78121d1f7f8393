// Command-line surface: config round-trips, exit codes, artifact layout, and
// bitwise determinism, driven through the installed binary as a subprocess.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "gs/config.hpp"

using namespace gs;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string output;  // stdout + stderr interleaved
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(GSADAPT_BIN) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult r;
  char buf[512];
  while (fgets(buf, sizeof(buf), pipe)) r.output += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

// Shared workspace with a tiny dataset and a 2-step checkpoint, built once.
struct Fixture {
  fs::path root;
  std::string cfg, data, run_dir;

  Fixture() {
    root = fs::temp_directory_path() / "gs_cli_test";
    fs::remove_all(root);
    fs::create_directories(root);
    cfg = (root / "tiny.json").string();
    std::ofstream(cfg) << R"({
      "data": {"scenes": 1, "views": 3, "targets": 2, "width": 24, "height": 24},
      "encoder": {"base_width": 8, "attn_blocks": 1, "depth_planes": 4},
      "igr": {"d_model": 32, "heads": 2, "blocks": 1},
      "train": {"steps": 2, "log_every": 1, "checkpoint_every": 2}
    })";
    data = (root / "data").string();
    run_dir = (root / "run").string();
    RunResult g = run("--config " + cfg + " --seed 7 gen-data --out " + data);
    REQUIRE(g.code == 0);
    RunResult t = run("--config " + cfg + " train --data " + data + " --out " + run_dir);
    REQUIRE(t.code == 0);
  }
  std::string ckpt() const { return run_dir + "/checkpoint.gst"; }
};

Fixture& fx() {
  static Fixture f;
  return f;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_bytes(const fs::path& a, const fs::path& b) { return slurp(a) == slurp(b); }

}  // namespace

TEST_CASE("config: canonical serialization is idempotent") {
  const std::string once = config_to_json(AppConfig{});
  const std::string twice = config_to_json(config_from_json(once));
  CHECK(once == twice);
  // Unset threshold overrides are omitted rather than serialized as null.
  CHECK(once.find("fixed_tau_low") == std::string::npos);

  AppConfig c;
  c.n_scenes = 3;
  c.data.width = 48;
  c.pipe.cga.fixed_tau_low = 0.2;
  c.pipe.cga.fixed_tau_high = 0.8;
  c.pipe.raster.background = {0.1, 0.2, 0.3};
  c.train.lr = 5e-4;
  const std::string s1 = config_to_json(c);
  const std::string s2 = config_to_json(config_from_json(s1));
  CHECK(s1 == s2);
  AppConfig back = config_from_json(s1);
  CHECK(back.n_scenes == 3);
  CHECK(back.data.width == 48);
  CHECK(back.pipe.cga.fixed_tau_low == 0.2);
  CHECK(back.pipe.cga.fixed_tau_high == 0.8);
  CHECK(back.pipe.raster.background.z == 0.3);
  CHECK(back.train.lr == 5e-4);
}

TEST_CASE("config: unknown keys, sections, and bad types are rejected") {
  CHECK_THROWS_WITH_AS(config_from_json(R"({"data":{"bogus":1}})"),
                       doctest::Contains("data.bogus"), std::runtime_error);
  CHECK_THROWS_WITH_AS(config_from_json(R"({"nosuch":{}})"), doctest::Contains("nosuch"),
                       std::runtime_error);
  CHECK_THROWS_AS(config_from_json(R"({"train":{"lr":"fast"}})"), std::runtime_error);
  CHECK_THROWS_AS(config_from_json("not json"), std::runtime_error);
  CHECK_THROWS_AS(config_from_json(R"({"rasterizer":{"background":[1,2]}})"),
                  std::runtime_error);
}

TEST_CASE("help exits 0 and documents every subcommand; bad flags exit 2") {
  RunResult h = run("--help");
  CHECK(h.code == 0);
  for (const char* sub : {"gen-data", "train", "eval", "infer", "render", "inspect", "ablate"})
    CHECK(h.output.find(sub) != std::string::npos);
  for (const char* flag : {"--config", "--seed", "--threads"})
    CHECK(h.output.find(flag) != std::string::npos);

  CHECK(run("train --help").code == 0);
  CHECK(run("--no-such-flag").code == 2);
  CHECK(run("").code == 2);                  // missing subcommand
  CHECK(run("train --data x").code == 2);    // missing required --out
  CHECK(run("gen-data --out /tmp/gs_cli_x --views 0").code == 2);
}

TEST_CASE("gen-data: seeded generation is reproducible and sized as asked") {
  Fixture& f = fx();
  const fs::path again = f.root / "data_again";
  RunResult g = run("--config " + f.cfg + " --seed 7 gen-data --out " + again.string());
  REQUIRE(g.code == 0);
  size_t n_files = 0;
  for (const auto& e : fs::recursive_directory_iterator(f.data)) {
    if (!e.is_regular_file()) continue;
    ++n_files;
    const fs::path rel = fs::relative(e.path(), f.data);
    CHECK(same_bytes(e.path(), again / rel));
  }
  CHECK(n_files > 0);

  const fs::path three = f.root / "data3";
  REQUIRE(run("--config " + f.cfg + " gen-data --out " + three.string() + " --scenes 3").code ==
          0);
  size_t n_dirs = 0;
  for (const auto& e : fs::directory_iterator(three))
    if (e.is_directory()) ++n_dirs;
  CHECK(n_dirs == 3);
}

TEST_CASE("train: run directory holds metrics, checkpoint, and resolved config") {
  Fixture& f = fx();
  CHECK(fs::exists(f.run_dir + "/metrics.jsonl"));
  CHECK(fs::exists(f.run_dir + "/checkpoint.gst"));
  CHECK(fs::exists(f.run_dir + "/config.json"));
  const std::string metrics = slurp(f.run_dir + "/metrics.jsonl");
  CHECK(metrics.find("perceptual") != std::string::npos);
  CHECK(metrics.find("\"step\":1") != std::string::npos);
  // The stored config is canonical: loading and re-serializing it is identity.
  const std::string stored = slurp(f.run_dir + "/config.json");
  CHECK(stored == config_to_json(config_from_json(stored)));
}

TEST_CASE("eval: one metrics row per requested view count") {
  Fixture& f = fx();
  const std::string csv = (f.root / "eval.csv").string();
  RunResult r = run("--config " + f.cfg + " eval --checkpoint " + f.ckpt() + " --data " +
                    f.data + " --views 2,3 --out " + csv);
  REQUIRE(r.code == 0);
  const std::string body = slurp(csv);
  CHECK(body.find("views,psnr_db,gaussians") == 0);
  int rows = 0;
  for (char ch : body)
    if (ch == '\n') ++rows;
  CHECK(rows == 3);  // header + one row per view count
  CHECK(body.find("\n2,") != std::string::npos);
  CHECK(body.find("\n3,") != std::string::npos);
  // More views than the scenes carry is a data error.
  CHECK(run("--config " + f.cfg + " eval --checkpoint " + f.ckpt() + " --data " + f.data +
            " --views 4")
            .code == 3);
}

TEST_CASE("infer and render: PLY round-trip renders are bitwise identical") {
  Fixture& f = fx();
  const std::string ply = (f.root / "scene0.ply").string();
  const std::string rdir = (f.root / "renders").string();
  RunResult i = run("--config " + f.cfg + " infer --checkpoint " + f.ckpt() + " --scene " +
                    f.data + "/scene_000 --out-ply " + ply + " --render-dir " + rdir);
  REQUIRE(i.code == 0);
  CHECK(fs::exists(ply));
  CHECK(fs::exists(rdir + "/render_000.png"));
  CHECK(fs::exists(rdir + "/render_001.png"));

  const std::string png = (f.root / "re0.png").string();
  RunResult r = run("--config " + f.cfg + " render --ply " + ply + " --camera " + f.data +
                    "/scene_000/targets/cameras.json --index 0 --out-png " + png);
  REQUIRE(r.code == 0);
  CHECK(same_bytes(png, rdir + "/render_000.png"));

  RunResult bad = run("--config " + f.cfg + " render --ply " + ply + " --camera " + f.data +
                      "/scene_000/targets/cameras.json --index 9 --out-png " + png);
  CHECK(bad.code == 2);
}

TEST_CASE("infer: bitwise deterministic across runs and thread counts") {
  Fixture& f = fx();
  const std::string a = (f.root / "det_a").string(), b = (f.root / "det_b").string();
  for (const auto& [dir, threads] : {std::pair{a, "1"}, std::pair{b, "8"}}) {
    RunResult r = run("--config " + f.cfg + " --threads " + threads + " infer --checkpoint " +
                      f.ckpt() + " --scene " + f.data + "/scene_000 --out-ply " + dir +
                      ".ply --render-dir " + dir);
    REQUIRE(r.code == 0);
  }
  CHECK(same_bytes(a + ".ply", b + ".ply"));
  CHECK(same_bytes(fs::path(a) / "render_000.png", fs::path(b) / "render_000.png"));
  CHECK(same_bytes(fs::path(a) / "render_001.png", fs::path(b) / "render_001.png"));
}

TEST_CASE("inspect: per-stage score maps, density maps, and thresholds") {
  Fixture& f = fx();
  const std::string out = (f.root / "insp").string();
  RunResult r = run("--config " + f.cfg + " inspect --checkpoint " + f.ckpt() + " --scene " +
                    f.data + "/scene_000 --out-dir " + out);
  REQUIRE(r.code == 0);
  for (int k = 0; k < 3; ++k)
    for (int v = 0; v < 3; ++v) {
      char name[48];
      std::snprintf(name, sizeof(name), "/scores_stage%d_view%02d.png", k, v);
      CHECK(fs::exists(out + name));
      std::snprintf(name, sizeof(name), "/density_stage%d_view%02d.png", k, v);
      CHECK(fs::exists(out + name));
    }
  const std::string txt = slurp(out + "/thresholds.txt");
  CHECK(txt.find("stage 0: tau_low=") != std::string::npos);
  CHECK(txt.find("stage 2: tau_low=") != std::string::npos);
  CHECK(txt.find("n_after=") != std::string::npos);
}

TEST_CASE("train divergence exits 4 and removes partial outputs") {
  Fixture& f = fx();
  const std::string out = (f.root / "divrun").string();
  RunResult r = run("--config " + f.cfg + " train --data " + f.data + " --out " + out +
                    " --steps 3 --lr 1e18");
  CHECK(r.code == 4);
  CHECK(r.output.find("diverged") != std::string::npos);
  CHECK(!fs::exists(out));
}

TEST_CASE("config errors from the command line exit 3") {
  Fixture& f = fx();
  const std::string bad = (f.root / "bad.json").string();
  std::ofstream(bad) << R"({"data":{"bogus_key":1}})";
  RunResult r = run("--config " + bad + " train --data " + f.data + " --out " +
                    (f.root / "x").string());
  CHECK(r.code == 3);
  CHECK(r.output.find("bogus_key") != std::string::npos);
  CHECK(run("--config /nonexistent.json gen-data --out /tmp/gs_cli_y").code == 3);
  CHECK(run("--config " + f.cfg + " train --data /nonexistent_data --out " +
            (f.root / "y").string())
            .code == 3);
}

TEST_CASE("ablate: table artifacts with all four presets") {
  Fixture& f = fx();
  const std::string out = (f.root / "abl").string();
  RunResult r = run("--config " + f.cfg + " ablate --data " + f.data + " --out " + out +
                    " --views 2");
  REQUIRE(r.code == 0);
  const std::string csv = slurp(out + "/table.csv");
  for (const char* preset : {"vanilla", "rigid", "hyper", "full"}) {
    CHECK(csv.find(preset) != std::string::npos);
    CHECK(r.output.find(preset) != std::string::npos);
  }
  int rows = 0;
  for (char ch : csv)
    if (ch == '\n') ++rows;
  CHECK(rows == 5);  // header + four presets
  CHECK(fs::exists(out + "/table.txt"));
}

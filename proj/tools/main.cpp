// gsadapt: command-line surface for the sparse-view Gaussian pipeline.
// Subcommands: gen-data, train, eval, infer, render, inspect, ablate.
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric divergence.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "gs/checkpoint.hpp"
#include "gs/config.hpp"
#include "gs/encoder.hpp"
#include "gs/geometry.hpp"
#include "gs/init_gaussians.hpp"
#include "gs/ops.hpp"
#include "gs/pipeline.hpp"
#include "gs/ply_io.hpp"
#include "gs/png_io.hpp"
#include "gs/rasterizer.hpp"
#include "gs/scene.hpp"
#include "gs/scene_gen.hpp"
#include "gs/train.hpp"

namespace fs = std::filesystem;
using namespace gs;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Removes everything this command created unless commit() is reached, so a
// failed run leaves no partial outputs behind. Only paths that did not exist
// beforehand are ever deleted.
class ArtifactGuard {
 public:
  void make_dir(const fs::path& dir) {
    if (!fs::exists(dir)) {
      dirs_.push_back(dir);
      fs::create_directories(dir);
    }
  }
  void track_file(const fs::path& f) {
    if (!fs::exists(f)) files_.push_back(f);
  }
  void commit() { committed_ = true; }
  ~ArtifactGuard() {
    if (committed_) return;
    std::error_code ec;
    for (auto it = files_.rbegin(); it != files_.rend(); ++it) fs::remove(*it, ec);
    for (auto it = dirs_.rbegin(); it != dirs_.rend(); ++it) fs::remove_all(*it, ec);
  }

 private:
  std::vector<fs::path> files_, dirs_;
  bool committed_ = false;
};

std::string scene_dir_name(int64_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%03lld", static_cast<long long>(i));
  return buf;
}

// Loads every scene directory (sorted) under root; a single scene directory
// is also accepted directly.
std::vector<SceneSample> load_dataset(const std::string& root, bool with_targets) {
  if (fs::exists(fs::path(root) / "cameras.json")) return {load_scene(root, with_targets)};
  if (!fs::is_directory(root)) throw std::runtime_error("no such data directory: " + root);
  std::vector<std::string> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::exists(e.path() / "cameras.json")) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw std::runtime_error("no scenes found under " + root);
  std::vector<SceneSample> out;
  for (const std::string& d : dirs) out.push_back(load_scene(d, with_targets));
  return out;
}

PipelineParams load_checkpoint_params(const std::string& ckpt, const PipelineConfig& cfg,
                                      int64_t seed) {
  Rng rng(seed);
  PipelineParams p = PipelineParams::init(cfg, rng);
  load_params(p, load_tensors(ckpt));
  return p;
}

bool scene_has_targets(const std::string& dir) {
  return fs::exists(fs::path(dir) / "targets" / "cameras.json");
}

int cmd_gen_data(const AppConfig& cfg, const std::string& out) {
  ArtifactGuard guard;
  guard.make_dir(out);
  for (int64_t i = 0; i < cfg.n_scenes; ++i) {
    fs::path dir = fs::path(out) / scene_dir_name(i);
    guard.make_dir(dir);
    GeneratedScene scene = generate_scene(cfg.data, cfg.train.seed + i);
    save_scene(dir.string(), scene.sample);
  }
  guard.commit();
  std::printf("wrote %lld scenes to %s\n", static_cast<long long>(cfg.n_scenes), out.c_str());
  return 0;
}

int cmd_train(const AppConfig& cfg, const std::string& data, const std::string& out) {
  std::vector<SceneSample> dataset = load_dataset(data, true);
  ArtifactGuard guard;
  guard.make_dir(out);
  guard.track_file(fs::path(out) / "metrics.jsonl");
  guard.track_file(fs::path(out) / "checkpoint.gst");
  guard.track_file(fs::path(out) / "config.json");

  Rng rng(cfg.train.seed);
  PipelineParams p = PipelineParams::init(cfg.pipe, rng);
  save_config((fs::path(out) / "config.json").string(), cfg);
  TrainResult res = train(dataset, cfg.pipe, cfg.train, p, out);
  guard.commit();
  std::printf("trained %lld steps on %zu scenes: loss %.6f -> %.6f\n",
              static_cast<long long>(res.steps_run), dataset.size(), res.first_loss,
              res.final_loss);
  std::printf("checkpoint: %s/checkpoint.gst\n", out.c_str());
  return 0;
}

int cmd_eval(const AppConfig& cfg, const std::string& ckpt, const std::string& data,
             std::vector<int64_t> views, const std::string& out_csv) {
  if (views.empty()) views = {2};
  for (int64_t v : views)
    if (v < 1) throw UsageError("--views entries must be positive");

  std::vector<SceneSample> dataset = load_dataset(data, true);
  PipelineParams p = load_checkpoint_params(ckpt, cfg.pipe, cfg.train.seed);

  std::string csv = "views,psnr_db,gaussians,latency_ms,peak_memory_mb\n";
  std::printf("%8s %10s %12s %12s %14s\n", "views", "psnr_db", "gaussians", "latency_ms",
              "peak_mem_mb");
  for (int64_t v : views) {
    Metrics m = evaluate(dataset, p, cfg.pipe, v);
    const double mb = static_cast<double>(m.peak_memory_bytes) / (1024.0 * 1024.0);
    std::printf("%8lld %10.4f %12.1f %12.2f %14.2f\n", static_cast<long long>(v), m.psnr,
                static_cast<double>(m.gaussian_count), m.latency_ms, mb);
    char line[160];
    std::snprintf(line, sizeof(line), "%lld,%.6f,%lld,%.3f,%.3f\n", static_cast<long long>(v),
                  m.psnr, static_cast<long long>(m.gaussian_count), m.latency_ms, mb);
    csv += line;
  }
  if (!out_csv.empty()) {
    ArtifactGuard guard;
    guard.track_file(out_csv);
    std::ofstream f(out_csv);
    if (!f.good()) throw std::runtime_error("cannot write " + out_csv);
    f << csv;
    guard.commit();
  }
  return 0;
}

// Runs the pipeline on a scene's input views, exports the Gaussian set as a
// PLY, and renders the round-tripped PLY at the scene's target cameras (or
// input cameras when no targets exist). Rendering the re-imported file makes
// the PNGs a pure function of the PLY artifact, so `render` reproduces them
// bitwise from the same file.
int cmd_infer(const AppConfig& cfg, const std::string& ckpt, const std::string& scene_dir,
              const std::string& out_ply, const std::string& render_dir) {
  SceneSample scene = load_scene(scene_dir, scene_has_targets(scene_dir));
  PipelineParams p = load_checkpoint_params(ckpt, cfg.pipe, cfg.train.seed);

  ArtifactGuard guard;
  guard.track_file(out_ply);
  ForwardOutput out = forward_pipeline(scene, p, cfg.pipe, RunMode::infer);
  export_ply(out_ply, out.gaussians);

  if (!render_dir.empty()) {
    guard.make_dir(render_dir);
    GaussianSet g = import_ply(out_ply);
    const std::vector<View>& views = scene.targets.empty() ? scene.inputs : scene.targets;
    for (size_t t = 0; t < views.size(); ++t) {
      RenderOutput r = render(g, views[t].cam, cfg.pipe.raster);
      char name[32];
      std::snprintf(name, sizeof(name), "render_%03zu.png", t);
      write_png_rgb((fs::path(render_dir) / name).string(), hwc_to_chw(r.image));
    }
  }
  guard.commit();
  std::printf("exported %lld gaussians to %s\n", static_cast<long long>(out.gaussians.count()),
              out_ply.c_str());
  return 0;
}

int cmd_render(const AppConfig& cfg, const std::string& ply, const std::string& cam_path,
               int64_t index, const std::string& out_png) {
  GaussianSet g = import_ply(ply);
  std::vector<Camera> cams = load_cameras(cam_path);
  if (index < 0 || index >= static_cast<int64_t>(cams.size()))
    throw UsageError("--index out of range: camera file has " + std::to_string(cams.size()) +
                     " cameras");
  ArtifactGuard guard;
  guard.track_file(out_png);
  RenderOutput r = render(g, cams[index], cfg.pipe.raster);
  write_png_rgb(out_png, hwc_to_chw(r.image));
  guard.commit();
  std::printf("rendered %s camera %lld -> %s\n", ply.c_str(), static_cast<long long>(index),
              out_png.c_str());
  return 0;
}

// Dumps, per cascade stage: each view's relevance map, a density map of the
// projected Gaussian centers entering the stage, and a text file with the
// stage thresholds and counts.
int cmd_inspect(const AppConfig& cfg, const std::string& ckpt, const std::string& scene_dir,
                const std::string& out_dir) {
  SceneSample scene = load_scene(scene_dir, scene_has_targets(scene_dir));
  PipelineParams p = load_checkpoint_params(ckpt, cfg.pipe, cfg.train.seed);

  std::vector<Camera> cams;
  for (const View& v : scene.inputs) cams.push_back(v.cam);
  const int64_t H = cams[0].height, W = cams[0].width;

  ArtifactGuard guard;
  guard.make_dir(out_dir);

  EncodedViews enc = encode_views(p.enc, scene.inputs);
  GaussianSet g = init_gaussians(scene.inputs, enc, cfg.pipe.init);
  ViewWeights w = compute_view_weights(enc.tokens, p.cga);
  std::vector<Tensor> maps = score_maps(enc.tokens, w, p.cga, enc.qh, enc.qw, H, W);

  std::ofstream txt(fs::path(out_dir) / "thresholds.txt");
  for (int64_t k = 0; k < cfg.pipe.cga.stages; ++k) {
    Thresholds th = compute_thresholds(g, maps, cams, w, p.cga, cfg.pipe.cga, k);
    Tensor scores = gaussian_scores(g, maps, cams, w);

    for (size_t v = 0; v < cams.size(); ++v) {
      ProjectedPoints pp = project_points(g.mu, cams[v]);
      Tensor dens = Tensor::zeros({H, W});
      for (int64_t i = 0; i < pp.pix.dim(0); ++i) {
        if (pp.vis.data()[i] == 0) continue;
        const auto px = std::llround(pp.pix.data()[2 * i]);
        const auto py = std::llround(pp.pix.data()[2 * i + 1]);
        if (px < 0 || px >= W || py < 0 || py >= H) continue;
        dens.data()[py * W + px] += 1.0;
      }
      char name[48];
      std::snprintf(name, sizeof(name), "density_stage%lld_view%02zu.png",
                    static_cast<long long>(k), v);
      write_png_gray((fs::path(out_dir) / name).string(), dens);
      std::snprintf(name, sizeof(name), "scores_stage%lld_view%02zu.png",
                    static_cast<long long>(k), v);
      write_png_gray((fs::path(out_dir) / name).string(), reshape(maps[v], {H, W}));
    }

    const int64_t before = g.count();
    GaussianSet after_split =
        split(g, scores, th.tau_high, cfg.pipe.cga, p.cga, k, CgaMode::infer);
    const int64_t n_children = after_split.count() - before;
    Tensor padded = scores;
    if (n_children > 0)
      padded = concat_rows({scores, Tensor::full({n_children, 1}, 1e30)});
    GaussianSet pruned = prune(after_split, padded, th.tau_low, cfg.pipe.cga, CgaMode::infer);
    txt << "stage " << k << ": tau_low=" << th.tau_low.item()
        << " tau_high=" << th.tau_high.item() << " n_before=" << before
        << " n_split=" << n_children / cfg.pipe.cga.children
        << " n_removed=" << after_split.count() - pruned.count()
        << " n_after=" << pruned.count() << "\n";
    g = pruned;
  }
  guard.commit();
  std::printf("inspection artifacts in %s\n", out_dir.c_str());
  return 0;
}

int cmd_ablate(const AppConfig& cfg, const std::string& data, const std::string& out,
               int64_t views_in) {
  if (views_in < 1) throw UsageError("--views must be positive");
  std::vector<SceneSample> dataset = load_dataset(data, true);
  ArtifactGuard guard;
  guard.make_dir(out);
  std::vector<AblationRow> rows = ablate(dataset, dataset, cfg.pipe, cfg.train, views_in);
  const std::string table = format_ablation_table(rows, false);
  std::ofstream(fs::path(out) / "table.txt") << table;
  std::ofstream(fs::path(out) / "table.csv") << format_ablation_table(rows, true);
  guard.commit();
  std::fputs(table.c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gsadapt: feed-forward sparse-view Gaussian splatting"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  int64_t seed = 0;
  int threads = 0;
  app.add_option("--config", config_path, "JSON config file (flags override it)");
  auto* seed_opt = app.add_option("--seed", seed, "master random seed");
  app.add_option("--threads", threads, "worker thread count (0 = library default)");

  auto* gen = app.add_subcommand("gen-data", "generate synthetic posed scenes");
  std::string gen_out;
  int64_t gen_scenes = -1, gen_views = -1, gen_targets = -1, gen_res = -1;
  gen->add_option("--out", gen_out, "output dataset directory")->required();
  gen->add_option("--scenes", gen_scenes, "number of scenes");
  gen->add_option("--views", gen_views, "input views per scene");
  gen->add_option("--targets", gen_targets, "held-out target views per scene");
  gen->add_option("--res", gen_res, "square image resolution");

  auto* tr = app.add_subcommand("train", "train the pipeline on a dataset");
  std::string tr_data, tr_out;
  int64_t tr_steps = -1;
  double tr_lr = -1;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--out", tr_out, "run directory for metrics and checkpoint")->required();
  tr->add_option("--steps", tr_steps, "optimization steps");
  tr->add_option("--lr", tr_lr, "peak learning rate");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_data, ev_csv;
  std::vector<int64_t> ev_views;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--views", ev_views, "input view counts, e.g. 2,3,4")->delimiter(',');
  ev->add_option("--out", ev_csv, "also write rows as CSV");

  auto* in = app.add_subcommand("infer", "run the pipeline and export a PLY");
  std::string in_ckpt, in_scene, in_ply, in_rdir;
  in->add_option("--checkpoint", in_ckpt, "checkpoint file")->required();
  in->add_option("--scene", in_scene, "scene directory")->required();
  in->add_option("--out-ply", in_ply, "output PLY path")->required();
  in->add_option("--render-dir", in_rdir, "also render the scene's cameras here");

  auto* re = app.add_subcommand("render", "render a PLY from a camera");
  std::string re_ply, re_cam, re_png;
  int64_t re_index = 0;
  re->add_option("--ply", re_ply, "gaussian PLY file")->required();
  re->add_option("--camera", re_cam, "cameras.json file")->required();
  re->add_option("--index", re_index, "camera index within the file");
  re->add_option("--out-png", re_png, "output PNG path")->required();

  auto* ins = app.add_subcommand("inspect", "dump score maps, densities, thresholds");
  std::string ins_ckpt, ins_scene, ins_out;
  ins->add_option("--checkpoint", ins_ckpt, "checkpoint file")->required();
  ins->add_option("--scene", ins_scene, "scene directory")->required();
  ins->add_option("--out-dir", ins_out, "artifact directory")->required();

  auto* ab = app.add_subcommand("ablate", "train and compare ablation presets");
  std::string ab_data, ab_out;
  int64_t ab_views = 2;
  ab->add_option("--data", ab_data, "dataset directory")->required();
  ab->add_option("--out", ab_out, "output directory for tables")->required();
  ab->add_option("--views", ab_views, "input views for evaluation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    AppConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    if (seed_opt->count() > 0) cfg.train.seed = seed;  // flags win over the config file
#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#endif

    if (*gen) {
      if (gen_scenes == 0 || gen_views == 0 || gen_targets == 0 || gen_res == 0)
        throw UsageError("gen-data: counts and resolution must be positive");
      if (gen_scenes > 0) cfg.n_scenes = gen_scenes;
      if (gen_views > 0) cfg.data.n_inputs = gen_views;
      if (gen_targets > 0) cfg.data.n_targets = gen_targets;
      if (gen_res > 0) cfg.data.width = cfg.data.height = gen_res;
    }
    if (*tr) {
      if (tr_steps == 0) throw UsageError("train: --steps must be positive");
      if (tr_steps > 0) cfg.train.steps = tr_steps;
      if (tr_lr > 0) cfg.train.lr = tr_lr;
    }
    cfg.validate();

    if (*gen) return cmd_gen_data(cfg, gen_out);
    if (*tr) return cmd_train(cfg, tr_data, tr_out);
    if (*ev) return cmd_eval(cfg, ev_ckpt, ev_data, ev_views, ev_csv);
    if (*in) return cmd_infer(cfg, in_ckpt, in_scene, in_ply, in_rdir);
    if (*re) return cmd_render(cfg, re_ply, re_cam, re_index, re_png);
    if (*ins) return cmd_inspect(cfg, ins_ckpt, ins_scene, ins_out);
    if (*ab) return cmd_ablate(cfg, ab_data, ab_out, ab_views);
    throw UsageError("no subcommand given");
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}

#include "gs/train.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "gs/checkpoint.hpp"
#include "gs/ops.hpp"
#include "gs/optim.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gs {

void TrainConfig::validate() const {
  GS_CHECK(steps >= 1, "train: steps must be positive");
  GS_CHECK(lr > 0.0, "train: lr must be positive");
  GS_CHECK(weight_decay >= 0.0, "train: weight decay must be nonnegative");
  GS_CHECK(lambda_perc >= 0.0, "train: lambda_perc must be nonnegative");
  GS_CHECK(grad_accum >= 1, "train: grad_accum must be positive");
  GS_CHECK(log_every >= 1, "train: log_every must be positive");
  GS_CHECK(checkpoint_every >= 1, "train: checkpoint_every must be positive");
}

double psnr_from_mse(double mse) {
  if (mse <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

namespace {

struct StepEval {
  Tensor loss;     // mean over targets: mse + lambda * surrogate
  double mse = 0;  // mean over targets, for psnr reporting
};

StepEval sample_loss(const ForwardOutput& out, const SceneSample& sample, double lambda) {
  GS_CHECK(!sample.targets.empty(), "train: sample has no target views");
  Tensor total_mse, total_surr;
  for (size_t t = 0; t < sample.targets.size(); ++t) {
    Tensor tgt = chw_to_hwc(sample.targets[t].image);
    Tensor m = image_mse(out.renders[t], tgt);
    total_mse = total_mse.defined() ? add(total_mse, m) : m;
    if (lambda != 0.0) {
      Tensor s = image_grad_surrogate(out.renders[t], tgt);
      total_surr = total_surr.defined() ? add(total_surr, s) : s;
    }
  }
  const double inv_t = 1.0 / static_cast<double>(sample.targets.size());
  StepEval ev;
  Tensor mse_mean = scale(total_mse, inv_t);
  ev.mse = mse_mean.item();
  ev.loss = lambda != 0.0 ? add(mse_mean, scale(total_surr, lambda * inv_t)) : mse_mean;
  return ev;
}

}  // namespace

TrainResult train(const std::vector<SceneSample>& dataset, const PipelineConfig& cfg,
                  const TrainConfig& tcfg, PipelineParams& p, const std::string& out_dir) {
  cfg.validate();
  tcfg.validate();
  GS_CHECK(!dataset.empty(), "train: empty dataset");

  std::ofstream metrics_file;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    metrics_file.open(out_dir + "/metrics.jsonl");
    GS_CHECK(metrics_file.good(), "train: cannot write metrics in " + out_dir);
  }
  auto emit = [&](const std::string& line, TrainResult& res) {
    res.metric_lines.push_back(line);
    if (metrics_file.is_open()) metrics_file << line << "\n" << std::flush;
  };

  TrainResult res;
  json meta;
  meta["perceptual"] = "finite-difference gradient surrogate (no learned perceptual metric)";
  meta["lambda_perc"] = tcfg.lambda_perc;
  meta["steps"] = tcfg.steps;
  meta["lr"] = tcfg.lr;
  meta["weight_decay"] = tcfg.weight_decay;
  meta["seed"] = tcfg.seed;
  emit(meta.dump(), res);

  Adam opt(p.params(), tcfg.lr, tcfg.weight_decay);
  Rng rng(tcfg.seed);
  opt.zero_grad();
  bool stepped = false;  // an optimizer update has been applied

  for (int64_t step = 0; step < tcfg.steps; ++step) {
    const SceneSample& sample =
        dataset[dataset.size() == 1 ? 0 : rng.uniform_int(static_cast<int64_t>(dataset.size()))];

    Tape tape;
    double loss_val = 0, mse_val = 0;
    int64_t count = 0;
    try {
      TapeScope scope(tape);
      ForwardOutput out = forward_pipeline(sample, p, cfg, RunMode::train);
      StepEval ev = sample_loss(out, sample, tcfg.lambda_perc);
      loss_val = ev.loss.item();
      mse_val = ev.mse;
      count = out.gaussians.count();
      if (!std::isfinite(loss_val))
        throw NumericError("training diverged: non-finite loss at step " +
                           std::to_string(step));
      tape.backward(scale(ev.loss, 1.0 / static_cast<double>(tcfg.grad_accum)));
    } catch (const NumericError&) {
      throw;
    } catch (const std::exception& e) {
      // Divergence can surface as a non-finite parameter, or as a non-finite
      // value check tripping anywhere in the forward pass after an optimizer
      // step has already been applied (exploded-but-finite weights produce
      // non-finite activations). The same failure before any step is a
      // data/model problem and is rethrown unchanged.
      for (const auto& [name, t] : p.params())
        for (double v : t.data())
          if (!std::isfinite(v))
            throw NumericError("training diverged: non-finite parameter " + name + " at step " +
                               std::to_string(step) + " (" + e.what() + ")");
      if (stepped && std::string(e.what()).find("non-finite") != std::string::npos)
        throw NumericError("training diverged at step " + std::to_string(step) + ": " + e.what());
      throw;
    }

    // Anneal over steps-1 so the final step runs at exactly zero.
    const double lr_now =
        tcfg.steps > 1 ? cosine_lr(step, tcfg.steps - 1, tcfg.lr) : tcfg.lr;
    if ((step + 1) % tcfg.grad_accum == 0 || step + 1 == tcfg.steps) {
      opt.set_lr(lr_now);
      opt.step();
      opt.zero_grad();
      stepped = true;
    }

    if (step == 0) res.first_loss = loss_val;
    res.final_loss = loss_val;
    res.steps_run = step + 1;

    if (step % tcfg.log_every == 0 || step + 1 == tcfg.steps) {
      json rec;
      rec["step"] = step;
      rec["loss"] = loss_val;
      rec["psnr"] = psnr_from_mse(mse_val);
      rec["count"] = count;
      rec["lr"] = lr_now;
      emit(rec.dump(), res);
    }
    if (!out_dir.empty() &&
        ((step + 1) % tcfg.checkpoint_every == 0 || step + 1 == tcfg.steps))
      save_tensors(out_dir + "/checkpoint.gst", p.params());
  }
  return res;
}

Metrics evaluate(const std::vector<SceneSample>& dataset, const PipelineParams& p,
                 const PipelineConfig& cfg, int64_t views_in) {
  GS_CHECK(views_in >= 1, "evaluate: views_in must be positive");
  GS_CHECK(!dataset.empty(), "evaluate: empty dataset");
  reset_peak_memory();

  Metrics m;
  for (const SceneSample& scene : dataset) {
    GS_CHECK(static_cast<int64_t>(scene.inputs.size()) >= views_in,
             "evaluate: scene " + scene.name + " has fewer input views than requested");
    SceneSample sub;
    sub.name = scene.name;
    sub.inputs.assign(scene.inputs.begin(), scene.inputs.begin() + views_in);
    sub.targets = scene.targets;

    const auto t0 = std::chrono::steady_clock::now();
    ForwardOutput out = forward_pipeline(sub, p, cfg, RunMode::infer);
    const auto t1 = std::chrono::steady_clock::now();

    GS_CHECK(!sub.targets.empty(), "evaluate: scene " + scene.name + " has no targets");
    double psnr = 0;
    for (size_t t = 0; t < sub.targets.size(); ++t)
      psnr += psnr_from_mse(image_mse(out.renders[t], chw_to_hwc(sub.targets[t].image)).item());
    m.psnr += psnr / static_cast<double>(sub.targets.size());
    m.gaussian_count += static_cast<double>(out.gaussians.count());
    m.latency_ms += std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  const double inv_n = 1.0 / static_cast<double>(dataset.size());
  m.psnr *= inv_n;
  m.gaussian_count *= inv_n;
  m.latency_ms *= inv_n;
  m.peak_memory_bytes = static_cast<double>(memory_stats().peak_bytes);
  return m;
}

std::vector<AblationRow> ablate(const std::vector<SceneSample>& train_set,
                                const std::vector<SceneSample>& eval_set,
                                const PipelineConfig& base, const TrainConfig& tcfg,
                                int64_t views_in) {
  std::vector<AblationRow> rows;
  for (const std::string& name : ablation_names()) {
    PipelineConfig cfg = ablation_preset(name, base);
    Rng rng(tcfg.seed);
    PipelineParams p = PipelineParams::init(cfg, rng);
    train(train_set, cfg, tcfg, p, "");
    rows.push_back({name, evaluate(eval_set, p, cfg, views_in)});
  }
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows, bool delimited) {
  std::string out;
  char buf[160];
  if (delimited) {
    out += "preset,psnr_db,gaussians,latency_ms,peak_memory_mb\n";
    for (const AblationRow& r : rows) {
      std::snprintf(buf, sizeof(buf), "%s,%.4f,%.1f,%.2f,%.2f\n", r.name.c_str(),
                    r.metrics.psnr, r.metrics.gaussian_count, r.metrics.latency_ms,
                    r.metrics.peak_memory_bytes / (1024.0 * 1024.0));
      out += buf;
    }
    return out;
  }
  std::snprintf(buf, sizeof(buf), "%-10s %10s %12s %12s %14s\n", "preset", "psnr_db",
                "gaussians", "latency_ms", "peak_mem_mb");
  out += buf;
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-10s %10.4f %12.1f %12.2f %14.2f\n", r.name.c_str(),
                  r.metrics.psnr, r.metrics.gaussian_count, r.metrics.latency_ms,
                  r.metrics.peak_memory_bytes / (1024.0 * 1024.0));
    out += buf;
  }
  return out;
}

}  // namespace gs

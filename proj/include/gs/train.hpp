#pragma once

// Training loop, evaluation metrics, and the ablation harness.

#include <stdexcept>
#include <string>
#include <vector>

#include "gs/pipeline.hpp"

namespace gs {

// Raised when optimization produces a non-finite loss; the CLI maps it to a
// dedicated exit code.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int64_t steps = 5000;
  double lr = 2e-4;
  double weight_decay = 1e-4;
  double lambda_perc = 0.05;  // perceptual-surrogate weight
  int64_t grad_accum = 1;     // samples per optimizer step
  int64_t log_every = 50;     // metric record cadence (steps)
  int64_t checkpoint_every = 1000;
  uint64_t seed = 0;

  void validate() const;
};

// PSNR for images in [0,1]: 10*log10(1/mse), capped at 99 dB (the cap also
// covers mse == 0).
double psnr_from_mse(double mse);

struct Metrics {
  double psnr = 0;               // dB, mean over scenes (each a mean over targets)
  double gaussian_count = 0;     // final set size, mean over scenes
  double latency_ms = 0;         // wall-clock forward time, mean over scenes
  double peak_memory_bytes = 0;  // tensor high-water mark during evaluation
};

struct TrainResult {
  double first_loss = 0;
  double final_loss = 0;
  int64_t steps_run = 0;
  std::vector<std::string> metric_lines;  // JSON records {step,loss,psnr,count,lr}
};

// Optimizes `p` in place over the dataset: per step sample a scene, render its
// targets, average the loss, backprop, Adam with cosine annealing. When
// out_dir is non-empty, writes metrics.jsonl (first line is a meta record
// naming the perceptual surrogate) and periodic + final checkpoint.gst.
// Throws NumericError if the loss turns non-finite.
TrainResult train(const std::vector<SceneSample>& dataset, const PipelineConfig& cfg,
                  const TrainConfig& tcfg, PipelineParams& p, const std::string& out_dir = "");

// Inference-mode metrics with the first views_in input views of each scene.
// psnr, gaussian_count, and peak_memory_bytes are pure functions of
// (parameters, dataset); latency_ms is wall-clock and informational only.
Metrics evaluate(const std::vector<SceneSample>& dataset, const PipelineParams& p,
                 const PipelineConfig& cfg, int64_t views_in);

struct AblationRow {
  std::string name;
  Metrics metrics;
};

// Trains every preset from ablation_names() with an identical budget and
// seed, then evaluates each on eval_set with views_in inputs.
std::vector<AblationRow> ablate(const std::vector<SceneSample>& train_set,
                                const std::vector<SceneSample>& eval_set,
                                const PipelineConfig& base, const TrainConfig& tcfg,
                                int64_t views_in);

// Aligned text table; with delimited=true, one comma-separated row per line.
std::string format_ablation_table(const std::vector<AblationRow>& rows, bool delimited = false);

}  // namespace gs

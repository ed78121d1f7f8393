#pragma once

// Application configuration: one JSON document with sections
// (data, encoder, cga, igr, rasterizer, train) exposing every module default.
// Unknown sections or keys are rejected; serialization is canonical (fixed
// key order), so parse -> serialize is idempotent.

#include <string>

#include "gs/pipeline.hpp"
#include "gs/scene_gen.hpp"
#include "gs/train.hpp"

namespace gs {

struct AppConfig {
  int64_t n_scenes = 8;  // data.scenes: dataset size for generation
  SceneGenConfig data;   // per-scene generation parameters
  PipelineConfig pipe;   // encoder, cga, igr, rasterizer sections
  TrainConfig train;

  void validate() const;
};

// Parses a JSON document. Throws std::runtime_error naming the offending key
// on unknown keys, wrong types, or malformed JSON.
AppConfig config_from_json(const std::string& text);

// Canonical serialization: fixed section and key order, 2-space indent,
// trailing newline. NaN-valued threshold overrides are omitted.
std::string config_to_json(const AppConfig& cfg);

AppConfig load_config(const std::string& path);
void save_config(const std::string& path, const AppConfig& cfg);

}  // namespace gs

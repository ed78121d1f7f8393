#pragma once

#include <map>
#include <string>

#include "gs/optim.hpp"
#include "gs/tensor.hpp"

namespace gs {

// Container: a text manifest (names, dtype, extents, byte offsets) followed by
// raw little-endian f64 payloads. Round-trips bit-exactly.
void save_tensors(const std::string& path, const NamedTensors& tensors);
std::map<std::string, Tensor> load_tensors(const std::string& path);

}  // namespace gs

// Named-tensor checkpoint archive (magic "NTCK").
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ntc/tensor.hpp"

namespace ntc {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void save_checkpoint(const std::string& path, const NamedTensors& entries);

// Returns plain tensors in file order. Throws FormatError on a malformed
// file, IoError when the file cannot be read.
NamedTensors load_checkpoint(const std::string& path);

}  // namespace ntc

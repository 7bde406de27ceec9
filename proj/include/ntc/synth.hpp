// Synthetic frame-pair generator: smooth random textures under small
// global translations, the desk-scale stand-in for real video content.
#pragma once

#include <random>
#include <string>

#include "ntc/tensor.hpp"

namespace ntc::synth {

struct Pair {
  Tensor prev, cur;  // (1, 3, h, w), values in [0, 1]
  int dy = 0, dx = 0;  // how far the content moved (pixels)
};

// Bilinear texture on a coarse random grid; the current frame shows the
// same texture shifted by up to max_shift pixels per axis (edges
// replicate). Deterministic in the generator state.
Pair make_pair(std::mt19937& rng, int h, int w, int max_shift = 4);

// Writes `count` PPM pairs plus a tab-separated manifest (paths relative
// to the manifest itself) into dir; returns the manifest path.
std::string write_dataset(const std::string& dir, int count, uint32_t seed,
                          int h, int w, int max_shift = 4);

}  // namespace ntc::synth

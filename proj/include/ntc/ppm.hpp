// Binary portable pixmap (P6, max value 255) frame I/O.
//
// Frames travel as (1, 3, h, w) tensors with values in [0, 1]; bytes map to
// floats by v/255 and back by round-half-away of v*255 after clamping, so a
// file survives a read-write cycle byte for byte.
#pragma once

#include <string>

#include "ntc/tensor.hpp"

namespace ntc::ppm {

// Throws IoError when unreadable, FormatError for anything but P6/255.
Tensor read(const std::string& path);

// Atomic write; frame must be (1, 3, h, w).
void write(const std::string& path, const Tensor& frame);

}  // namespace ntc::ppm

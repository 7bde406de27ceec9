// End-to-end frame coding: pad, run the model, entropy-code the latent
// chain into a container, and decode it back.
//
// The decode path is a pure function of (model, previous frame, container);
// it has no access to the current frame by construction.
#pragma once

#include <string>
#include <vector>

#include "ntc/container.hpp"
#include "ntc/networks.hpp"
#include "ntc/tensor.hpp"

namespace ntc::pipeline {

// Replicates the right/bottom edges up to the next multiple of 8.
Tensor pad_to_multiple8(const Tensor& frame);

struct EncodeResult {
  container::Container container;  // ready for container::write_file
  Tensor recon;    // encoder-side reconstruction at the original size
  Tensor symbols;  // coded latent symbols, for round-trip verification
};

// Both frames (1, 3, h, w) with equal dims; any h, w >= 1.
EncodeResult encode_frame_pair(const net::CodecModel& m, const Tensor& f_prev,
                               const Tensor& f_cur);

// Entropy-decodes a container back to the latent symbol tensor; bit-identical
// to the encoder's symbols.
Tensor decode_latent_symbols(const net::CodecModel& m,
                             const container::Container& c);

// Reconstructs the current frame; bit-identical to the encoder-side recon.
Tensor decode_frame(const net::CodecModel& m, const Tensor& f_prev,
                    const container::Container& c);

struct ManifestEntry {
  std::string prev, cur;
};

// Tab-separated "prev<TAB>cur" lines; relative paths resolve against the
// manifest's own directory.
std::vector<ManifestEntry> read_manifest(const std::string& path);

}  // namespace ntc::pipeline

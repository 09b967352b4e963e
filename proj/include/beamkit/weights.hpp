// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "beamkit/complex_linalg.hpp"

namespace beamkit {

// One complex weight vector per frequency bin, time-invariant across the
// utterance. Storage is bin-major: data[k * channels + m].
struct BeamformerWeights {
  std::string variant;
  int channels = 0;
  int bins = 0;
  int reference = 0;
  cvec data;

  std::span<const cplx> bin(int k) const {
    return {data.data() + std::size_t(k) * channels, std::size_t(channels)};
  }
  std::span<cplx> bin(int k) {
    return {data.data() + std::size_t(k) * channels, std::size_t(channels)};
  }

  bool finite() const {
    for (const cplx& v : data)
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    return true;
  }
};

}  // namespace beamkit

// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Ideal binary time-frequency masks from parallel clean / noise stems, and
// median fusion of per-channel masks into a single channel-independent pair.

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "beamkit/stft.hpp"

namespace beamkit {

// Paired speech / noise masks over a frames x bins grid, values in [0, 1].
struct MaskPair {
  int frames = 0;
  int bins = 0;
  std::vector<double> speech;
  std::vector<double> noise;

  MaskPair() = default;
  MaskPair(int l, int k)
      : frames(l), bins(k),
        speech(std::size_t(l) * k, 0.0), noise(std::size_t(l) * k, 0.0) {}

  double& sp(int l, int k) { return speech[std::size_t(l) * bins + k]; }
  double sp(int l, int k) const { return speech[std::size_t(l) * bins + k]; }
  double& nz(int l, int k) { return noise[std::size_t(l) * bins + k]; }
  double nz(int l, int k) const { return noise[std::size_t(l) * bins + k]; }
};

// Per-channel ideal binary masks thresholding the instantaneous local SNR
// 10 log10(|X|^2 / |N|^2): the speech mask is 1 strictly above lcx_db, the
// noise mask is 1 at or below lcn_db. Bins with |N|^2 = 0 count as speech
// when |X|^2 > 0; all-zero bins count as noise.
inline std::vector<MaskPair> oracle_masks(const Spectrogram& clean,
                                          const Spectrogram& noise,
                                          double lcx_db = 0.0,
                                          double lcn_db = -10.0) {
  if (!clean.same_shape(noise))
    throw std::invalid_argument("oracle_masks: stem shapes differ");
  if (lcx_db < lcn_db)
    throw std::invalid_argument("oracle_masks: lcx_db must be >= lcn_db");

  std::vector<MaskPair> out;
  out.reserve(std::size_t(clean.channels));
  for (int c = 0; c < clean.channels; ++c) {
    MaskPair mp(clean.frames, clean.bins);
    for (int l = 0; l < clean.frames; ++l) {
      for (int k = 0; k < clean.bins; ++k) {
        const double px = std::norm(clean.at(c, l, k));
        const double pn = std::norm(noise.at(c, l, k));
        double snr_db;
        if (pn == 0.0)
          snr_db = px > 0.0 ? std::numeric_limits<double>::infinity()
                            : -std::numeric_limits<double>::infinity();
        else
          snr_db = 10.0 * std::log10(px / pn);
        mp.sp(l, k) = snr_db > lcx_db ? 1.0 : 0.0;
        mp.nz(l, k) = snr_db > lcn_db ? 0.0 : 1.0;
      }
    }
    out.push_back(std::move(mp));
  }
  return out;
}

// Per-bin median across channels, computed independently for the speech and
// noise quantities. An even channel count takes the midpoint of the two
// middle order statistics.
inline MaskPair median_fuse(std::span<const MaskPair> per_channel) {
  if (per_channel.empty())
    throw std::invalid_argument("median_fuse: empty input");
  const int frames = per_channel.front().frames;
  const int bins = per_channel.front().bins;
  for (const MaskPair& mp : per_channel)
    if (mp.frames != frames || mp.bins != bins)
      throw std::invalid_argument("median_fuse: shape mismatch");

  const std::size_t m = per_channel.size();
  std::vector<double> vals(m);
  MaskPair out(frames, bins);
  const auto median_of = [&](auto&& get) {
    for (std::size_t c = 0; c < m; ++c) vals[c] = get(per_channel[c]);
    std::sort(vals.begin(), vals.end());
    return (m % 2 == 1) ? vals[m / 2]
                        : 0.5 * (vals[m / 2 - 1] + vals[m / 2]);
  };
  for (int l = 0; l < frames; ++l) {
    for (int k = 0; k < bins; ++k) {
      out.sp(l, k) = median_of([&](const MaskPair& mp) { return mp.sp(l, k); });
      out.nz(l, k) = median_of([&](const MaskPair& mp) { return mp.nz(l, k); });
    }
  }
  return out;
}

inline MaskPair median_fuse(const std::vector<MaskPair>& per_channel) {
  return median_fuse(std::span<const MaskPair>(per_channel));
}

}  // namespace beamkit

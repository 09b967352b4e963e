// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Mask-weighted spatial covariance estimation and reference channel
// selection. The utterance estimator is the arithmetic mean
//   Phi(k) = (1 / L) * sum_l M(l,k) y(l,k) y(l,k)^H
// over the whole utterance; the recursive estimator applies exponential
// smoothing per frame. Both produce one (Phi_xx, Phi_nn) pair per bin.

#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "beamkit/complex_linalg.hpp"
#include "beamkit/masks.hpp"
#include "beamkit/stft.hpp"

namespace beamkit {

enum class CovarianceMode { utterance, recursive };

// Divisor for the utterance estimator: the frame count L, or the per-bin
// mask sum (with an all-zero mask yielding the zero matrix).
enum class CovarianceNormalization { total_frames, mask_sum };

struct CovariancePair {
  CovarianceMode mode = CovarianceMode::utterance;
  // utterance mode: one matrix per bin.
  std::vector<HermitianMatrix> xx, nn;
  // recursive mode: smoothing state after each frame, [frame][bin].
  std::vector<std::vector<HermitianMatrix>> xx_frames, nn_frames;

  int bins() const {
    return mode == CovarianceMode::utterance
               ? static_cast<int>(xx.size())
               : (xx_frames.empty() ? 0
                                    : static_cast<int>(xx_frames.front().size()));
  }
};

namespace detail {

inline void gather_frame(const Spectrogram& spec, int l, int k, cvec& y) {
  y.resize(std::size_t(spec.channels));
  for (int m = 0; m < spec.channels; ++m) y[std::size_t(m)] = spec.at(m, l, k);
}

}  // namespace detail

inline CovariancePair covariance_utterance(
    const Spectrogram& spec, const MaskPair& mask,
    CovarianceNormalization norm = CovarianceNormalization::total_frames) {
  if (mask.frames != spec.frames || mask.bins != spec.bins)
    throw std::invalid_argument("covariance_utterance: mask shape mismatch");
  if (spec.frames < 1)
    throw std::invalid_argument("covariance_utterance: zero frames");

  CovariancePair out;
  out.mode = CovarianceMode::utterance;
  out.xx.assign(std::size_t(spec.bins), HermitianMatrix(spec.channels));
  out.nn.assign(std::size_t(spec.bins), HermitianMatrix(spec.channels));
  cvec y;
  std::vector<double> sp_sum(std::size_t(spec.bins), 0.0);
  std::vector<double> nz_sum(std::size_t(spec.bins), 0.0);
  for (int l = 0; l < spec.frames; ++l) {
    for (int k = 0; k < spec.bins; ++k) {
      const double mx = mask.sp(l, k);
      const double mn = mask.nz(l, k);
      if (mx == 0.0 && mn == 0.0) continue;
      detail::gather_frame(spec, l, k, y);
      if (mx != 0.0) out.xx[std::size_t(k)].add_weighted_outer(y, mx);
      if (mn != 0.0) out.nn[std::size_t(k)].add_weighted_outer(y, mn);
      sp_sum[std::size_t(k)] += mx;
      nz_sum[std::size_t(k)] += mn;
    }
  }
  for (int k = 0; k < spec.bins; ++k) {
    double dx = spec.frames, dn = spec.frames;
    if (norm == CovarianceNormalization::mask_sum) {
      dx = sp_sum[std::size_t(k)];
      dn = nz_sum[std::size_t(k)];
    }
    out.xx[std::size_t(k)] =
        dx > 0.0 ? out.xx[std::size_t(k)].scaled(1.0 / dx)
                 : HermitianMatrix(spec.channels);
    out.nn[std::size_t(k)] =
        dn > 0.0 ? out.nn[std::size_t(k)].scaled(1.0 / dn)
                 : HermitianMatrix(spec.channels);
  }
  return out;
}

// One smoothing step: state <- alpha * state + (1 - alpha) * m * y y^H.
inline void recursive_update(HermitianMatrix& state, std::span<const cplx> y,
                             double m, double alpha) {
  state = state.scaled(alpha);
  if (m != 0.0) state.add_weighted_outer(y, (1.0 - alpha) * m);
}

inline constexpr double kRecursiveInitEpsilon = 1e-10;

inline CovariancePair covariance_recursive(const Spectrogram& spec,
                                           const MaskPair& mask,
                                           double alpha = 0.95) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("covariance_recursive: alpha outside (0, 1)");
  if (mask.frames != spec.frames || mask.bins != spec.bins)
    throw std::invalid_argument("covariance_recursive: mask shape mismatch");
  if (spec.frames < 1)
    throw std::invalid_argument("covariance_recursive: zero frames");

  CovariancePair out;
  out.mode = CovarianceMode::recursive;
  std::vector<HermitianMatrix> sx(
      std::size_t(spec.bins),
      HermitianMatrix::identity(spec.channels).scaled(kRecursiveInitEpsilon));
  std::vector<HermitianMatrix> sn = sx;
  out.xx_frames.reserve(std::size_t(spec.frames));
  out.nn_frames.reserve(std::size_t(spec.frames));
  cvec y;
  for (int l = 0; l < spec.frames; ++l) {
    for (int k = 0; k < spec.bins; ++k) {
      detail::gather_frame(spec, l, k, y);
      recursive_update(sx[std::size_t(k)], y, mask.sp(l, k), alpha);
      recursive_update(sn[std::size_t(k)], y, mask.nz(l, k), alpha);
    }
    out.xx_frames.push_back(sx);
    out.nn_frames.push_back(sn);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reference channel selection: the channel whose magnitude spectrogram has
// the highest average Pearson correlation with the other channels. A
// zero-variance (constant magnitude) channel scores -1 against every peer.

struct ReferenceChoice {
  int channel = 0;
  std::vector<double> scores;  // average cross-correlation per channel
};

inline ReferenceChoice select_reference(const Spectrogram& spec) {
  const int m = spec.channels;
  if (m < 2)
    throw std::invalid_argument("select_reference: need at least 2 channels");
  const std::size_t n = std::size_t(spec.frames) * spec.bins;
  if (n == 0) throw std::invalid_argument("select_reference: empty input");

  std::vector<std::vector<double>> mag(static_cast<std::size_t>(m),
                                       std::vector<double>(n));
  std::vector<double> mean(std::size_t(m), 0.0), var(std::size_t(m), 0.0);
  for (int c = 0; c < m; ++c) {
    double acc = 0.0;
    for (int l = 0; l < spec.frames; ++l)
      for (int k = 0; k < spec.bins; ++k) {
        const double v = std::abs(spec.at(c, l, k));
        mag[std::size_t(c)][std::size_t(l) * spec.bins + k] = v;
        acc += v;
      }
    mean[std::size_t(c)] = acc / static_cast<double>(n);
    double vacc = 0.0;
    for (const double v : mag[std::size_t(c)]) {
      const double d = v - mean[std::size_t(c)];
      vacc += d * d;
    }
    var[std::size_t(c)] = vacc / static_cast<double>(n);
  }

  ReferenceChoice out;
  out.scores.assign(std::size_t(m), 0.0);
  for (int a = 0; a < m; ++a) {
    double acc = 0.0;
    for (int b = 0; b < m; ++b) {
      if (a == b) continue;
      double r = -1.0;  // degenerate pairs score -1
      if (var[std::size_t(a)] > 0.0 && var[std::size_t(b)] > 0.0) {
        double cov = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          cov += (mag[std::size_t(a)][i] - mean[std::size_t(a)]) *
                 (mag[std::size_t(b)][i] - mean[std::size_t(b)]);
        cov /= static_cast<double>(n);
        r = cov / std::sqrt(var[std::size_t(a)] * var[std::size_t(b)]);
      }
      acc += r;
    }
    out.scores[std::size_t(a)] = acc / static_cast<double>(m - 1);
  }
  out.channel = 0;
  for (int c = 1; c < m; ++c)
    if (out.scores[std::size_t(c)] > out.scores[std::size_t(out.channel)])
      out.channel = c;  // ties keep the lowest index
  return out;
}

}  // namespace beamkit

// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Multichannel STFT analysis / weighted-overlap-add synthesis and the
// beamformer application step. Analysis and synthesis both use a periodic
// square-root Hann window, which satisfies the COLA condition at the
// default 75% overlap; synthesis divides by the accumulated squared window
// so the interior of a round trip reconstructs exactly.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "beamkit/complex_linalg.hpp"
#include "beamkit/weights.hpp"

namespace beamkit {

struct StftConfig {
  int fft_size = 1024;
  int hop = 256;
  double sample_rate = 16000.0;
  enum class Window { sqrt_hann } window = Window::sqrt_hann;

  int bins() const { return fft_size / 2 + 1; }

  void validate() const {
    if (fft_size < 4 || (fft_size & (fft_size - 1)) != 0)
      throw std::invalid_argument("fft_size must be a power of two >= 4");
    if (hop <= 0 || fft_size % hop != 0 || hop > fft_size / 2)
      throw std::invalid_argument(
          "hop must divide fft_size and be at most fft_size / 2");
    if (!(sample_rate > 0.0))
      throw std::invalid_argument("sample_rate must be positive");
  }
};

// channel-major storage: data[(c * frames + l) * bins + k].
struct Spectrogram {
  int channels = 0;
  int frames = 0;
  int bins = 0;
  cvec data;

  Spectrogram() = default;
  Spectrogram(int c, int l, int k)
      : channels(c), frames(l), bins(k),
        data(std::size_t(c) * l * k, cplx{0.0, 0.0}) {}

  cplx& at(int c, int l, int k) {
    return data[(std::size_t(c) * frames + l) * bins + k];
  }
  cplx at(int c, int l, int k) const {
    return data[(std::size_t(c) * frames + l) * bins + k];
  }

  bool same_shape(const Spectrogram& o) const {
    return channels == o.channels && frames == o.frames && bins == o.bins;
  }

  bool finite() const {
    for (const cplx& v : data)
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    return true;
  }
};

namespace detail {

// Iterative radix-2 complex FFT; fft_size is a power of two by contract.
inline void fft_inplace(cvec& x, bool inverse) {
  const std::size_t n = x.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang =
        (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t j = 0; j < len / 2; ++j) {
        const cplx w = std::polar(1.0, ang * static_cast<double>(j));
        const cplx u = x[i + j];
        const cplx v = x[i + j + len / 2] * w;
        x[i + j] = u + v;
        x[i + j + len / 2] = u - v;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (cplx& v : x) v *= inv;
  }
}

}  // namespace detail

inline std::vector<double> make_window(const StftConfig& cfg) {
  cfg.validate();
  std::vector<double> w(static_cast<std::size_t>(cfg.fft_size));
  for (int n = 0; n < cfg.fft_size; ++n) {
    const double hann =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / cfg.fft_size);
    w[std::size_t(n)] = std::sqrt(hann);
  }
  return w;
}

// Frames each channel into L = floor((T - fft_size) / hop) + 1 windows and
// keeps the one-sided spectrum of fft_size / 2 + 1 bins. A trailing partial
// frame is dropped.
inline Spectrogram analyze(const std::vector<std::vector<double>>& channels,
                           const StftConfig& cfg) {
  cfg.validate();
  if (channels.empty() || static_cast<int>(channels.size()) > kMaxChannels)
    throw std::invalid_argument("analyze: channel count out of range");
  const std::size_t samples = channels.front().size();
  for (const auto& ch : channels)
    if (ch.size() != samples)
      throw std::invalid_argument("analyze: channels differ in length");
  if (samples < std::size_t(cfg.fft_size))
    throw std::invalid_argument("analyze: signal shorter than one frame");

  const int frames =
      static_cast<int>((samples - cfg.fft_size) / cfg.hop) + 1;
  const int bins = cfg.bins();
  const std::vector<double> win = make_window(cfg);
  Spectrogram out(static_cast<int>(channels.size()), frames, bins);
  cvec buf(static_cast<std::size_t>(cfg.fft_size));
  for (int c = 0; c < out.channels; ++c) {
    const std::vector<double>& x = channels[std::size_t(c)];
    for (int l = 0; l < frames; ++l) {
      const std::size_t start = std::size_t(l) * cfg.hop;
      for (int n = 0; n < cfg.fft_size; ++n)
        buf[std::size_t(n)] = x[start + n] * win[std::size_t(n)];
      detail::fft_inplace(buf, false);
      for (int k = 0; k < bins; ++k) out.at(c, l, k) = buf[std::size_t(k)];
    }
  }
  return out;
}

// Weighted overlap-add. The output has (frames - 1) * hop + fft_size
// samples; each sample is divided by the accumulated squared window, so the
// reconstruction is exact wherever overlapping frames cover the signal.
inline std::vector<std::vector<double>> synthesize(const Spectrogram& spec,
                                                   const StftConfig& cfg) {
  cfg.validate();
  if (spec.bins != cfg.bins())
    throw std::invalid_argument("synthesize: bin count does not match config");
  if (spec.channels < 1 || spec.frames < 1)
    throw std::invalid_argument("synthesize: empty spectrogram");

  const int n = cfg.fft_size;
  const std::size_t total = std::size_t(spec.frames - 1) * cfg.hop + n;
  const std::vector<double> win = make_window(cfg);
  std::vector<std::vector<double>> out(
      std::size_t(spec.channels), std::vector<double>(total, 0.0));
  cvec buf(static_cast<std::size_t>(n));

  // Weighted overlap-add: the analysis/synthesis window pair multiplies to
  // sin^2, whose shifts sum to the constant fft/(2 hop) wherever the overlap
  // is complete. Dividing by that constant makes the interior round trip
  // exact; the first and last window spans fade in and out instead.
  const double cola = double(n) / (2.0 * double(cfg.hop));

  for (int c = 0; c < spec.channels; ++c) {
    std::vector<double>& y = out[std::size_t(c)];
    for (int l = 0; l < spec.frames; ++l) {
      for (int k = 0; k < spec.bins; ++k) buf[std::size_t(k)] = spec.at(c, l, k);
      for (int k = spec.bins; k < n; ++k)
        buf[std::size_t(k)] = std::conj(spec.at(c, l, n - k));
      detail::fft_inplace(buf, true);
      const std::size_t start = std::size_t(l) * cfg.hop;
      for (int m = 0; m < n; ++m)
        y[start + m] += buf[std::size_t(m)].real() * win[std::size_t(m)];
    }
    for (double& v : y) v /= cola;
  }
  return out;
}

// O(l, k) = sum_m conj(H_m(k)) Y_m(l, k).
inline Spectrogram apply_weights(const Spectrogram& spec,
                                 const BeamformerWeights& w) {
  if (w.channels != spec.channels || w.bins != spec.bins)
    throw std::invalid_argument("apply_weights: shape mismatch");
  Spectrogram out(1, spec.frames, spec.bins);
  for (int l = 0; l < spec.frames; ++l) {
    for (int k = 0; k < spec.bins; ++k) {
      cplx acc{0.0, 0.0};
      const std::size_t base = std::size_t(k) * w.channels;
      for (int m = 0; m < spec.channels; ++m)
        acc += std::conj(w.data[base + m]) * spec.at(m, l, k);
      out.at(0, l, k) = acc;
    }
  }
  return out;
}

// Per-frame variant for time-varying filters (one weight set per frame).
inline Spectrogram apply_weights(const Spectrogram& spec,
                                 const std::vector<BeamformerWeights>& per_frame) {
  if (static_cast<int>(per_frame.size()) != spec.frames)
    throw std::invalid_argument("apply_weights: need one weight set per frame");
  Spectrogram out(1, spec.frames, spec.bins);
  for (int l = 0; l < spec.frames; ++l) {
    const BeamformerWeights& w = per_frame[std::size_t(l)];
    if (w.channels != spec.channels || w.bins != spec.bins)
      throw std::invalid_argument("apply_weights: shape mismatch");
    for (int k = 0; k < spec.bins; ++k) {
      cplx acc{0.0, 0.0};
      const std::size_t base = std::size_t(k) * w.channels;
      for (int m = 0; m < spec.channels; ++m)
        acc += std::conj(w.data[base + m]) * spec.at(m, l, k);
      out.at(0, l, k) = acc;
    }
  }
  return out;
}

}  // namespace beamkit

// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Evaluation metrics:
//   - spectral distortion (SD): RMS log-spectral deviation per frame with
//     weights proportional to the inverse equivalent rectangular bandwidth,
//     so each auditory critical band contributes equally;
//   - cepstral features: 26-band mel filterbank, natural log, orthonormal
//     DCT-II, first 13 coefficients;
//   - feature variance (FV): percentage of frames, grouped by state label,
//     whose test-feature variance exceeds the baseline variance;
//   - pseudo-state labelling by deterministic k-means.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "beamkit/errors.hpp"
#include "beamkit/stft.hpp"

namespace beamkit {

// ---------------------------------------------------------------------------
// Spectral distortion.

struct SdScore {
  std::vector<double> per_frame;  // dB, retained frames only
  double mean = 0.0;
  int frames_used = 0;
};

// ERB(f) = 24.7 * (4.37 f / 1000 + 1), f in Hz.
inline double erb_bandwidth(double f_hz) {
  return 24.7 * (4.37 * f_hz / 1000.0 + 1.0);
}

inline std::vector<double> erb_weights(int bins, double sample_rate) {
  if (bins < 2) throw std::invalid_argument("erb_weights: need >= 2 bins");
  std::vector<double> w(static_cast<std::size_t>(bins));
  double sum = 0.0;
  for (int k = 0; k < bins; ++k) {
    const double f = k * sample_rate / (2.0 * (bins - 1));
    w[std::size_t(k)] = 1.0 / erb_bandwidth(f);
    sum += w[std::size_t(k)];
  }
  for (double& v : w) v /= sum;
  return w;
}

namespace detail {

// Per-bin log power ratio clamped to +-60 dB; 0/0 counts as 0 dB.
inline double clamped_log_ratio(double po, double pi) {
  if (po <= 0.0 && pi <= 0.0) return 0.0;
  if (pi <= 0.0) return 60.0;
  if (po <= 0.0) return -60.0;
  return std::clamp(10.0 * std::log10(po / pi), -60.0, 60.0);
}

}  // namespace detail

// SD between a processed and a clean single-channel spectrogram. Frames
// whose clean power is below 1e-6 of the loudest frame are excluded.
inline SdScore sd_metric(const Spectrogram& processed, const Spectrogram& clean,
                         double sample_rate = 16000.0) {
  if (!processed.same_shape(clean))
    throw std::invalid_argument("sd_metric: shape mismatch");
  if (processed.channels != 1)
    throw std::invalid_argument("sd_metric: single-channel inputs required");

  const std::vector<double> w = erb_weights(clean.bins, sample_rate);
  std::vector<double> frame_power(std::size_t(clean.frames), 0.0);
  double max_power = 0.0;
  for (int l = 0; l < clean.frames; ++l) {
    double p = 0.0;
    for (int k = 0; k < clean.bins; ++k) p += std::norm(clean.at(0, l, k));
    frame_power[std::size_t(l)] = p;
    max_power = std::max(max_power, p);
  }
  if (!(max_power > 0.0))
    throw NumericalError("sd_metric: all frames silent");
  const double floor = 1e-6 * max_power;

  SdScore out;
  double acc = 0.0;
  for (int l = 0; l < clean.frames; ++l) {
    if (frame_power[std::size_t(l)] < floor) continue;
    double s = 0.0;
    for (int k = 0; k < clean.bins; ++k) {
      const double lr = detail::clamped_log_ratio(
          std::norm(processed.at(0, l, k)), std::norm(clean.at(0, l, k)));
      s += w[std::size_t(k)] * lr * lr;
    }
    const double sd = std::sqrt(s);
    out.per_frame.push_back(sd);
    acc += sd;
  }
  out.frames_used = static_cast<int>(out.per_frame.size());
  out.mean = acc / out.frames_used;
  return out;
}

// ---------------------------------------------------------------------------
// Cepstral features.

struct FeatureMatrix {
  int frames = 0;
  int dims = 0;
  std::vector<double> data;   // frame-major
  std::vector<int> labels;    // optional state labels, empty if absent

  double at(int l, int d) const { return data[std::size_t(l) * dims + d]; }
  double& at(int l, int d) { return data[std::size_t(l) * dims + d]; }
  bool has_labels() const { return !labels.empty(); }
};

inline constexpr int kMelBands = 26;
inline constexpr int kCepstralCoeffs = 13;
inline constexpr double kLogFloor = 1e-10;

namespace detail {

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Triangular mel filterbank over the one-sided spectrum, each filter
// normalized to unit weight sum so a flat spectrum produces flat bands.
inline std::vector<std::vector<double>> mel_filterbank(int bins,
                                                       double sample_rate) {
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers(std::size_t(kMelBands) + 2);
  for (int b = 0; b < kMelBands + 2; ++b)
    centers[std::size_t(b)] = mel_to_hz(mel_max * b / (kMelBands + 1));
  const double bin_hz = sample_rate / (2.0 * (bins - 1));
  std::vector<std::vector<double>> fb(
      std::size_t(kMelBands), std::vector<double>(std::size_t(bins), 0.0));
  for (int b = 0; b < kMelBands; ++b) {
    const double lo = centers[std::size_t(b)];
    const double mid = centers[std::size_t(b) + 1];
    const double hi = centers[std::size_t(b) + 2];
    double sum = 0.0;
    for (int k = 0; k < bins; ++k) {
      const double f = k * bin_hz;
      double w = 0.0;
      if (f > lo && f < hi)
        w = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      fb[std::size_t(b)][std::size_t(k)] = w;
      sum += w;
    }
    if (sum > 0.0)
      for (double& w : fb[std::size_t(b)]) w /= sum;
  }
  return fb;
}

}  // namespace detail

// 13-dimensional cepstra per frame of a mono signal, deterministic given
// the STFT configuration.
inline FeatureMatrix cepstral_features(const std::vector<double>& signal,
                                       const StftConfig& cfg) {
  const Spectrogram spec = analyze({signal}, cfg);
  const auto fb = detail::mel_filterbank(spec.bins, cfg.sample_rate);

  FeatureMatrix out;
  out.frames = spec.frames;
  out.dims = kCepstralCoeffs;
  out.data.resize(std::size_t(out.frames) * out.dims);
  std::vector<double> power(static_cast<std::size_t>(spec.bins));
  std::vector<double> logmel(static_cast<std::size_t>(kMelBands));
  for (int l = 0; l < spec.frames; ++l) {
    for (int k = 0; k < spec.bins; ++k) power[std::size_t(k)] = std::norm(spec.at(0, l, k));
    for (int b = 0; b < kMelBands; ++b) {
      double e = 0.0;
      for (int k = 0; k < spec.bins; ++k)
        e += fb[std::size_t(b)][std::size_t(k)] * power[std::size_t(k)];
      logmel[std::size_t(b)] = std::log(std::max(e, kLogFloor));
    }
    // Orthonormal DCT-II.
    for (int d = 0; d < kCepstralCoeffs; ++d) {
      double acc = 0.0;
      for (int b = 0; b < kMelBands; ++b)
        acc += logmel[std::size_t(b)] *
               std::cos(std::numbers::pi * d * (2.0 * b + 1.0) / (2.0 * kMelBands));
      const double scale = d == 0 ? std::sqrt(1.0 / kMelBands)
                                  : std::sqrt(2.0 / kMelBands);
      out.at(l, d) = scale * acc;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature variance.

struct FvStateRecord {
  int state = 0;
  long count = 0;  // occurrences used as the weight c_j
  double baseline_variance = 0.0;
  double test_variance = 0.0;
};

struct FvScore {
  double percentage = 0.0;
  std::vector<FvStateRecord> per_state;
};

namespace detail {

// Mean over features of the per-feature population variance of the frames
// carrying the given state.
inline double state_variance(const FeatureMatrix& fm,
                             const std::vector<int>& frames_of_state) {
  const double n = static_cast<double>(frames_of_state.size());
  double acc = 0.0;
  for (int d = 0; d < fm.dims; ++d) {
    double mean = 0.0;
    for (const int l : frames_of_state) mean += fm.at(l, d);
    mean /= n;
    double var = 0.0;
    for (const int l : frames_of_state) {
      const double diff = fm.at(l, d) - mean;
      var += diff * diff;
    }
    acc += var / n;
  }
  return acc / fm.dims;
}

}  // namespace detail

// FV = 100 * sum_j c_j 1{V_test(j) > V_base(j)} / sum_j c_j over the states
// present in both label sets. c_j counts occurrences in the test labels by
// default; counts_from_baseline switches to the baseline labels.
inline FvScore fv_metric(const FeatureMatrix& test, const FeatureMatrix& baseline,
                         bool counts_from_baseline = false) {
  if (!test.has_labels() || !baseline.has_labels())
    throw std::invalid_argument("fv_metric: both inputs need state labels");
  if (test.dims != baseline.dims)
    throw std::invalid_argument("fv_metric: feature dimensions differ");

  const auto group = [](const FeatureMatrix& fm) {
    std::vector<std::pair<int, std::vector<int>>> out;
    for (int l = 0; l < fm.frames; ++l) {
      const int s = fm.labels[std::size_t(l)];
      auto it = std::find_if(out.begin(), out.end(),
                             [s](const auto& p) { return p.first == s; });
      if (it == out.end())
        out.push_back({s, {l}});
      else
        it->second.push_back(l);
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
  };
  const auto test_groups = group(test);
  const auto base_groups = group(baseline);

  FvScore out;
  double weight = 0.0, hits = 0.0;
  for (const auto& [state, test_frames] : test_groups) {
    const auto it = std::find_if(base_groups.begin(), base_groups.end(),
                                 [s = state](const auto& p) { return p.first == s; });
    if (it == base_groups.end()) continue;  // shared states only
    FvStateRecord rec;
    rec.state = state;
    rec.count = counts_from_baseline ? static_cast<long>(it->second.size())
                                     : static_cast<long>(test_frames.size());
    rec.baseline_variance = detail::state_variance(baseline, it->second);
    rec.test_variance = detail::state_variance(test, test_frames);
    weight += static_cast<double>(rec.count);
    if (rec.test_variance > rec.baseline_variance)
      hits += static_cast<double>(rec.count);
    out.per_state.push_back(rec);
  }
  if (out.per_state.empty() || !(weight > 0.0))
    throw NumericalError("fv_metric: no shared states between label sets");
  out.percentage = 100.0 * hits / weight;
  return out;
}

// ---------------------------------------------------------------------------
// Pseudo-state labelling: deterministic k-means on the baseline features.
// The data is canonicalized by a lexicographic sort before initialization
// and centroid updates, so the labelling is a function of the feature
// multiset alone: permuting the frame order permutes the labels identically.

inline std::vector<int> pseudo_states(const FeatureMatrix& baseline,
                                      int num_states) {
  const int n = baseline.frames;
  const int d = baseline.dims;
  if (num_states < 1 || num_states > n)
    throw std::invalid_argument("pseudo_states: state count out of range");

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const auto lex_less = [&](int a, int b) {
    for (int j = 0; j < d; ++j) {
      if (baseline.at(a, j) < baseline.at(b, j)) return true;
      if (baseline.at(a, j) > baseline.at(b, j)) return false;
    }
    return false;
  };
  std::stable_sort(order.begin(), order.end(), lex_less);
  if (!lex_less(order.front(), order.back()) &&
      !lex_less(order.back(), order.front()))
    throw NumericalError("pseudo_states: all feature vectors identical");

  // Quantile initialization over the sorted data.
  std::vector<std::vector<double>> centroids(
      static_cast<std::size_t>(num_states),
      std::vector<double>(static_cast<std::size_t>(d)));
  for (int j = 0; j < num_states; ++j) {
    const int src = order[std::size_t((j + 0.5) * n / num_states)];
    for (int k = 0; k < d; ++k) centroids[std::size_t(j)][std::size_t(k)] = baseline.at(src, k);
  }

  const auto dist2 = [&](int frame, const std::vector<double>& c) {
    double acc = 0.0;
    for (int k = 0; k < d; ++k) {
      const double diff = baseline.at(frame, k) - c[std::size_t(k)];
      acc += diff * diff;
    }
    return acc;
  };

  std::vector<int> assign(std::size_t(n), -1);
  constexpr int kMaxIters = 100;
  for (int iter = 0; iter < kMaxIters; ++iter) {
    bool changed = false;
    for (const int i : order) {
      int best = 0;
      double best_d = dist2(i, centroids[0]);
      for (int j = 1; j < num_states; ++j) {
        const double dd = dist2(i, centroids[std::size_t(j)]);
        if (dd < best_d) {
          best_d = dd;
          best = j;
        }
      }
      if (assign[std::size_t(i)] != best) {
        assign[std::size_t(i)] = best;
        changed = true;
      }
    }
    if (!changed) break;
    // Recompute means in sorted order for order-independent rounding.
    std::vector<std::vector<double>> sums(std::size_t(num_states),
                                          std::vector<double>(std::size_t(d), 0.0));
    std::vector<int> counts(std::size_t(num_states), 0);
    for (const int i : order) {
      ++counts[std::size_t(assign[std::size_t(i)])];
      for (int k = 0; k < d; ++k)
        sums[std::size_t(assign[std::size_t(i)])][std::size_t(k)] += baseline.at(i, k);
    }
    for (int j = 0; j < num_states; ++j) {
      if (counts[std::size_t(j)] == 0) {
        // Reseed an empty cluster with the point farthest from its centroid.
        int far = order.front();
        double far_d = -1.0;
        for (const int i : order) {
          const double dd = dist2(i, centroids[std::size_t(assign[std::size_t(i)])]);
          if (dd > far_d) {
            far_d = dd;
            far = i;
          }
        }
        for (int k = 0; k < d; ++k)
          centroids[std::size_t(j)][std::size_t(k)] = baseline.at(far, k);
        continue;
      }
      for (int k = 0; k < d; ++k)
        centroids[std::size_t(j)][std::size_t(k)] =
            sums[std::size_t(j)][std::size_t(k)] / counts[std::size_t(j)];
    }
  }
  return assign;
}

}  // namespace beamkit

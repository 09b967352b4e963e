// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Synthetic narrowband scenes with known ground truth. Per bin k the clean
// stem is x(l,k) = g(k) S(l,k) with a time-invariant steering vector g and
// S(l,k) ~ CN(0, phi_ss(l,k)); the noise stem is drawn from a per-bin noise
// covariance. The noise stems are rescaled after generation so the
// broadband SNR at channel 1 hits the requested target exactly, and the
// stored noise covariance truth is rescaled with them.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "beamkit/complex_linalg.hpp"
#include "beamkit/rng.hpp"
#include "beamkit/stats.hpp"
#include "beamkit/stft.hpp"

namespace beamkit {

enum class NoiseKind { diffuse, directional, mixed };
enum class SteeringKind { gaussian, planewave };

struct SceneConfig {
  int channels = 6;
  int bins = 513;
  int frames = 300;
  double snr_db = 0.0;
  NoiseKind noise = NoiseKind::diffuse;
  SteeringKind steering = SteeringKind::gaussian;
  std::uint64_t seed = 1;
  double sample_rate = 16000.0;

  void validate() const {
    if (channels < 1 || channels > kMaxChannels)
      throw std::invalid_argument("scene: channel count out of range");
    if (bins < 2) throw std::invalid_argument("scene: need >= 2 bins");
    if (frames < 1) throw std::invalid_argument("scene: need >= 1 frame");
    if (!(sample_rate > 0.0))
      throw std::invalid_argument("scene: bad sample rate");
  }
};

struct SyntheticScene {
  SceneConfig config;
  std::vector<cvec> steering;                  // per bin, unit norm
  std::vector<std::vector<double>> speech_psd;  // [frame][bin]
  std::vector<HermitianMatrix> noise_cov;      // per bin, post-scaling truth
  Spectrogram clean;
  Spectrogram noise;
};

inline Spectrogram mixture(const SyntheticScene& scene) {
  Spectrogram out = scene.clean;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] += scene.noise.data[i];
  return out;
}

namespace detail {

// Mild low-frequency emphasis so per-bin local SNR varies across the band.
inline double speech_profile(int k, int bins) {
  const double x = static_cast<double>(k) / static_cast<double>(bins - 1);
  return 1.0 / (1.0 + 3.0 * x * x);
}

inline cvec unit_gaussian_vector(Lcg64& rng, int m) {
  cvec g(static_cast<std::size_t>(m));
  double n2 = 0.0;
  do {
    for (int i = 0; i < m; ++i) g[std::size_t(i)] = rng.complex_gaussian();
    n2 = norm2(g);
  } while (!(n2 > 0.0));
  const double inv = 1.0 / std::sqrt(n2);
  for (cplx& v : g) v *= inv;
  return g;
}

}  // namespace detail

inline SyntheticScene generate_scene(const SceneConfig& cfg) {
  cfg.validate();
  const int m = cfg.channels;
  const int bins = cfg.bins;
  const int frames = cfg.frames;
  Lcg64 rng(cfg.seed);

  SyntheticScene scene;
  scene.config = cfg;

  // Steering vectors. The plane-wave option models a uniform linear array
  // with 4.25 cm spacing and sound speed 343 m/s at a random incidence
  // angle; entries have unit modulus so 1/sqrt(M) gives unit norm.
  scene.steering.reserve(std::size_t(bins));
  if (cfg.steering == SteeringKind::gaussian) {
    for (int k = 0; k < bins; ++k)
      scene.steering.push_back(detail::unit_gaussian_vector(rng, m));
  } else {
    const double theta =
        (-60.0 + 120.0 * rng.uniform()) * std::numbers::pi / 180.0;
    const double spacing = 0.0425, speed = 343.0;
    for (int k = 0; k < bins; ++k) {
      const double f = k * cfg.sample_rate / (2.0 * (bins - 1));
      cvec g(static_cast<std::size_t>(m));
      for (int i = 0; i < m; ++i) {
        const double tau = i * spacing * std::sin(theta) / speed;
        g[std::size_t(i)] = std::polar(1.0 / std::sqrt(double(m)),
                                       -2.0 * std::numbers::pi * f * tau);
      }
      scene.steering.push_back(std::move(g));
    }
  }

  // Noise covariance truth per bin, before SNR scaling:
  //   diffuse      I
  //   directional  q q^H + (0.01 / M) I   (point interferer, small floor)
  //   mixed        q q^H + (1 / M) I      (equal directional/diffuse power)
  scene.noise_cov.reserve(std::size_t(bins));
  std::vector<CholeskyFactor> noise_chol;
  noise_chol.reserve(std::size_t(bins));
  for (int k = 0; k < bins; ++k) {
    HermitianMatrix cov = HermitianMatrix::identity(m);
    if (cfg.noise != NoiseKind::diffuse) {
      const cvec q = detail::unit_gaussian_vector(rng, m);
      cov = HermitianMatrix::outer(q);
      cov.add_scaled_identity(
          (cfg.noise == NoiseKind::directional ? 0.01 : 1.0) / m);
    }
    noise_chol.push_back(cholesky_factor(cov));
    scene.noise_cov.push_back(std::move(cov));
  }

  // Speech PSD: spectral profile times a per-frame envelope.
  scene.speech_psd.assign(std::size_t(frames),
                          std::vector<double>(std::size_t(bins)));
  for (int l = 0; l < frames; ++l) {
    const double env = 0.25 + rng.uniform();
    for (int k = 0; k < bins; ++k)
      scene.speech_psd[std::size_t(l)][std::size_t(k)] =
          env * detail::speech_profile(k, bins);
  }

  // Clean stem: x = g S, exactly rank one per bin.
  scene.clean = Spectrogram(m, frames, bins);
  for (int l = 0; l < frames; ++l) {
    for (int k = 0; k < bins; ++k) {
      const cplx s = rng.complex_gaussian() *
                     std::sqrt(scene.speech_psd[std::size_t(l)][std::size_t(k)]);
      const cvec& g = scene.steering[std::size_t(k)];
      for (int c = 0; c < m; ++c) scene.clean.at(c, l, k) = g[std::size_t(c)] * s;
    }
  }

  // Noise stem: n = L w with w ~ CN(0, I).
  scene.noise = Spectrogram(m, frames, bins);
  cvec w(static_cast<std::size_t>(m));
  for (int l = 0; l < frames; ++l) {
    for (int k = 0; k < bins; ++k) {
      for (int c = 0; c < m; ++c) w[std::size_t(c)] = rng.complex_gaussian();
      const CholeskyFactor& f = noise_chol[std::size_t(k)];
      for (int i = 0; i < m; ++i) {
        cplx acc{0.0, 0.0};
        for (int j = 0; j <= i; ++j)
          acc += f.lower[std::size_t(i) * m + j] * w[std::size_t(j)];
        scene.noise.at(i, l, k) = acc;
      }
    }
  }

  // Scale the noise so the measured broadband SNR at channel 1 is exact.
  double ps = 0.0, pn = 0.0;
  for (int l = 0; l < frames; ++l)
    for (int k = 0; k < bins; ++k) {
      ps += std::norm(scene.clean.at(0, l, k));
      pn += std::norm(scene.noise.at(0, l, k));
    }
  if (!(pn > 0.0) || !(ps > 0.0))
    throw NumericalError("scene: degenerate stem powers");
  const double c2 = (ps / pn) / std::pow(10.0, cfg.snr_db / 10.0);
  const double c = std::sqrt(c2);
  for (cplx& v : scene.noise.data) v *= c;
  for (HermitianMatrix& cov : scene.noise_cov) cov = cov.scaled(c2);
  return scene;
}

// Ground-truth per-bin covariances: Phi_xx(k) = mean_l phi_ss(l,k) g g^H
// (exactly rank one) and the scene's true noise covariance.
inline CovariancePair oracle_covariances(const SyntheticScene& scene) {
  const int bins = scene.config.bins;
  const int frames = scene.config.frames;
  CovariancePair out;
  out.mode = CovarianceMode::utterance;
  out.xx.reserve(std::size_t(bins));
  out.nn = scene.noise_cov;
  for (int k = 0; k < bins; ++k) {
    double mean_psd = 0.0;
    for (int l = 0; l < frames; ++l)
      mean_psd += scene.speech_psd[std::size_t(l)][std::size_t(k)];
    mean_psd /= frames;
    out.xx.push_back(
        HermitianMatrix::outer(scene.steering[std::size_t(k)]).scaled(mean_psd));
  }
  return out;
}

}  // namespace beamkit

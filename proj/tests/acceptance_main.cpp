// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Acceptance gate. Twelve independent checks, each printing one line:
//
//   [PASS] 03 closed-form filter matches the direct solve (max|dh|=2e-13, tol 1e-8)
//
// Tolerances are pinned in the code next to each check. The process exits
// nonzero if any check fails, so this binary doubles as a ctest entry.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "beamkit/filters.hpp"
#include "beamkit/masks.hpp"
#include "beamkit/metrics.hpp"
#include "beamkit/pipeline.hpp"
#include "beamkit/scenes.hpp"
#include "beamkit/stats.hpp"
#include "beamkit/stft.hpp"
#include "test_support.hpp"

namespace {

using beamkit::cplx;
using beamkit::cvec;
using beamkit::HermitianMatrix;
using beamkit::Lcg64;
using beamkit::MuSpec;

int g_failed = 0;

void report(int idx, bool pass, const char* what, const std::string& detail) {
  std::printf("[%s] %02d %s (%s)\n", pass ? "PASS" : "FAIL", idx, what,
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failed;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const char* name)
      : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

// 01: on synthetic scenes with exact model covariances, both the
// noise-normalized eigenbeamformer and the constant-residual member hold
// h^H Phi_nn h = 1 at every bin.
void criterion_01(int idx, const char* what) {
  const auto t0 = std::chrono::steady_clock::now();
  const int chans[] = {2, 4, 6};
  const beamkit::NoiseKind kinds[] = {beamkit::NoiseKind::diffuse,
                                      beamkit::NoiseKind::directional,
                                      beamkit::NoiseKind::mixed};
  double max_dev = 0.0;
  for (int s = 0; s < 20; ++s) {
    beamkit::SceneConfig cfg;
    cfg.channels = chans[s % 3];
    cfg.bins = 513;
    cfg.frames = 3;  // covariances are analytic, frames are irrelevant here
    cfg.noise = kinds[(s / 3) % 3];
    cfg.seed = 100 + std::uint64_t(s);
    const beamkit::SyntheticScene scene = beamkit::generate_scene(cfg);
    const beamkit::CovariancePair cov = beamkit::oracle_covariances(scene);
    for (int k = 0; k < cfg.bins; ++k) {
      for (const char* name : {"gev", "r1mwf-mug"}) {
        const cvec h =
            beamkit::compute_weights_bin(name, cov.xx[std::size_t(k)],
                                         cov.nn[std::size_t(k)], 0);
        const double r =
            beamkit::residual_noise_power(h, cov.nn[std::size_t(k)]);
        max_dev = std::max(max_dev, std::abs(r - 1.0));
      }
    }
  }
  const double secs = elapsed_s(t0);
  report(idx, max_dev < 1e-8 && secs < 10.0, what,
         "max|r-1|=" + num(max_dev) + " tol 1e-8, " + num(secs) + "s < 10s");
}

// 02: for fixed mu the residual noise power equals phi * lambda / (mu+lambda)^2.
void criterion_02(int idx, const char* what) {
  Lcg64 rng(2);
  double max_dev = 0.0;
  for (int i = 0; i < 250; ++i) {
    const int m = 2 + i % 7;
    const testkit::Rank1Pair p(rng, m);
    const int ref = i % m;
    const double phi = p.xx.at(ref, ref).real();
    const double lambda = beamkit::lambda_eig(p.xx, p.nn);
    for (double mu : {0.0, 1.0, 5.0, 10.0}) {
      const cvec h = beamkit::r1mwf(p.xx, p.nn, MuSpec::fixed(mu), ref);
      const double want = phi * lambda / ((mu + lambda) * (mu + lambda));
      const double got = beamkit::residual_noise_power(h, p.nn);
      max_dev = std::max(max_dev, std::abs(got - want));
    }
  }
  report(idx, max_dev < 1e-10, what, "max dev=" + num(max_dev) + ", tol 1e-10");
}

// 03: the closed-form family equals the direct regularized solve on rank-1
// speech covariances, for all five mu settings of the catalogue.
void criterion_03(int idx, const char* what) {
  Lcg64 rng(3);
  double max_dev = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int m = 2 + i % 7;
    const testkit::Rank1Pair p(rng, m);
    const int ref = i % m;
    const double lambda = beamkit::lambda_eig(p.xx, p.nn);
    const double mug = beamkit::mu_g(p.xx.at(ref, ref).real(), lambda);
    for (double mu : {0.0, 1.0, 5.0, 10.0, mug}) {
      const cvec closed = beamkit::r1mwf(p.xx, p.nn, MuSpec::fixed(mu), ref);
      const cvec direct = beamkit::sdw_mwf_direct(p.xx, p.nn, mu, ref);
      max_dev = std::max(max_dev, testkit::max_abs_diff(closed, direct));
    }
  }
  report(idx, max_dev < 1e-8, what, "max|dh|=" + num(max_dev) + ", tol 1e-8");
}

// 04: the mu=0 member passes the steering vector untouched, and mvdr has
// unit response toward the principal direction of the speech covariance.
void criterion_04(int idx, const char* what) {
  Lcg64 rng(4);
  double max_dev = 0.0;
  for (int i = 0; i < 400; ++i) {
    const int m = 2 + i % 5;
    const int ref = i % m;
    const testkit::Rank1Pair p(rng, m);
    const cvec h0 = beamkit::r1mwf(p.xx, p.nn, MuSpec::fixed(0.0), ref);
    max_dev = std::max(
        max_dev, std::abs(beamkit::cdot(h0, p.g) - p.g[std::size_t(ref)]));

    const cvec hm = beamkit::mvdr(p.xx, p.nn);
    const cvec a = beamkit::hermitian_evd(p.xx).vectors.front();
    max_dev = std::max(max_dev, std::abs(beamkit::cdot(hm, a) - cplx(1.0)));

    // Full-rank speech covariance: the unit response still holds.
    const HermitianMatrix xx = testkit::random_spd(rng, m, 0.1);
    const cvec hf = beamkit::mvdr(xx, p.nn);
    const cvec af = beamkit::hermitian_evd(xx).vectors.front();
    max_dev = std::max(max_dev, std::abs(beamkit::cdot(hf, af) - cplx(1.0)));
  }
  report(idx, max_dev < 1e-10, what, "max dev=" + num(max_dev) + ", tol 1e-10");
}

// 05: the eigenbeamformer attains the largest generalized eigenvalue as its
// output SNR and no catalogue member beats it on the same statistics.
void criterion_05(int idx, const char* what) {
  Lcg64 rng(5);
  double max_eq_dev = 0.0;
  double worst_margin = 1e9;
  for (int i = 0; i < 150; ++i) {
    const int m = 2 + i % 5;
    const int ref = i % m;
    const testkit::Rank1Pair p(rng, m);
    HermitianMatrix xx = p.xx;
    if (i % 2 == 1) xx = xx.plus(testkit::random_spd(rng, m, 0.05), 0.2);
    const cvec hg = beamkit::gev(xx, p.nn);
    const double snr_gev = beamkit::output_snr_db(hg, xx, p.nn);
    const double lmax = beamkit::generalized_evd(xx, p.nn).values.front();
    max_eq_dev =
        std::max(max_eq_dev, std::abs(snr_gev - 10.0 * std::log10(lmax)));
    for (const std::string& name : beamkit::catalogue()) {
      const cvec h = beamkit::compute_weights_bin(name, xx, p.nn, ref);
      worst_margin =
          std::min(worst_margin,
                   snr_gev - beamkit::output_snr_db(h, xx, p.nn));
    }
  }
  report(idx, max_eq_dev < 1e-6 && worst_margin > -1e-9, what,
         "|snr-eig|=" + num(max_eq_dev) + " tol 1e-6 dB, min margin=" +
             num(worst_margin) + " dB > -1e-9");
}

// 06: generalized eigenvectors whiten the noise covariance and diagonalize
// the speech covariance simultaneously.
void criterion_06(int idx, const char* what) {
  Lcg64 rng(6);
  double max_frob = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int m = 2 + i % 7;
    const HermitianMatrix xx = testkit::random_spd(rng, m, 0.2);
    const HermitianMatrix nn = testkit::random_spd(rng, m, 0.2);
    const beamkit::EigenPair ep = beamkit::generalized_evd(xx, nn);
    double fn = 0.0, fx = 0.0;
    for (int a = 0; a < m; ++a) {
      const cvec nb = beamkit::matvec(nn, ep.vectors[std::size_t(a)]);
      const cvec xb = beamkit::matvec(xx, ep.vectors[std::size_t(a)]);
      for (int b = 0; b < m; ++b) {
        const cplx en = beamkit::cdot(ep.vectors[std::size_t(b)], nb) -
                        (a == b ? cplx(1.0) : cplx(0.0));
        const cplx ex =
            beamkit::cdot(ep.vectors[std::size_t(b)], xb) -
            (a == b ? cplx(ep.values[std::size_t(a)]) : cplx(0.0));
        fn += std::norm(en);
        fx += std::norm(ex);
      }
    }
    max_frob = std::max(max_frob, std::sqrt(std::max(fn, fx)));
  }
  report(idx, max_frob < 1e-8, what,
         "max frobenius=" + num(max_frob) + ", tol 1e-8");
}

// 07: covariance reconstruction reproduces rank-1 inputs exactly, leaves the
// filters unchanged there, and preserves the trace on full-rank inputs.
void criterion_07(int idx, const char* what) {
  Lcg64 rng(7);
  double max_cov = 0.0, max_filt = 0.0, max_tr = 0.0;
  for (int i = 0; i < 400; ++i) {
    const int m = 2 + i % 5;
    const int ref = i % m;
    const testkit::Rank1Pair p(rng, m);
    const double lambda = beamkit::lambda_eig(p.xx, p.nn);
    const double mug = beamkit::mu_g(p.xx.at(ref, ref).real(), lambda);
    for (beamkit::Rank1Method method :
         {beamkit::Rank1Method::evd, beamkit::Rank1Method::gevd}) {
      const beamkit::Rank1Speech rec =
          beamkit::rank1_reconstruct(p.xx, p.nn, method);
      max_cov = std::max(max_cov, testkit::frob_diff(rec.phi_r1, p.xx));
      for (double mu : {0.0, 1.0, 5.0, mug}) {
        const cvec plain = beamkit::r1mwf(p.xx, p.nn, MuSpec::fixed(mu), ref);
        const cvec recon = beamkit::r1mwf_reconstructed(
            p.xx, p.nn, MuSpec::fixed(mu), method, ref);
        max_filt = std::max(max_filt, testkit::max_abs_diff(plain, recon));
      }
      const HermitianMatrix full = testkit::random_spd(rng, m, 0.2);
      const beamkit::Rank1Speech recf =
          beamkit::rank1_reconstruct(full, p.nn, method);
      max_tr = std::max(
          max_tr, std::abs(recf.phi_r1.trace() - full.trace()));
    }
  }
  report(idx, max_cov < 1e-10 && max_filt < 1e-8 && max_tr < 1e-10, what,
         "cov=" + num(max_cov) + " tol 1e-10, filt=" + num(max_filt) +
             " tol 1e-8, trace=" + num(max_tr) + " tol 1e-10");
}

// 08: all family members share one spatial direction; only the scalar gain
// (mu2+lambda)/(mu1+lambda) separates them.
void criterion_08(int idx, const char* what) {
  Lcg64 rng(8);
  double max_coll_dev = 0.0, max_ratio_dev = 0.0;
  for (int i = 0; i < 300; ++i) {
    const int m = 2 + i % 5;
    const int ref = i % m;
    const testkit::Rank1Pair p(rng, m);
    HermitianMatrix xx = p.xx;
    if (i % 2 == 1) xx = xx.plus(testkit::random_spd(rng, m, 0.05), 0.1);
    const double lambda = beamkit::lambda_eig(xx, p.nn);
    const double mug = beamkit::mu_g(xx.at(ref, ref).real(), lambda);
    const std::vector<double> mus = {0.0, 1.0, 5.0, 10.0, mug};
    std::vector<cvec> h;
    h.reserve(mus.size());
    for (double mu : mus)
      h.push_back(beamkit::r1mwf(xx, p.nn, MuSpec::fixed(mu), ref));
    for (std::size_t a = 0; a < mus.size(); ++a) {
      for (std::size_t b = a + 1; b < mus.size(); ++b) {
        max_coll_dev = std::max(
            max_coll_dev, std::abs(1.0 - testkit::collinearity(h[a], h[b])));
        const double got =
            std::sqrt(beamkit::norm2(h[a]) / beamkit::norm2(h[b]));
        const double want = (mus[b] + lambda) / (mus[a] + lambda);
        max_ratio_dev = std::max(max_ratio_dev, std::abs(got - want));
      }
    }
  }
  report(idx, max_coll_dev < 1e-8 && max_ratio_dev < 1e-9, what,
         "1-coll=" + num(max_coll_dev) + " tol 1e-8, ratio dev=" +
             num(max_ratio_dev) + " tol 1e-9");
}

// 09: with mask-estimated statistics the constant-residual member distorts
// more than mu=1, which distorts more than nothing at all.
void criterion_09(int idx, const char* what) {
  double sd_zero = 0.0, sd_one = 0.0, sd_mug = 0.0;
  const int scenes = 10;
  for (int s = 0; s < scenes; ++s) {
    beamkit::SceneConfig cfg;
    cfg.channels = 4;
    cfg.bins = 129;
    cfg.frames = 160;
    cfg.snr_db = 0.0;
    cfg.seed = 40 + std::uint64_t(s);
    const beamkit::SyntheticScene scene = beamkit::generate_scene(cfg);
    const beamkit::Spectrogram mix = beamkit::mixture(scene);
    const beamkit::MaskPair fused = beamkit::median_fuse(
        beamkit::oracle_masks(scene.clean, scene.noise));
    const beamkit::CovariancePair cov =
        beamkit::covariance_utterance(mix, fused);
    const beamkit::Spectrogram clean_ref =
        beamkit::detail::extract_channel(scene.clean, 0);
    const auto sd_of = [&](const std::string& name) {
      const beamkit::BeamformerWeights w =
          beamkit::compute_weights(name, cov, 0);
      return beamkit::sd_metric(beamkit::apply_weights(mix, w), clean_ref)
          .mean;
    };
    sd_zero += sd_of("r1mwf-0") / scenes;
    sd_one += sd_of("r1mwf-1") / scenes;
    sd_mug += sd_of("r1mwf-mug") / scenes;
  }
  report(idx, sd_mug > sd_one && sd_one > 0.0 && sd_zero <= sd_one, what,
         "mean sd: mug=" + num(sd_mug) + " > one=" + num(sd_one) +
             " > 0, zero=" + num(sd_zero) + " <= one");
}

// 10: analysis/synthesis round trip at the production frame size loses less
// than -80 dB over the interior of the signal.
void criterion_10(int idx, const char* what) {
  Lcg64 rng(10);
  beamkit::StftConfig cfg;  // 1024/256 sqrt-Hann
  double worst_db = -1e9;
  for (int i = 0; i < 100; ++i) {
    std::vector<double> sig(16000);
    for (double& v : sig) v = rng.gaussian();
    const beamkit::Spectrogram spec = beamkit::analyze({sig}, cfg);
    const std::vector<double> back = beamkit::synthesize(spec, cfg).front();
    double err2 = 0.0, ref2 = 0.0;
    for (std::size_t n = 1024; n + 1024 < sig.size(); ++n) {
      const double d = back[n] - sig[n];
      err2 += d * d;
      ref2 += sig[n] * sig[n];
    }
    worst_db = std::max(worst_db, 10.0 * std::log10(err2 / ref2));
  }
  report(idx, worst_db < -80.0, what,
         "worst=" + num(worst_db) + " dB, tol -80 dB");
}

// 11: on a 0 dB six-channel diffuse scene every catalogue filter improves
// the broadband SNR, and the full comparison finishes inside a minute.
void criterion_11(int idx, const char* what) {
  const TempDir dir("beamkit_acceptance_scene");

  beamkit::SimulateOptions sim;
  sim.channels = 6;
  sim.seconds = 5.0;
  sim.snr_db = 0.0;
  sim.seed = 11;
  sim.out_dir = dir.path.string();
  beamkit::run_simulate(sim);

  beamkit::CompareOptions cmp;
  cmp.mix = (dir.path / "mix.wav").string();
  cmp.clean = (dir.path / "clean.wav").string();
  cmp.noise = (dir.path / "noise.wav").string();

  const auto t0 = std::chrono::steady_clock::now();
  const nlohmann::json rep = beamkit::run_compare(cmp);
  const double secs = elapsed_s(t0);

  const double in_snr = rep["input_snr_db"].get<double>();
  double worst_gain = 1e9;
  std::size_t entries = 0;
  for (const nlohmann::json& f : rep["filters"]) {
    worst_gain =
        std::min(worst_gain, f["output_snr_db"].get<double>() - in_snr);
    ++entries;
  }
  report(idx,
         entries == beamkit::catalogue().size() && worst_gain > 0.0 &&
             secs < 60.0,
         what,
         "filters=" + std::to_string(entries) + ", min gain=" +
             num(worst_gain) + " dB > 0, " + num(secs) + "s < 60s");
}

// 12: the feature variance score is 0 against itself, 100 under uniform
// variance inflation, and matches a worked two-state example exactly.
void criterion_12(int idx, const char* what) {
  Lcg64 rng(12);
  beamkit::FeatureMatrix base;
  base.frames = 1000;
  base.dims = 4;
  base.data.resize(std::size_t(base.frames) * base.dims);
  base.labels.resize(std::size_t(base.frames));
  for (int l = 0; l < base.frames; ++l) {
    base.labels[std::size_t(l)] = l % 16;
    for (int d = 0; d < base.dims; ++d)
      base.data[std::size_t(l) * base.dims + d] = rng.gaussian();
  }
  const double self = beamkit::fv_metric(base, base).percentage;

  beamkit::FeatureMatrix inflated = base;
  for (double& v : inflated.data) v *= 3.0;
  const double full = beamkit::fv_metric(inflated, base).percentage;

  beamkit::FeatureMatrix fb, ft;
  fb.frames = ft.frames = 4;
  fb.dims = ft.dims = 1;
  fb.labels = ft.labels = {0, 0, 1, 1};
  fb.data = {0.0, 2.0, 0.0, 4.0};  // state variances 1 and 4
  ft.data = {0.0, 4.0, 0.0, 2.0};  // state variances 4 and 1
  const double half = beamkit::fv_metric(ft, fb).percentage;

  report(idx, self == 0.0 && full == 100.0 && half == 50.0, what,
         "self=" + num(self) + ", inflated=" + num(full) + ", fixture=" +
             num(half) + " want 0/100/50 exact");
}

}  // namespace

int main() {
  struct Entry {
    const char* what;
    void (*fn)(int, const char*);
  };
  const Entry entries[] = {
      {"unit residual noise power for gev and r1mwf-mug on model statistics",
       criterion_01},
      {"closed-form residual noise power for fixed mu", criterion_02},
      {"closed-form filter matches the direct regularized solve",
       criterion_03},
      {"distortionless response of r1mwf-0 and mvdr", criterion_04},
      {"gev attains the top generalized eigenvalue and the max output snr",
       criterion_05},
      {"generalized eigenvectors jointly diagonalize both covariances",
       criterion_06},
      {"rank-1 reconstruction is exact on rank-1 input and trace-preserving",
       criterion_07},
      {"family members share one direction with predictable gain ratios",
       criterion_08},
      {"speech distortion ordering: mug above mu=1 above distortionless",
       criterion_09},
      {"stft round trip error below -80 dB", criterion_10},
      {"all catalogue filters improve snr on a 0 dB diffuse scene in time",
       criterion_11},
      {"feature variance score: self 0, inflated 100, worked example exact",
       criterion_12},
  };
  int idx = 0;
  for (const Entry& e : entries) {
    ++idx;
    try {
      e.fn(idx, e.what);
    } catch (const std::exception& ex) {
      report(idx, false, e.what, std::string("exception: ") + ex.what());
    }
  }
  if (g_failed == 0) {
    std::printf("acceptance: all 12 criteria passed\n");
    return 0;
  }
  std::printf("acceptance: %d of 12 criteria FAILED\n", g_failed);
  return 1;
}

// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Per-bin beamformer family built on the rank-1 speech model
// Phi_xx = phi_ss g g^H. Core identities used throughout:
//
//   lambda        = tr{Phi_nn^{-1} Phi_xx}
//   r1mwf         h = Phi_nn^{-1} Phi_xx u_ref / (mu + lambda)
//   direct SDW    h = (Phi_xx + mu Phi_nn)^{-1} Phi_xx u_ref
//   residual      h^H Phi_nn h = phi_x1x1 * lambda / (mu + lambda)^2
//   mu_g          sqrt(phi_x1x1 * lambda) - lambda   (residual forced to 1)
//
// The direct SDW solve runs in the noise-whitened domain with an eigenvalue
// pseudo-inverse. On a rank-deficient system (mu = 0 with rank-1 Phi_xx)
// that picks the minimum-residual-noise solution among the MMSE optima,
// which is exactly the mu -> 0 limit of the r1mwf form, so the two routes
// agree for every mu >= 0.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "beamkit/complex_linalg.hpp"
#include "beamkit/stats.hpp"
#include "beamkit/weights.hpp"

namespace beamkit {

// Trade-off parameter: a fixed mu, or the constant-residual rule that
// derives mu from the bin's own statistics.
struct MuSpec {
  bool constant_noise = false;
  double mu = 1.0;

  static MuSpec fixed(double value) { return {false, value}; }
  static MuSpec constant_residual() { return {true, 0.0}; }
};

enum class Rank1Method { evd, gevd };

// Rank-1 speech model recovered from a full-rank covariance estimate.
struct Rank1Speech {
  cvec a;                   // spatial direction (unnormalized)
  double sigma_x = 0.0;     // speech power, tr{Phi_xx} / tr{a a^H}
  HermitianMatrix phi_r1;   // sigma_x * a a^H
};

inline double lambda_eig(const HermitianMatrix& xx, const HermitianMatrix& nn) {
  const double v = trace_product(invert(nn), xx).real();
  return v < 0.0 ? 0.0 : v;  // tolerate small negative rounding
}

inline double mu_g(double phi_x1x1, double lambda) {
  return std::sqrt(phi_x1x1 * lambda) - lambda;
}

inline double residual_noise_power(std::span<const cplx> h,
                                   const HermitianMatrix& nn) {
  const double p = cdot(h, matvec(nn, h)).real();
  return p < 0.0 ? 0.0 : p;
}

// 10 log10 of the Rayleigh quotient h^H Phi_xx h / h^H Phi_nn h.
inline double output_snr_db(std::span<const cplx> h, const HermitianMatrix& xx,
                            const HermitianMatrix& nn) {
  const double den = cdot(h, matvec(nn, h)).real();
  if (!(den > 0.0))
    throw NumericalError("output_snr_db: zero noise power at the output");
  const double num = std::max(cdot(h, matvec(xx, h)).real(), 0.0);
  return 10.0 * std::log10(num / den);
}

namespace detail {

inline double resolve_mu(const MuSpec& spec, const HermitianMatrix& xx,
                         double lambda, int ref) {
  if (!spec.constant_noise) return spec.mu;
  return mu_g(xx.at(ref, ref).real(), lambda);
}

inline void check_ref(int ref, int dim) {
  if (ref < 0 || ref >= dim)
    throw std::invalid_argument("reference channel out of range");
}

}  // namespace detail

// h = Phi_nn^{-1} Phi_xx u_ref / (mu + lambda).
inline cvec r1mwf(const HermitianMatrix& xx, const HermitianMatrix& nn,
                  const MuSpec& mu_spec, int ref) {
  detail::check_ref(ref, xx.dim());
  const HermitianMatrix nn_inv = invert(nn);
  const double lambda = std::max(trace_product(nn_inv, xx).real(), 0.0);
  const double mu = detail::resolve_mu(mu_spec, xx, lambda, ref);
  const double denom = mu + lambda;
  if (denom <= 1e-12) {
    std::ostringstream msg;
    msg << "r1mwf: degenerate gain, mu + lambda = " << denom;
    throw NumericalError(msg.str());
  }
  cvec col(std::size_t(xx.dim()));
  for (int i = 0; i < xx.dim(); ++i) col[std::size_t(i)] = xx.at(i, ref);
  cvec h = matvec(nn_inv, col);
  for (cplx& v : h) v /= denom;
  return h;
}

// Direct solve of (Phi_xx + mu Phi_nn) h = Phi_xx u_ref in the whitened
// domain: with Phi_nn = L L^H and W = L^{-1} Phi_xx L^{-H},
//   h = L^{-H} (W + mu I)^+ W L^H u_ref.
// Eigenvalues of W + mu I below a relative threshold are dropped, which
// resolves the rank-deficient mu = 0 case to the minimum-noise solution.
inline cvec sdw_mwf_direct(const HermitianMatrix& xx, const HermitianMatrix& nn,
                           double mu, int ref) {
  detail::check_ref(ref, xx.dim());
  const int n = xx.dim();
  const CholeskyFactor f = cholesky_factor(nn);

  // W = L^{-1} Phi_xx L^{-H}.
  cvec w_raw(std::size_t(n) * n);
  {
    cvec col(static_cast<std::size_t>(n));
    cvec y(std::size_t(n) * n);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) col[i] = xx.at(i, j);
      const cvec s = forward_subst(f, col);
      for (int i = 0; i < n; ++i) y[std::size_t(i) * n + j] = s[i];
    }
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) col[i] = std::conj(y[std::size_t(j) * n + i]);
      const cvec s = forward_subst(f, col);
      for (int i = 0; i < n; ++i) w_raw[std::size_t(j) * n + i] = std::conj(s[i]);
    }
  }
  const EigenPair eig = hermitian_evd(HermitianMatrix::from_entries(n, w_raw));

  // t = L^H u_ref is the conjugated ref-th row of L.
  cvec t(std::size_t(n), cplx{0.0, 0.0});
  for (int i = 0; i <= ref; ++i)
    t[std::size_t(i)] = std::conj(f.lower[std::size_t(ref) * n + i]);

  double wmax = 0.0;
  for (const double w : eig.values) wmax = std::max(wmax, std::abs(w));
  const double cut = 1e-12 * (wmax + std::abs(mu));

  cvec ht(std::size_t(n), cplx{0.0, 0.0});
  for (int j = 0; j < n; ++j) {
    const double shifted = eig.values[std::size_t(j)] + mu;
    if (std::abs(shifted) <= cut) continue;
    const cplx coef =
        eig.values[std::size_t(j)] * cdot(eig.vectors[std::size_t(j)], t) / shifted;
    for (int i = 0; i < n; ++i) ht[std::size_t(i)] += coef * eig.vectors[std::size_t(j)][std::size_t(i)];
  }
  return backward_subst(f, ht);
}

// Principal generalized eigenvector, scaled so h^H Phi_nn h = 1.
inline cvec gev(const HermitianMatrix& xx, const HermitianMatrix& nn) {
  EigenPair eig = generalized_evd(xx, nn);
  return std::move(eig.vectors.front());
}

// Blind analytic normalization gain for a GEV beamformer:
//   gain = sqrt(h^H Phi_nn Phi_nn h / M) / (h^H Phi_nn h).
inline double ban_gain(std::span<const cplx> h, const HermitianMatrix& nn) {
  const cvec v = matvec(nn, h);
  const double den = cdot(h, v).real();
  if (den <= 1e-15)
    throw NumericalError("ban_gain: h^H Phi_nn h vanishes");
  return std::sqrt(norm2(v) / nn.dim()) / den;
}

// Distortionless response along the principal eigenvector a of Phi_xx:
//   h = sqrt(a^H a) * Phi_nn^{-1} a / (a^H Phi_nn^{-1} a),  so h^H a = ||a||.
inline cvec mvdr(const HermitianMatrix& xx, const HermitianMatrix& nn) {
  if (xx.frobenius() == 0.0)
    throw NumericalError("mvdr: zero speech covariance");
  const EigenPair eig = hermitian_evd(xx);
  const cvec& a = eig.vectors.front();  // unit norm
  cvec w = hermitian_solve(nn, a);
  const double den = cdot(a, w).real();
  if (!(den > 0.0)) throw NumericalError("mvdr: degenerate steering");
  const double scale = std::sqrt(norm2(a)) / den;
  for (cplx& v : w) v *= scale;
  return w;
}

// Variance-scaled projection along the principal generalized eigenvector:
//   h = a a^H Phi_xx u_ref / (mu + lambda), a given in Phi_nn-normalized
// scaling. Reduces to the scalar Wiener gain at M = 1.
inline cvec vs_filter(const HermitianMatrix& xx, const HermitianMatrix& nn,
                      int ref, double mu = 1.0) {
  detail::check_ref(ref, xx.dim());
  const cvec a = gev(xx, nn);
  const double lambda = lambda_eig(xx, nn);
  const double denom = mu + lambda;
  if (denom <= 1e-12)
    throw NumericalError("vs_filter: degenerate gain");
  cvec col(std::size_t(xx.dim()));
  for (int i = 0; i < xx.dim(); ++i) col[std::size_t(i)] = xx.at(i, ref);
  const cplx coef = cdot(a, col) / denom;
  return scaled(a, coef);
}

// Rank-1 speech covariance reconstruction. The direction is the principal
// eigenvector of Phi_xx (evd) or Phi_nn times the principal generalized
// eigenvector (gevd); the power sigma_x = tr{Phi_xx} / tr{a a^H} preserves
// the trace for either direction scaling.
inline Rank1Speech rank1_reconstruct(const HermitianMatrix& xx,
                                     const HermitianMatrix& nn,
                                     Rank1Method method) {
  if (xx.frobenius() == 0.0)
    throw NumericalError("rank1_reconstruct: zero speech covariance");
  Rank1Speech out;
  if (method == Rank1Method::evd) {
    out.a = hermitian_evd(xx).vectors.front();
  } else {
    out.a = matvec(nn, gev(xx, nn));
  }
  const double aa = norm2(out.a);
  if (!(aa > 0.0))
    throw NumericalError("rank1_reconstruct: degenerate direction");
  out.sigma_x = xx.trace() / aa;
  out.phi_r1 = HermitianMatrix::outer(out.a).scaled(out.sigma_x);
  return out;
}

// r1mwf on the reconstructed rank-1 model; lambda and (for the constant
// residual rule) phi_x1x1 are recomputed from the reconstruction.
inline cvec r1mwf_reconstructed(const HermitianMatrix& xx,
                                const HermitianMatrix& nn,
                                const MuSpec& mu_spec, Rank1Method method,
                                int ref) {
  const Rank1Speech rec = rank1_reconstruct(xx, nn, method);
  return r1mwf(rec.phi_r1, nn, mu_spec, ref);
}

// ---------------------------------------------------------------------------
// Catalogue driver.

// Masks can starve a bin of noise frames, leaving an estimate that is rank
// deficient or exactly zero. The driver then works with a diagonally loaded
// copy, delta = 1e-10 * tr{Phi_nn} / M, so that whitening, inversion and the
// residual measurement all see one and the same positive definite matrix. A
// bin with no noise statistics at all borrows its scale from the speech
// trace instead; if that is zero too there is nothing to anchor and the
// matrix passes through to surface as a degenerate-statistics error.
inline HermitianMatrix loaded_noise(const HermitianMatrix& xx,
                                    const HermitianMatrix& nn) {
  if (nn.trace() > 0.0) {
    CholeskyFactor probe;
    double pivot = 0.0;
    if (detail::try_cholesky(nn, 0.0, probe, pivot)) return nn;
    HermitianMatrix out = nn;
    out.add_scaled_identity(1e-10 * nn.trace() /
                            static_cast<double>(nn.dim()));
    return out;
  }
  const double delta = 1e-10 * xx.trace() / static_cast<double>(xx.dim());
  if (!(delta > 0.0)) return nn;
  HermitianMatrix out = nn;
  out.add_scaled_identity(delta);
  return out;
}

inline const std::vector<std::string>& catalogue() {
  static const std::vector<std::string> names = {
      "mvdr",        "mwf",          "gev",           "gev-ban",
      "vs",          "r1mwf-0",      "r1mwf-1",       "r1mwf-5",
      "r1mwf-10",    "r1mwf-mug",    "r1mwf-1-evd",   "r1mwf-1-gevd",
      "r1mwf-mug-evd", "r1mwf-mug-gevd"};
  return names;
}

// Degenerate per-bin statistics, reported with the offending bin index.
struct DegenerateStatistics : NumericalError {
  DegenerateStatistics(int bin_index, const std::string& variant,
                       const std::string& why)
      : NumericalError("degenerate statistics at bin " +
                       std::to_string(bin_index) + " (" + variant +
                       "): " + why),
        bin(bin_index) {}
  int bin;
};

namespace detail {

struct VariantSpec {
  enum class Kind { mvdr, mwf, gev, gev_ban, vs, r1mwf, r1mwf_recon } kind;
  MuSpec mu;
  Rank1Method method = Rank1Method::evd;
};

// Parses a catalogue name; also accepts r1mwf-<mu> with a numeric trade-off
// and honors an explicit mu override for the bare "r1mwf" / "vs" names.
inline std::optional<VariantSpec> parse_variant(
    const std::string& name, std::optional<double> mu_override) {
  using Kind = VariantSpec::Kind;
  if (name == "mvdr") return VariantSpec{Kind::mvdr, MuSpec::fixed(0.0)};
  if (name == "mwf") return VariantSpec{Kind::mwf, MuSpec::fixed(1.0)};
  if (name == "gev") return VariantSpec{Kind::gev, MuSpec::fixed(0.0)};
  if (name == "gev-ban") return VariantSpec{Kind::gev_ban, MuSpec::fixed(0.0)};
  if (name == "vs")
    return VariantSpec{Kind::vs, MuSpec::fixed(mu_override.value_or(1.0))};
  if (name == "r1mwf") {
    if (!mu_override) return std::nullopt;
    return VariantSpec{Kind::r1mwf, MuSpec::fixed(*mu_override)};
  }
  if (name == "r1mwf-mug")
    return VariantSpec{Kind::r1mwf, MuSpec::constant_residual()};
  if (name == "r1mwf-mug-evd")
    return VariantSpec{Kind::r1mwf_recon, MuSpec::constant_residual(),
                       Rank1Method::evd};
  if (name == "r1mwf-mug-gevd")
    return VariantSpec{Kind::r1mwf_recon, MuSpec::constant_residual(),
                       Rank1Method::gevd};
  const std::string prefix = "r1mwf-";
  if (name.rfind(prefix, 0) == 0) {
    std::string rest = name.substr(prefix.size());
    Rank1Method method = Rank1Method::evd;
    bool recon = false;
    const auto strip = [&](const std::string& suffix, Rank1Method m) {
      if (rest.size() > suffix.size() &&
          rest.compare(rest.size() - suffix.size(), suffix.size(), suffix) == 0) {
        rest = rest.substr(0, rest.size() - suffix.size());
        method = m;
        recon = true;
      }
    };
    strip("-evd", Rank1Method::evd);
    if (!recon) strip("-gevd", Rank1Method::gevd);
    try {
      std::size_t used = 0;
      const double mu = std::stod(rest, &used);
      if (used != rest.size() || !(mu >= 0.0) || !std::isfinite(mu))
        return std::nullopt;
      return VariantSpec{recon ? Kind::r1mwf_recon : Kind::r1mwf,
                         MuSpec::fixed(mu), method};
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

inline cvec weights_for_bin(const VariantSpec& spec, const HermitianMatrix& xx,
                            const HermitianMatrix& nn_raw, int ref) {
  const HermitianMatrix nn = loaded_noise(xx, nn_raw);
  using Kind = VariantSpec::Kind;
  switch (spec.kind) {
    case Kind::mvdr:
      return mvdr(xx, nn);
    case Kind::mwf:
      return sdw_mwf_direct(xx, nn, spec.mu.mu, ref);
    case Kind::gev:
      return gev(xx, nn);
    case Kind::gev_ban: {
      cvec h = gev(xx, nn);
      const double g = ban_gain(h, nn);
      for (cplx& v : h) v *= g;
      return h;
    }
    case Kind::vs:
      return vs_filter(xx, nn, ref, spec.mu.mu);
    case Kind::r1mwf:
      return r1mwf(xx, nn, spec.mu, ref);
    case Kind::r1mwf_recon:
      return r1mwf_reconstructed(xx, nn, spec.mu, spec.method, ref);
  }
  throw std::logic_error("unreachable");
}

}  // namespace detail

inline bool is_known_variant(const std::string& name,
                             bool allow_mu_override = false) {
  return detail::parse_variant(name, allow_mu_override
                                         ? std::optional<double>(1.0)
                                         : std::nullopt)
      .has_value();
}

// Computes time-invariant weights for every bin of an utterance-mode
// covariance pair. Per-bin numeric failures surface as DegenerateStatistics
// carrying the bin index.
inline BeamformerWeights compute_weights(
    const std::string& variant, const CovariancePair& cov, int ref,
    std::optional<double> mu_override = std::nullopt) {
  if (cov.mode != CovarianceMode::utterance)
    throw std::invalid_argument("compute_weights: utterance-mode covariances required");
  const auto spec = detail::parse_variant(variant, mu_override);
  if (!spec) throw UsageError("unknown filter variant: " + variant);
  const int bins = cov.bins();
  if (bins < 1) throw std::invalid_argument("compute_weights: no bins");
  const int m = cov.xx.front().dim();
  detail::check_ref(ref, m);

  BeamformerWeights w;
  w.variant = variant;
  w.channels = m;
  w.bins = bins;
  w.reference = ref;
  w.data.resize(std::size_t(bins) * m);
  for (int k = 0; k < bins; ++k) {
    cvec h;
    try {
      h = detail::weights_for_bin(*spec, cov.xx[std::size_t(k)],
                                  cov.nn[std::size_t(k)], ref);
    } catch (const NumericalError& e) {
      throw DegenerateStatistics(k, variant, e.what());
    }
    for (int i = 0; i < m; ++i) w.data[std::size_t(k) * m + i] = h[std::size_t(i)];
  }
  if (!w.finite())
    throw NumericalError("compute_weights: non-finite weights for " + variant);
  return w;
}

// Single-bin weights used by the per-frame (recursive) path.
inline cvec compute_weights_bin(const std::string& variant,
                                const HermitianMatrix& xx,
                                const HermitianMatrix& nn, int ref,
                                std::optional<double> mu_override = std::nullopt) {
  const auto spec = detail::parse_variant(variant, mu_override);
  if (!spec) throw UsageError("unknown filter variant: " + variant);
  return detail::weights_for_bin(*spec, xx, nn, ref);
}

}  // namespace beamkit

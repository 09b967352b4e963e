// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "beamkit/complex_linalg.hpp"
#include "beamkit/errors.hpp"
#include "beamkit/rng.hpp"
#include "test_support.hpp"

using beamkit::cplx;
using beamkit::cvec;
using beamkit::HermitianMatrix;

TEST_CASE("hermitian matrix construction", "[linalg]") {
  SECTION("from_entries keeps the Hermitian part and a real diagonal") {
    const cvec raw = {cplx{1.0, 0.5}, cplx{2.0, 3.0},   // row 0
                      cplx{2.0, -2.0}, cplx{4.0, -0.25}};
    const HermitianMatrix m = HermitianMatrix::from_entries(2, raw);
    CHECK(m.at(0, 0) == cplx{1.0, 0.0});
    CHECK(m.at(1, 1) == cplx{4.0, 0.0});
    CHECK(m.at(0, 1) == cplx{2.0, 2.5});
    CHECK(m.at(1, 0) == std::conj(m.at(0, 1)));
  }

  SECTION("outer product matches direct computation") {
    beamkit::Lcg64 rng(7);
    const cvec v = testkit::random_vec(rng, 4);
    const HermitianMatrix m = HermitianMatrix::outer(v);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        const cplx want = v[std::size_t(i)] * std::conj(v[std::size_t(j)]);
        CHECK(std::abs(m.at(i, j) - want) < 1e-14);
      }
  }

  SECTION("dimension bounds") {
    CHECK_THROWS_AS(HermitianMatrix(0), std::invalid_argument);
    CHECK_THROWS_AS(HermitianMatrix(17), std::invalid_argument);
  }

  SECTION("trace and frobenius") {
    HermitianMatrix m = HermitianMatrix::identity(3).scaled(2.0);
    CHECK(m.trace() == Catch::Approx(6.0));
    CHECK(m.frobenius() == Catch::Approx(std::sqrt(12.0)));
  }
}

TEST_CASE("cholesky solve and inversion against a dense oracle", "[linalg]") {
  beamkit::Lcg64 rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    const int m = 2 + rep % 7;
    const HermitianMatrix a = testkit::random_spd(rng, m);
    const cvec b = testkit::random_vec(rng, m);

    // Oracle first: an independent Gaussian-elimination solve.
    const cvec want = testkit::dense_solve(m, testkit::dense_of(a), b);

    const cvec got = beamkit::hermitian_solve(a, b);
    CHECK(testkit::max_abs_diff(got, want) < 1e-9);

    const HermitianMatrix inv = beamkit::invert(a);
    // A * A^{-1} = I within 1e-9.
    for (int i = 0; i < m; ++i) {
      cvec col(static_cast<std::size_t>(m));
      for (int j = 0; j < m; ++j) col[std::size_t(j)] = inv.at(j, i);
      const cvec prod = beamkit::matvec(a, col);
      for (int j = 0; j < m; ++j) {
        const double want_ij = (i == j) ? 1.0 : 0.0;
        CHECK(std::abs(prod[std::size_t(j)] - want_ij) < 1e-9);
      }
    }
  }
}

TEST_CASE("inversion of fixed matrices", "[linalg]") {
  const cvec raw = {cplx{2.0, 0.0}, cplx{0.0, 0.0},
                    cplx{0.0, 0.0}, cplx{4.0, 0.0}};
  const HermitianMatrix inv =
      beamkit::invert(HermitianMatrix::from_entries(2, raw));
  CHECK(std::abs(inv.at(0, 0) - 0.5) < 1e-14);
  CHECK(std::abs(inv.at(1, 1) - 0.25) < 1e-14);
  CHECK(std::abs(inv.at(0, 1)) < 1e-14);

  const HermitianMatrix eye = beamkit::invert(HermitianMatrix::identity(3));
  CHECK(testkit::frob_diff(eye, HermitianMatrix::identity(3)) < 1e-14);
}

TEST_CASE("cholesky fallback loading on singular input", "[linalg]") {
  SECTION("all-zero matrix still factors through the loading floor") {
    const beamkit::CholeskyFactor f =
        beamkit::cholesky_factor(HermitianMatrix(3));
    CHECK(f.loading > 0.0);
  }

  SECTION("rank-1 matrix factors only with loading") {
    beamkit::Lcg64 rng(5);
    const HermitianMatrix a =
        HermitianMatrix::outer(testkit::random_unit(rng, 4));
    const beamkit::CholeskyFactor f = beamkit::cholesky_factor(a);
    CHECK(f.loading > 0.0);
  }

  SECTION("well-conditioned input is factored without loading") {
    beamkit::Lcg64 rng(6);
    const beamkit::CholeskyFactor f =
        beamkit::cholesky_factor(testkit::random_spd(rng, 4));
    CHECK(f.loading == 0.0);
  }
}

TEST_CASE("trace_product matches a double-loop oracle", "[linalg]") {
  CHECK(beamkit::trace_product(HermitianMatrix::identity(3),
                               HermitianMatrix::identity(3))
            .real() == Catch::Approx(3.0));

  // tr{diag(2,2)^{-1} [[1,1],[1,1]]} = 1.
  const cvec ones = {cplx{1, 0}, cplx{1, 0}, cplx{1, 0}, cplx{1, 0}};
  const HermitianMatrix inv =
      beamkit::invert(HermitianMatrix::identity(2).scaled(2.0));
  CHECK(beamkit::trace_product(inv, HermitianMatrix::from_entries(2, ones))
            .real() == Catch::Approx(1.0));

  beamkit::Lcg64 rng(13);
  for (int rep = 0; rep < 20; ++rep) {
    const int m = 2 + rep % 5;
    const HermitianMatrix a = testkit::random_spd(rng, m);
    const HermitianMatrix b = testkit::random_spd(rng, m);
    cplx want{0.0, 0.0};
    for (int i = 0; i < m; ++i)
      for (int k = 0; k < m; ++k) want += a.at(i, k) * b.at(k, i);
    const cplx got = beamkit::trace_product(a, b);
    CHECK(std::abs(got - want) < 1e-10 * (1.0 + std::abs(want)));
  }
}

TEST_CASE("hermitian evd basics", "[linalg]") {
  SECTION("identity") {
    const beamkit::EigenPair e =
        beamkit::hermitian_evd(HermitianMatrix::identity(2));
    CHECK(e.values[0] == Catch::Approx(1.0));
    CHECK(e.values[1] == Catch::Approx(1.0));
  }

  SECTION("diag(3,1)") {
    HermitianMatrix m(2);
    m.add_scaled_identity(1.0);
    const cvec e0 = {cplx{1, 0}, cplx{0, 0}};
    m.add_weighted_outer(e0, 2.0);  // diag(3, 1)
    const beamkit::EigenPair e = beamkit::hermitian_evd(m);
    REQUIRE(e.values.size() == 2);
    CHECK(e.values[0] == Catch::Approx(3.0));
    CHECK(e.values[1] == Catch::Approx(1.0));
    CHECK(std::abs(e.vectors[0][0] - 1.0) < 1e-12);
    CHECK(std::abs(e.vectors[0][1]) < 1e-12);
    CHECK(std::abs(e.vectors[1][1] - 1.0) < 1e-12);
  }

  SECTION("1x1") {
    HermitianMatrix m(1);
    m.add_scaled_identity(-2.5);
    const beamkit::EigenPair e = beamkit::hermitian_evd(m);
    CHECK(e.values[0] == Catch::Approx(-2.5));
    CHECK(std::abs(e.vectors[0][0] - 1.0) < 1e-14);
  }
}

TEST_CASE("hermitian evd reconstruction, orthonormality, ordering", "[linalg]") {
  beamkit::Lcg64 rng(17);
  for (int rep = 0; rep < 100; ++rep) {
    const int m = 2 + rep % 7;
    // Indefinite Hermitian input: SPD minus a scaled identity.
    HermitianMatrix a = testkit::random_spd(rng, m, 0.0);
    a.add_scaled_identity(-0.7);

    const beamkit::EigenPair e = beamkit::hermitian_evd(a);

    for (std::size_t j = 1; j < e.values.size(); ++j)
      CHECK(e.values[j - 1] >= e.values[j]);

    // Eigenvalue sum = trace.
    double vsum = 0.0;
    for (double v : e.values) vsum += v;
    CHECK(vsum == Catch::Approx(a.trace()).margin(1e-9 * (1.0 + a.frobenius())));

    // A v = lambda v and V^H V = I.
    for (int j = 0; j < m; ++j) {
      const cvec av = beamkit::matvec(a, e.vectors[std::size_t(j)]);
      for (int i = 0; i < m; ++i)
        CHECK(std::abs(av[std::size_t(i)] -
                       e.values[std::size_t(j)] *
                           e.vectors[std::size_t(j)][std::size_t(i)]) <
              1e-9 * (1.0 + a.frobenius()));
      for (int j2 = 0; j2 < m; ++j2) {
        const cplx g =
            beamkit::cdot(e.vectors[std::size_t(j)], e.vectors[std::size_t(j2)]);
        CHECK(std::abs(g - (j == j2 ? 1.0 : 0.0)) < 1e-10);
      }
    }

    // Phase convention: largest-magnitude entry is real positive.
    for (int j = 0; j < m; ++j) {
      const cvec& v = e.vectors[std::size_t(j)];
      std::size_t big = 0;
      for (std::size_t i = 1; i < v.size(); ++i)
        if (std::abs(v[i]) > std::abs(v[big]) + 1e-15) big = i;
      CHECK(v[big].imag() == Catch::Approx(0.0).margin(1e-10));
      CHECK(v[big].real() > 0.0);
    }
  }
}

TEST_CASE("generalized evd joint diagonalization", "[linalg]") {
  beamkit::Lcg64 rng(19);
  for (int rep = 0; rep < 100; ++rep) {
    const int m = 2 + rep % 7;
    const HermitianMatrix xx = testkit::random_spd(rng, m);
    const HermitianMatrix nn = testkit::random_spd(rng, m);
    const beamkit::EigenPair e = beamkit::generalized_evd(xx, nn);

    // B^H nn B = I and B^H xx B = diag(values), Frobenius 1e-8.
    double err_nn = 0.0, err_xx = 0.0;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        const cplx gn = beamkit::cdot(e.vectors[std::size_t(i)],
                                      beamkit::matvec(nn, e.vectors[std::size_t(j)]));
        const cplx gx = beamkit::cdot(e.vectors[std::size_t(i)],
                                      beamkit::matvec(xx, e.vectors[std::size_t(j)]));
        err_nn += std::norm(gn - (i == j ? 1.0 : 0.0));
        err_xx += std::norm(gx - (i == j ? e.values[std::size_t(i)] : 0.0));
      }
    CHECK(std::sqrt(err_nn) < 1e-8);
    CHECK(std::sqrt(err_xx) < 1e-8);
  }
}

TEST_CASE("generalized evd with identity noise reduces to plain evd", "[linalg]") {
  beamkit::Lcg64 rng(23);
  const HermitianMatrix xx = testkit::random_spd(rng, 4);
  const beamkit::EigenPair plain = beamkit::hermitian_evd(xx);
  const beamkit::EigenPair gen =
      beamkit::generalized_evd(xx, HermitianMatrix::identity(4));
  for (int j = 0; j < 4; ++j) {
    CHECK(gen.values[std::size_t(j)] ==
          Catch::Approx(plain.values[std::size_t(j)]).margin(1e-9));
    CHECK(testkit::collinearity(gen.vectors[std::size_t(j)],
                                plain.vectors[std::size_t(j)]) ==
          Catch::Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("generalized evd on rank-1 speech covariance", "[linalg]") {
  beamkit::Lcg64 rng(29);
  for (int rep = 0; rep < 50; ++rep) {
    const int m = 2 + rep % 5;
    const testkit::Rank1Pair p(rng, m);
    const beamkit::EigenPair e = beamkit::generalized_evd(p.xx, p.nn);

    // Exactly one nonzero eigenvalue, equal to tr{nn^{-1} xx}.
    const double lam =
        beamkit::trace_product(beamkit::invert(p.nn), p.xx).real();
    CHECK(std::abs(e.values.front() - lam) < 1e-8 * (1.0 + lam));
    for (std::size_t j = 1; j < e.values.size(); ++j)
      CHECK(std::abs(e.values[j]) < 1e-8 * (1.0 + lam));
  }
}

TEST_CASE("largest generalized eigenvalue dominates the Rayleigh quotient",
          "[linalg]") {
  beamkit::Lcg64 rng(31);
  const int m = 5;
  const HermitianMatrix xx = testkit::random_spd(rng, m);
  const HermitianMatrix nn = testkit::random_spd(rng, m);
  const beamkit::EigenPair e = beamkit::generalized_evd(xx, nn);
  const double lam = e.values.front();

  // The eigenvector itself attains the quotient...
  const double at_eig = testkit::quad_form(e.vectors.front(), xx) /
                        testkit::quad_form(e.vectors.front(), nn);
  CHECK(std::abs(at_eig - lam) < 1e-6 * (1.0 + lam));

  // ...and no random direction exceeds it.
  for (int rep = 0; rep < 1000; ++rep) {
    const cvec h = testkit::random_unit(rng, m);
    const double q = testkit::quad_form(h, xx) / testkit::quad_form(h, nn);
    CHECK(q <= lam + 1e-9 * (1.0 + lam));
  }
}

TEST_CASE("singular noise matrix reports the offending pivot", "[linalg]") {
  // Indefinite input: Cholesky cannot succeed even with loading.
  HermitianMatrix bad(2);
  const cvec e0 = {cplx{1, 0}, cplx{0, 0}};
  bad.add_weighted_outer(e0, -1.0);  // diag(-1, 0)
  CHECK_THROWS_AS(beamkit::cholesky_factor(bad), beamkit::NumericalError);
  try {
    beamkit::cholesky_factor(bad);
  } catch (const beamkit::NumericalError& err) {
    CHECK(std::string(err.what()).find("pivot") != std::string::npos);
  }
}

#include <doctest.h>

#include <cmath>

#include "ctlab/metrics.hpp"
#include "ctlab/phantom.hpp"
#include "ctlab/rng.hpp"
#include "ctlab/solvers.hpp"

using namespace ctlab;

namespace {

ScannerPreset small_bench(int channels = 64) {
  ScannerPreset p;
  p.n_channels = channels;
  p.det_pixel_mm = 0.2992 * 478.0 / channels;
  return p;
}

Eigen::MatrixXd random_spd(int n, Rng& rng) {
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = rng.normal();
  return m * m.transpose() + Eigen::MatrixXd::Identity(n, n);
}

// Random rotation of a well-spread spectrum; keeps finite-precision CG at
// its exact-termination behavior.
Eigen::MatrixXd random_spd_spread(int n, Rng& rng) {
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = rng.normal();
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ();
  Eigen::VectorXd spectrum(n);
  for (int i = 0; i < n; ++i) spectrum[i] = 1.0 + 49.0 * i / (n - 1.0);
  return q * spectrum.asDiagonal() * q.transpose();
}

}  // namespace

TEST_CASE("cg solves simple systems") {
  SUBCASE("identity map in one step") {
    Eigen::VectorXd b(3);
    b << 1.0, -2.0, 3.5;
    const auto [x, rep] = cg([](const Eigen::VectorXd& v) { return v; }, b,
                             Eigen::VectorXd::Zero(3), 1, 1e-14);
    CHECK((x - b).norm() == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(rep.converged);
    CHECK(rep.iterations_run == 1);
  }
  SUBCASE("2x2 diagonal in two steps") {
    Eigen::VectorXd b(2);
    b << 2.0, 5.0;
    Eigen::VectorXd d(2);
    d << 2.0, 5.0;
    const auto [x, rep] = cg(
        [&d](const Eigen::VectorXd& v) -> Eigen::VectorXd { return d.asDiagonal() * v; }, b,
        Eigen::VectorXd::Zero(2), 2, 0.0);
    CHECK(std::abs(x[0] - 1.0) < 1e-12);
    CHECK(std::abs(x[1] - 1.0) < 1e-12);
  }
  SUBCASE("random SPD 20x20 is solved within 20 iterations") {
    Rng rng(4);
    const Eigen::MatrixXd a = random_spd_spread(20, rng);
    Eigen::VectorXd b(20);
    for (int i = 0; i < 20; ++i) b[i] = rng.normal();
    const auto [x, rep] = cg(
        [&a](const Eigen::VectorXd& v) -> Eigen::VectorXd { return a * v; }, b,
        Eigen::VectorXd::Zero(20), 20, 1e-12);
    CHECK((b - a * x).norm() / b.norm() < 1e-10);
  }
  SUBCASE("iteration cap is honored") {
    Rng rng(5);
    const Eigen::MatrixXd a = random_spd(30, rng);
    Eigen::VectorXd b(30);
    for (int i = 0; i < 30; ++i) b[i] = rng.normal();
    const auto [x, rep] = cg(
        [&a](const Eigen::VectorXd& v) -> Eigen::VectorXd { return a * v; }, b,
        Eigen::VectorXd::Zero(30), 3, 0.0);
    CHECK(rep.iterations_run == 3);
    CHECK_FALSE(rep.converged);
    CHECK(rep.final_relative_residual >= 0.0);
  }
}

TEST_CASE("cg quadratic objective is non-increasing per iteration") {
  // 1/2 x^T A x - b^T x decreases monotonically; checked on random systems.
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const int n = 24;
    const Eigen::MatrixXd a = random_spd(n, rng);
    Eigen::VectorXd b(n), x0(n);
    for (int i = 0; i < n; ++i) {
      b[i] = rng.normal();
      x0[i] = rng.normal();
    }
    double prev = std::numeric_limits<double>::infinity();
    bool monotone = true;
    cg([&a](const Eigen::VectorXd& v) -> Eigen::VectorXd { return a * v; }, b, x0, n, 0.0,
       [&](int, const Eigen::VectorXd& x, double) {
         const double obj = 0.5 * x.dot(a * x) - b.dot(x);
         if (obj > prev + 1e-9 * (1.0 + std::abs(prev))) monotone = false;
         prev = obj;
       });
    CHECK(monotone);
  }
}

TEST_CASE("cg reports a divergence error naming the iteration") {
  Eigen::VectorXd b = Eigen::VectorXd::Ones(4);
  const auto bad = [](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return std::numeric_limits<double>::quiet_NaN() * v;
  };
  CHECK_THROWS_WITH_AS(cg(bad, b, Eigen::VectorXd::Zero(4), 5, 0.0),
                       doctest::Contains("iteration"), std::runtime_error);
}

TEST_CASE("cgls reconstructs a consistent well-posed system") {
  const FanBeamGeometry g = make_geometry(128, AngularSpan::half, small_bench());
  const GridSpec spec = default_grid_spec(g, 32);
  const ImageGrid truth = rasterize(standard_shepp_logan(), 32, spec.pixel_size_mm);
  const Sinogram y = forward_project(truth, g);
  const ImageGrid recon = cgls(y, g, spec, 200);
  CHECK(psnr(recon, truth) > 40.0);
}

TEST_CASE("cgls of a zero sinogram is the zero image") {
  const FanBeamGeometry g = make_geometry(8, AngularSpan::half, small_bench());
  const GridSpec spec = default_grid_spec(g, 16);
  Sinogram y;
  y.n_views = 8;
  y.n_channels = g.n_channels;
  y.values = RowMatrix::Zero(8, g.n_channels);
  y.geometry_fingerprint = g.fingerprint();
  const ImageGrid x = cgls(y, g, spec, 10);
  CHECK(x.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cgls degrades under sparse views") {
  const GridSpec spec = default_grid_spec(make_geometry(1, AngularSpan::half, small_bench()), 64);
  const ImageGrid truth = rasterize(standard_shepp_logan(), 64, spec.pixel_size_mm);

  const auto run = [&](int views) {
    const FanBeamGeometry g = make_geometry(views, AngularSpan::half, small_bench());
    const Sinogram y = forward_project(truth, g);
    return psnr(cgls(y, g, spec, 30), truth);
  };
  const double sparse = run(12);
  const double dense = run(128);
  CHECK(sparse < dense);
}

TEST_CASE("dds_data_consistency") {
  const FanBeamGeometry g = make_geometry(6, AngularSpan::half, small_bench());
  const GridSpec spec = default_grid_spec(g, 8);
  const ImageGrid truth = rasterize(standard_shepp_logan(), 8, spec.pixel_size_mm);
  const Sinogram y = forward_project(truth, g);

  ImageGrid x_hat = spec.make_zero();
  Rng rng(8);
  for (Eigen::Index i = 0; i < x_hat.values.size(); ++i) x_hat.values.data()[i] = rng.normal();

  SUBCASE("gamma = 0 returns x_hat unchanged") {
    const ImageGrid out = dds_data_consistency(x_hat, y, g, 0.0, 7);
    CHECK(out.values == x_hat.values);
  }
  SUBCASE("matches the dense direct solve at full convergence") {
    const double gamma = 3.0;
    const Eigen::MatrixXd a = as_dense_matrix(g, 8, spec.pixel_size_mm);
    const Eigen::MatrixXd b_mat =
        gamma * a.transpose() * a + Eigen::MatrixXd::Identity(64, 64);
    const Eigen::VectorXd rhs =
        Eigen::Map<const Eigen::VectorXd>(x_hat.values.data(), 64) +
        gamma * a.transpose() * Eigen::Map<const Eigen::VectorXd>(y.values.data(), y.values.size());
    const Eigen::VectorXd direct = b_mat.ldlt().solve(rhs);

    const ImageGrid out = dds_data_consistency(x_hat, y, g, gamma, 200);
    const Eigen::Map<const Eigen::VectorXd> got(out.values.data(), 64);
    CHECK((got - direct).norm() / direct.norm() < 1e-8);
  }
  SUBCASE("data residual decreases monotonically with gamma") {
    double prev = std::numeric_limits<double>::infinity();
    for (double gamma : {0.1, 1.0, 10.0, 100.0, 1000.0}) {
      const ImageGrid out = dds_data_consistency(x_hat, y, g, gamma, 300);
      const double resid = (forward_project(out, g).values - y.values).norm();
      CHECK(resid <= prev + 1e-9);
      prev = resid;
    }
  }
  SUBCASE("the proximal objective never increases over the start") {
    const double gamma = 2.0;
    for (int m : {1, 2, 5, 20}) {
      const ImageGrid out = dds_data_consistency(x_hat, y, g, gamma, m);
      const auto objective = [&](const ImageGrid& img) {
        const double data = (forward_project(img, g).values - y.values).squaredNorm();
        const double prox = (img.values - x_hat.values).squaredNorm();
        return 0.5 * gamma * data + 0.5 * prox;
      };
      CHECK(objective(out) <= objective(x_hat) + 1e-9);
    }
  }
  SUBCASE("unregularized form runs CG on the normal equations") {
    const ImageGrid out = dds_data_consistency(x_hat, y, g, std::nullopt, 100);
    // Enough steps on a consistent system pull the residual down.
    const double before = (forward_project(x_hat, g).values - y.values).norm();
    const double after = (forward_project(out, g).values - y.values).norm();
    CHECK(after < 0.01 * before);
  }
}

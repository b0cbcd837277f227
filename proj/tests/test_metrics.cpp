#include <doctest.h>

#include <cmath>

#include "ctlab/experiments.hpp"
#include "ctlab/metrics.hpp"
#include "ctlab/phantom.hpp"
#include "ctlab/rng.hpp"

using namespace ctlab;

namespace {

ImageGrid noise_image(int side, std::uint64_t seed) {
  ImageGrid img(side, 1.0);
  Rng rng(seed);
  for (Eigen::Index i = 0; i < img.values.size(); ++i) img.values.data()[i] = rng.normal();
  return img;
}

ImageGrid ramp_image(int side) {
  ImageGrid img(side, 1.0);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c)
      img.values(r, c) = (r * side + c) / double(side * side - 1);  // range exactly [0, 1]
  return img;
}

// Counts maximal constant runs strictly below both neighbors.
int count_local_min_runs(const Eigen::VectorXd& v) {
  int count = 0;
  Eigen::Index i = 1;
  while (i < v.size() - 1) {
    Eigen::Index j = i;
    while (j + 1 < v.size() && v[j + 1] == v[i]) ++j;
    if (j < v.size() - 1 && v[i - 1] > v[i] && v[j + 1] > v[i]) ++count;
    i = j + 1;
  }
  return count;
}

}  // namespace

TEST_CASE("psnr") {
  const ImageGrid ref = ramp_image(32);
  SUBCASE("identical images report infinity") {
    CHECK(std::isinf(psnr(ref, ref)));
  }
  SUBCASE("MSE equal to the squared range gives 0 dB") {
    ImageGrid x = ref;
    x.values.array() += 1.0;  // range of ref is exactly 1
    CHECK(psnr(x, ref, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("constant offset of 0.1 on a unit-range reference gives 20 dB") {
    ImageGrid x = ref;
    x.values.array() += 0.1;
    CHECK(psnr(x, ref) == doctest::Approx(20.0).epsilon(1e-12));
  }
  SUBCASE("symmetric when the range is pinned") {
    const ImageGrid a = noise_image(32, 1);
    const ImageGrid b = noise_image(32, 2);
    CHECK(psnr(a, b, 2.0) == doctest::Approx(psnr(b, a, 2.0)).epsilon(1e-12));
  }
  SUBCASE("shape mismatch is rejected") {
    CHECK_THROWS_AS(psnr(ramp_image(16), ramp_image(32)), std::invalid_argument);
  }
}

TEST_CASE("ssim") {
  SUBCASE("identical images give exactly one") {
    const ImageGrid x = noise_image(32, 3);
    CHECK(ssim(x, x) == 1.0);
  }
  SUBCASE("negated zero-mean image gives a negative score") {
    // Checkerboard: window means vanish, so the sign is carried entirely by
    // the (negative) structure term.
    ImageGrid ref(16, 1.0);
    Rng rng(4);
    for (int r = 0; r < 16; ++r)
      for (int c = 0; c < 16; ++c)
        ref.values(r, c) = ((r + c) % 2 ? 1.0 : -1.0) * (1.0 + 0.1 * rng.uniform());
    ImageGrid x = ref;
    x.values = -ref.values;
    CHECK(ssim(x, ref) < 0.0);
  }
  SUBCASE("independent noise scores near zero") {
    double acc = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s)
      acc += std::abs(ssim(noise_image(64, 100 + s), noise_image(64, 200 + s)));
    CHECK(acc / 10.0 < 0.1);
  }
  SUBCASE("window larger than the image is rejected") {
    CHECK_THROWS_AS(ssim(ramp_image(8), ramp_image(8)), std::invalid_argument);
  }
}

TEST_CASE("metric invariances under rescaling") {
  const ImageGrid ref = rasterize(standard_shepp_logan(), 64);
  ImageGrid x = ref;
  Rng rng(5);
  for (Eigen::Index i = 0; i < x.values.size(); ++i)
    x.values.data()[i] += 0.05 * rng.normal();

  const double p0 = psnr(x, ref);
  const double s0 = ssim(x, ref);

  SUBCASE("pure rescale leaves both metrics unchanged") {
    const double a = 3.25;
    ImageGrid xs = x, rs = ref;
    xs.values *= a;
    rs.values *= a;
    CHECK(psnr(xs, rs) == doctest::Approx(p0).epsilon(1e-9));
    CHECK(ssim(xs, rs) == doctest::Approx(s0).epsilon(1e-9));
  }
  SUBCASE("psnr is also offset invariant") {
    ImageGrid xs = x, rs = ref;
    xs.values = 2.0 * x.values;
    xs.values.array() += 0.7;
    rs.values = 2.0 * ref.values;
    rs.values.array() += 0.7;
    CHECK(psnr(xs, rs) == doctest::Approx(p0).epsilon(1e-9));
  }
}

TEST_CASE("line profiles") {
  SUBCASE("constant image gives a constant vector of full width") {
    ImageGrid img(32, 1.0);
    img.values.setConstant(2.5);
    const Eigen::VectorXd p = line_profile(img, 7);
    CHECK(p.size() == 32);
    CHECK(p.minCoeff() == 2.5);
    CHECK(p.maxCoeff() == 2.5);
  }
  SUBCASE("row 25 of the experimental phantom shows exactly three dips") {
    const ImageGrid img = rasterize(experimental_shepp_logan(), 128);
    const Eigen::VectorXd profile = line_profile(img, 25);
    const Eigen::VectorXd hole_region = profile.segment(50, 26);  // columns 50..75
    CHECK(count_local_min_runs(hole_region) == 3);
  }
  SUBCASE("out of bounds is rejected") {
    CHECK_THROWS_AS(line_profile(ramp_image(16), 16), std::out_of_range);
    CHECK_THROWS_AS(line_profile(ramp_image(16), -1), std::out_of_range);
  }
}

TEST_CASE("seed ensembles") {
  SUBCASE("single report has zero spread") {
    const MetricReport r = ensemble({{20.0, 0.8, 1, 0.0}});
    CHECK(r.psnr_db == 20.0);
    CHECK(r.ssim == 0.8);
    CHECK(r.n_seeds == 1);
    CHECK(r.std_psnr_db == 0.0);
  }
  SUBCASE("two reports average with population std") {
    const MetricReport r = ensemble({{20.0, 0.7, 1, 0.0}, {30.0, 0.9, 1, 0.0}});
    CHECK(r.psnr_db == doctest::Approx(25.0));
    CHECK(r.std_psnr_db == doctest::Approx(5.0));
    CHECK(r.ssim == doctest::Approx(0.8));
    CHECK(r.n_seeds == 2);
  }
  SUBCASE("empty input is rejected") {
    CHECK_THROWS_AS(ensemble({}), std::invalid_argument);
  }
  SUBCASE("experiment default runs ten seeds") {
    CHECK(default_config(ExperimentKind::sweep).seeds.size() == 10);
  }
}

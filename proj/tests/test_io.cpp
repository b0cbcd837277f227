#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ctlab/geometry.hpp"
#include "ctlab/io.hpp"
#include "ctlab/rng.hpp"

using namespace ctlab;

namespace {

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "ctlab-io-tests";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("image files round trip at float precision") {
  ImageGrid img(16, 0.65625);
  Rng rng(1);
  for (Eigen::Index i = 0; i < img.values.size(); ++i) img.values.data()[i] = rng.normal();

  const auto path = temp_dir() / "img.cti";
  write_image(path, img);
  const ImageGrid back = read_image(path);
  CHECK(back.side_pixels == 16);
  CHECK(back.pixel_size_mm == doctest::Approx(0.65625).epsilon(1e-7));
  for (Eigen::Index i = 0; i < img.values.size(); ++i)
    CHECK(back.values.data()[i] == static_cast<float>(img.values.data()[i]));

  SUBCASE("header is 16 bytes with the magic") {
    const std::string bytes = slurp(path);
    REQUIRE(bytes.size() == 16 + 4u * 16 * 16);
    CHECK(bytes.substr(0, 6) == "CTIMG1");
  }
}

TEST_CASE("sinogram files carry shape and fingerprint") {
  const FanBeamGeometry g = make_geometry(4, AngularSpan::half);
  Sinogram s;
  s.n_views = 4;
  s.n_channels = 7;
  s.geometry_fingerprint = g.fingerprint();
  s.values.resize(4, 7);
  Rng rng(2);
  for (Eigen::Index i = 0; i < s.values.size(); ++i) s.values.data()[i] = rng.uniform();

  const auto path = temp_dir() / "sino.cts";
  write_sinogram(path, s);
  const Sinogram back = read_sinogram(path);
  CHECK(back.n_views == 4);
  CHECK(back.n_channels == 7);
  CHECK(back.geometry_fingerprint == g.fingerprint());
  for (Eigen::Index i = 0; i < s.values.size(); ++i)
    CHECK(back.values.data()[i] == static_cast<float>(s.values.data()[i]));

  SUBCASE("header is 24 bytes with the magic") {
    const std::string bytes = slurp(path);
    REQUIRE(bytes.size() == 24 + 4u * 4 * 7);
    CHECK(bytes.substr(0, 6) == "CTSIN1");
  }
}

TEST_CASE("malformed files are rejected") {
  const auto path = temp_dir() / "bad.cti";
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOTMAGIC bytes";
  }
  CHECK_THROWS_AS(read_image(path), std::runtime_error);
  CHECK_THROWS_AS(read_sinogram(path), std::runtime_error);
  CHECK_THROWS_AS(read_image(temp_dir() / "missing.cti"), std::runtime_error);

  SUBCASE("truncated payload") {
    ImageGrid img(8, 1.0);
    const auto p2 = temp_dir() / "trunc.cti";
    write_image(p2, img);
    const std::string bytes = slurp(p2);
    std::ofstream f(p2, std::ios::binary);
    f << bytes.substr(0, bytes.size() - 5);
    f.close();
    CHECK_THROWS_AS(read_image(p2), std::runtime_error);
  }
}

TEST_CASE("png output is deterministic and well-formed") {
  ImageGrid img(24, 1.0);
  Rng rng(3);
  for (Eigen::Index i = 0; i < img.values.size(); ++i) img.values.data()[i] = rng.normal();

  const auto a = temp_dir() / "a.png";
  const auto b = temp_dir() / "b.png";
  write_png_gray(a, img);
  write_png_gray(b, img);
  const std::string bytes_a = slurp(a);
  CHECK(bytes_a == slurp(b));
  REQUIRE(bytes_a.size() > 8);
  CHECK(static_cast<unsigned char>(bytes_a[0]) == 0x89);
  CHECK(bytes_a.substr(1, 3) == "PNG");
}

TEST_CASE("csv float formatting is stable") {
  CHECK(format_double(0.1) == format_double(0.1));
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_double(25.0) == "25");
}

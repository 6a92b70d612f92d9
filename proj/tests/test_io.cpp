#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "pstereo/io.hpp"

using namespace pstereo;
namespace fs = std::filesystem;

namespace {

// Per-process scratch directory, wiped on first use.
fs::path scratch_dir() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / "pstereo_io_tests";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string scratch(const std::string& name) { return (scratch_dir() / name).string(); }

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<char>(std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>());
}

ImageGrid random_grid(int w, int h, int c, unsigned seed) {
  ImageGrid g(w, h, c);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  // Stick to float-representable values so PFM round trips are exact.
  for (double& v : g.data()) v = static_cast<double>(static_cast<float>(u(rng)));
  return g;
}

}  // namespace

TEST_CASE("PFM round trip preserves float data, both channel counts", "[io]") {
  for (int c : {1, 3}) {
    ImageGrid img = random_grid(7, 5, c, 100 + static_cast<unsigned>(c));
    const std::string path = scratch("roundtrip_" + std::to_string(c) + ".pfm");
    write_pfm(path, img);
    ImageGrid back = read_pfm(path);
    REQUIRE(back == img);
  }
}

TEST_CASE("PFM rewrite of a read image is byte-identical", "[io]") {
  ImageGrid img = random_grid(6, 4, 3, 7);
  const std::string a = scratch("stable_a.pfm");
  const std::string b = scratch("stable_b.pfm");
  write_pfm(a, img);
  write_pfm(b, read_pfm(a));
  REQUIRE(slurp(a) == slurp(b));
}

TEST_CASE("PFM reader accepts big-endian files", "[io]") {
  // Hand-built 2x1 grayscale PFM with positive scale (big-endian payload).
  const std::string path = scratch("big_endian.pfm");
  {
    std::ofstream out(path, std::ios::binary);
    out << "Pf\n2 1\n1.0\n";
    auto put_be = [&](float v) {
      unsigned char b[4];
      std::memcpy(b, &v, 4);
      if (detail::host_little_endian()) std::swap(b[0], b[3]), std::swap(b[1], b[2]);
      out.write(reinterpret_cast<char*>(b), 4);
    };
    put_be(1.5f);
    put_be(-2.25f);
  }
  ImageGrid img = read_pfm(path);
  REQUIRE(img.width() == 2);
  REQUIRE(img.height() == 1);
  REQUIRE(img.at(0, 0) == 1.5);
  REQUIRE(img.at(1, 0) == -2.25);
}

TEST_CASE("PFM stores rows bottom-up", "[io]") {
  ImageGrid img(1, 2, 1);
  img.at(0, 0) = 10.0;  // top row in memory
  img.at(0, 1) = 20.0;
  const std::string path = scratch("flip.pfm");
  write_pfm(path, img);

  // First float in the payload must be the BOTTOM row.
  std::vector<char> bytes = slurp(path);
  const std::string header = "Pf\n1 2\n-1.0\n";
  REQUIRE(bytes.size() == header.size() + 8);
  float first;
  std::memcpy(&first, bytes.data() + header.size(), 4);
  REQUIRE(first == 20.0f);

  REQUIRE(read_pfm(path) == img);
}

TEST_CASE("malformed PFM headers raise IoError with the path", "[io]") {
  auto write_text = [&](const std::string& name, const std::string& text) {
    const std::string p = scratch(name);
    std::ofstream out(p, std::ios::binary);
    out << text;
    return p;
  };

  const std::string bad_magic = write_text("bad_magic.pfm", "PX\n2 2\n-1.0\n");
  REQUIRE_THROWS_MATCHES(read_pfm(bad_magic), IoError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("bad_magic.pfm")));

  const std::string bad_dim = write_text("bad_dim.pfm", "Pf\n2 zebra\n-1.0\n");
  REQUIRE_THROWS_AS(read_pfm(bad_dim), IoError);

  const std::string neg_dim = write_text("neg_dim.pfm", "Pf\n-2 2\n-1.0\n");
  REQUIRE_THROWS_AS(read_pfm(neg_dim), IoError);

  const std::string zero_scale = write_text("zero_scale.pfm", "Pf\n2 2\n0\n");
  REQUIRE_THROWS_AS(read_pfm(zero_scale), IoError);

  const std::string empty = write_text("empty.pfm", "");
  REQUIRE_THROWS_AS(read_pfm(empty), IoError);

  // Header fine, payload short.
  const std::string truncated = write_text("trunc.pfm", "Pf\n2 2\n-1.0\nxx");
  REQUIRE_THROWS_MATCHES(read_pfm(truncated), IoError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("truncated")));

  REQUIRE_THROWS_AS(read_pfm(scratch("does_not_exist.pfm")), IoError);
  REQUIRE_THROWS_AS(write_pfm(scratch("empty_img.pfm"), ImageGrid()), IoError);
}

TEST_CASE("PNG round trip at both bit depths", "[io]") {
  ImageGrid img(5, 4, 3);
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : img.data()) v = u(rng);

  SECTION("16-bit is exact to one quantization step") {
    const std::string path = scratch("rt16.png");
    write_png(path, img, 16);
    PngImage back = read_png(path);
    REQUIRE(back.bit_depth == 16);
    REQUIRE(back.raw.channels() == 3);
    ImageGrid norm = normalize_intensities(back.raw, 16);
    for (std::size_t i = 0; i < img.size(); ++i)
      REQUIRE(norm.data()[i] == Catch::Approx(img.data()[i]).margin(0.5 / 65535.0));
  }

  SECTION("8-bit quantizes to 1/255 steps") {
    const std::string path = scratch("rt8.png");
    write_png(path, img, 8);
    PngImage back = read_png(path);
    REQUIRE(back.bit_depth == 8);
    ImageGrid norm = normalize_intensities(back.raw, 8);
    for (std::size_t i = 0; i < img.size(); ++i)
      REQUIRE(norm.data()[i] == Catch::Approx(img.data()[i]).margin(0.5 / 255.0));
  }

  SECTION("grayscale stays single-channel") {
    ImageGrid gray(3, 3, 1, 0.5);
    const std::string path = scratch("gray.png");
    write_png(path, gray, 16);
    PngImage back = read_png(path);
    REQUIRE(back.raw.channels() == 1);
    REQUIRE(back.raw.at(1, 1) == Catch::Approx(std::round(0.5 * 65535.0)).margin(0));
  }
}

TEST_CASE("PNG writer quantizes 16-bit samples exactly", "[io]") {
  // A value with an exact 16-bit representation survives untouched.
  ImageGrid img(1, 1, 1, 32767.0 / 65535.0);
  const std::string path = scratch("exact16.png");
  write_png(path, img, 16);
  PngImage back = read_png(path);
  REQUIRE(back.raw.at(0, 0) == 32767.0);
}

TEST_CASE("PNG reader rejects junk and bad layouts", "[io]") {
  const std::string not_png = scratch("junk.png");
  {
    std::ofstream out(not_png, std::ios::binary);
    out << "this is not a png";
  }
  REQUIRE_THROWS_AS(read_png(not_png), IoError);
  REQUIRE_THROWS_AS(read_png(scratch("missing.png")), IoError);
  REQUIRE_THROWS_AS(write_png(scratch("bad_depth.png"), ImageGrid(2, 2, 1), 12), IoError);
}

TEST_CASE("read_image_normalized dispatches on extension", "[io]") {
  ImageGrid img(2, 2, 1);
  img.at(0, 0) = 0.25;
  img.at(1, 0) = 0.75;
  img.at(0, 1) = 1.5;  // PFM holds unclamped floats
  img.at(1, 1) = -0.5;

  const std::string pfm_path = scratch("dispatch.pfm");
  write_pfm(pfm_path, img);
  REQUIRE(read_image_normalized(pfm_path) == img);

  // PNG path normalizes; the writer clamps, so compare against the clamp.
  const std::string png_path = scratch("dispatch.png");
  write_png(png_path, img, 16);
  ImageGrid n = read_image_normalized(png_path);
  REQUIRE(n.at(0, 0) == Catch::Approx(0.25).margin(1e-4));
  REQUIRE(n.at(0, 1) == 1.0);
  REQUIRE(n.at(1, 1) == 0.0);

  REQUIRE_THROWS_AS(read_image_normalized(scratch("file.tiff")), IoError);
}

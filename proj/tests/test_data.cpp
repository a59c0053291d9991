#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "dft_oracle.hpp"
#include "fdmnet/data_io.hpp"
#include "fdmnet/dataset.hpp"
#include "fdmnet/random.hpp"

using namespace fdmnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("fdmnet_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Image whose values are already on the 8-bit grid, so writers are lossless.
Tensor grid_image(Rng& rng, std::size_t h, std::size_t w, std::size_t c) {
  std::vector<double> v(h * w * c);
  for (auto& x : v) x = static_cast<double>(rng.below(256)) / 255.0;
  return Tensor::from({h, w, c}, std::move(v));
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

std::vector<double> luma_plane(const Tensor& rgb) {
  std::vector<double> y(rgb.numel() / 3);
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = 0.299 * rgb[3 * i] + 0.587 * rgb[3 * i + 1] + 0.114 * rgb[3 * i + 2];
  return y;
}

double radius_oracle(std::size_t u, std::size_t v, std::size_t H, std::size_t W) {
  auto signed_freq = [](std::size_t k, std::size_t n) {
    return k <= n / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n);
  };
  double fu = signed_freq(u, H) / H, fv = signed_freq(v, W) / W;
  double mu = static_cast<double>(H / 2) / H, mv = static_cast<double>(W / 2) / W;
  return std::hypot(fu, fv) / std::hypot(mu, mv);
}

}  // namespace

TEST_CASE("grayscale luma weights") {
  auto red = Tensor::from({1, 1, 3}, {1.0, 0.0, 0.0});
  auto g = to_grayscale(red);
  CHECK(g[0] == doctest::Approx(0.299).epsilon(1e-15));
  CHECK(g[1] == g[0]);
  CHECK(g[2] == g[0]);
  auto white = to_grayscale(Tensor::full({2, 2, 3}, 1.0));
  for (double v : white.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(to_grayscale(Tensor::zeros({2, 2, 1})), std::invalid_argument);
}

TEST_CASE("quantization rounds half up") {
  CHECK(quantize(0.5) == 128);
  CHECK(quantize(0.0) == 0);
  CHECK(quantize(1.0) == 255);
  CHECK(quantize(-0.2) == 0);
  CHECK(quantize(7.0) == 255);

  auto dir = scratch("pgm");
  write_pnm(dir / "half.pgm", Tensor::full({2, 3, 1}, 0.5));
  std::ifstream in(dir / "half.pgm", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  REQUIRE(bytes.size() >= 6);
  CHECK(bytes.substr(0, 2) == "P5");
  for (std::size_t i = bytes.size() - 6; i < bytes.size(); ++i)
    CHECK(static_cast<unsigned char>(bytes[i]) == 128);
}

TEST_CASE("raster round trips") {
  Rng rng(3);
  auto dir = scratch("raster");
  for (std::size_t c : {1u, 3u}) {
    auto img = grid_image(rng, 5, 7, c);
    for (std::string ext : {".png", c == 1 ? ".pgm" : ".ppm"}) {
      auto path = dir / ("img" + std::to_string(c) + ext);
      write_image(path, img);
      auto back = read_image(path);
      CHECK(bit_equal(back, img));
    }
  }
  CHECK_THROWS(write_image(dir / "x.bmp", grid_image(rng, 2, 2, 3)));
}

TEST_CASE("pnm parser tolerates comments and rejects truncation") {
  auto dir = scratch("pnm");
  {
    std::ofstream out(dir / "c.pgm", std::ios::binary);
    out << "P5\n# a comment\n2 1\n# another\n255\n";
    out.put(static_cast<char>(0)).put(static_cast<char>(255));
  }
  auto img = read_pnm(dir / "c.pgm");
  CHECK(img.shape() == Shape{1, 2, 1});
  CHECK(img[0] == 0.0);
  CHECK(img[1] == 1.0);
  {
    std::ofstream out(dir / "t.ppm", std::ios::binary);
    out << "P6\n4 4\n255\n" << std::string(10, 'x');
  }
  CHECK_THROWS_AS(read_pnm(dir / "t.ppm"), FormatError);
}

TEST_CASE("fdmt round trip and corruption") {
  Rng rng(5);
  auto dir = scratch("fdmt");
  auto t = random_normal(rng, {3, 1, 4, 2});
  write_fdmt(dir / "t.fdmt", t);
  CHECK(bit_equal(read_fdmt(dir / "t.fdmt"), t));

  auto scalar_like = Tensor::from({1}, {-0.0});
  write_fdmt(dir / "s.fdmt", scalar_like);
  CHECK(std::signbit(read_fdmt(dir / "s.fdmt")[0]));

  auto size = fs::file_size(dir / "t.fdmt");
  fs::resize_file(dir / "t.fdmt", size - 5);
  CHECK_THROWS_AS(read_fdmt(dir / "t.fdmt"), FormatError);

  {
    std::ofstream out(dir / "bad.fdmt", std::ios::binary);
    out << "NOTATENSOR";
  }
  try {
    read_fdmt(dir / "bad.fdmt");
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }
  CHECK_THROWS(read_fdmt(dir / "missing.fdmt"));
}

TEST_CASE("named tensor directories") {
  Rng rng(8);
  auto dir = scratch("named");
  NamedTensors src{{"a.kernel", random_normal(rng, {2, 3})}, {"b", random_normal(rng, {4})}};
  save_tensors(dir, src);
  CHECK(fs::exists(dir / "manifest.tsv"));

  NamedTensors dst{{"a.kernel", Tensor::zeros({2, 3})}, {"b", Tensor::zeros({4})}};
  load_tensors(dir, dst);
  CHECK(bit_equal(dst[0].tensor, src[0].tensor));
  CHECK(bit_equal(dst[1].tensor, src[1].tensor));

  NamedTensors wrong_shape{{"a.kernel", Tensor::zeros({3, 2})}, {"b", Tensor::zeros({4})}};
  CHECK_THROWS(load_tensors(dir, wrong_shape));
  NamedTensors wrong_name{{"a.kernel", Tensor::zeros({2, 3})}, {"c", Tensor::zeros({4})}};
  CHECK_THROWS(load_tensors(dir, wrong_name));
}

TEST_CASE("dataset layout and determinism") {
  SyntheticDatasetSpec spec;
  auto a = generate_dataset(spec);
  auto b = generate_dataset(spec);
  CHECK(a.train.size() == spec.train_identities * spec.images_per_modality * 2);
  CHECK(a.test.size() == spec.test_identities * spec.images_per_modality * 2);
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(bit_equal(a.train[i].image, b.train[i].image));

  std::set<std::size_t> train_ids, test_ids;
  for (auto& s : a.train) {
    train_ids.insert(s.identity);
    CHECK(s.image.shape() == Shape{spec.height, spec.width, 3});
    for (double v : s.image.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  for (auto& s : a.test) test_ids.insert(s.identity);
  CHECK(train_ids.size() == spec.train_identities);
  CHECK(test_ids.size() == spec.test_identities);
  for (auto id : test_ids) CHECK(train_ids.count(id) == 0);

  std::size_t visible = 0;
  for (auto& s : a.test) visible += s.modality == Modality::visible;
  CHECK(visible * 2 == a.test.size());

  auto other = spec;
  other.seed = 2;
  CHECK_FALSE(bit_equal(generate_dataset(other).train[0].image, a.train[0].image));

  auto bad = spec;
  bad.height = 0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("infrared render shares phase and differs by the radial gain") {
  SyntheticDatasetSpec spec;
  const std::size_t H = spec.height, W = spec.width, Wh = W / 2 + 1;
  Rng rng(11);
  for (std::size_t id = 0; id < 6; ++id) {
    auto layout = make_layout(spec, id);
    int dy = static_cast<int>(rng.below(5)) - 2, dx = static_cast<int>(rng.below(5)) - 2;
    double decay = rng.uniform(2.0, 10.0), contrast = rng.uniform(0.2, 0.9);
    auto vis = render_visible(layout, spec, dy, dx);
    auto ir = render_infrared(layout, spec, dy, dx, decay, contrast);

    auto vis_bins = oracle::brute_dft(Tensor::from({H, W, 1}, luma_plane(vis)));
    std::vector<double> ir0(H * W);
    for (std::size_t i = 0; i < H * W; ++i) ir0[i] = ir[3 * i];
    auto ir_bins = oracle::brute_dft(Tensor::from({H, W, 1}, ir0));

    double weighted = 0.0, total = 0.0, worst_gain = 0.0;
    for (std::size_t u = 0; u < H; ++u)
      for (std::size_t v = 0; v < Wh; ++v) {
        auto a = vis_bins[u * Wh + v], b = ir_bins[u * Wh + v];
        double amp = std::abs(a);
        if (amp < 1e-6) continue;
        weighted += amp * std::cos(std::arg(a) - std::arg(b));
        total += amp;
        double r = radius_oracle(u, v, H, W);
        double expected = (u == 0 && v == 0) ? 1.0 : contrast * std::exp(-decay * r * r);
        if (expected * amp > 1e-6) {
          worst_gain = std::max(worst_gain, std::fabs(std::abs(b) / amp - expected) / expected);
        }
      }
    CHECK(weighted / total > 0.9);
    CHECK(worst_gain < 0.05);
    CHECK(infrared_gain(0.0, decay, contrast) == 1.0);
  }
}

TEST_CASE("dataset export writes a manifest per image") {
  SyntheticDatasetSpec spec;
  spec.train_identities = 2;
  spec.test_identities = 1;
  spec.images_per_modality = 2;
  auto ds = generate_dataset(spec);
  auto dir = scratch("export");
  write_dataset(dir, ds);
  std::ifstream in(dir / "manifest.csv");
  std::string line;
  std::size_t rows = 0;
  std::getline(in, line);
  CHECK(line == "path,identity,modality,split");
  while (std::getline(in, line)) {
    ++rows;
    auto path = dir / line.substr(0, line.find(','));
    CHECK(fs::exists(path));
  }
  CHECK(rows == ds.train.size() + ds.test.size());
  auto first = read_image(dir / "images" / fs::directory_iterator(dir / "images")->path().filename());
  CHECK(first.shape() == Shape{spec.height, spec.width, 3});
}

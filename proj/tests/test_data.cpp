#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "salguide/data.hpp"
#include "salguide/errors.hpp"
#include "salguide/rng.hpp"

using namespace salguide;
namespace fs = std::filesystem;

namespace {

constexpr int kPx = kImageSize * kImageSize;

struct TempDir {
  fs::path path;
  explicit TempDir(const char* leaf) : path(fs::temp_directory_path() / leaf) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int annotation_count(const Example& ex) {
  int n = 0;
  for (uint8_t v : ex.annotation) n += v;
  return n;
}

// Pixels whose color differs from the background-only render.
std::vector<uint8_t> changed_pixels(const RenderDebug& dbg) {
  std::vector<uint8_t> out(kPx, 0);
  for (int p = 0; p < kPx; ++p)
    for (int ch = 0; ch < 3; ++ch)
      if (dbg.pre_style[ch * kPx + p] != dbg.background[ch * kPx + p]) {
        out[p] = 1;
        break;
      }
  return out;
}

}  // namespace

TEST_CASE("annotations are exactly the pixels the shape changed") {
  std::vector<DomainSpec> domains = DomainSpec::default_targets();
  domains.push_back(DomainSpec::source(1.0));
  for (const DomainSpec& dom : domains) {
    for (int cls = 0; cls < kNumShapeClasses; ++cls) {
      RenderDebug dbg = render_example_debug(cls, 0, dom, 5000 + cls);
      INFO(dom.name << " class " << cls);
      CHECK(dbg.example.annotation == changed_pixels(dbg));
      const int count = annotation_count(dbg.example);
      CHECK(count >= 1);
      CHECK(count <= (kPx * 3) / 5);
    }
  }
}

TEST_CASE("graphics backgrounds are exactly white") {
  DomainSpec graphics = DomainSpec::by_name("graphics", 0.0);
  RenderDebug dbg = render_example_debug(4, 0, graphics, 42);
  for (int p = 0; p < kPx; ++p)
    if (!dbg.example.annotation[p])
      for (int ch = 0; ch < 3; ++ch) CHECK(dbg.example.image[ch * kPx + p] == 1.0);
}

TEST_CASE("rendering is deterministic per (class, domain, seed)") {
  DomainSpec src = DomainSpec::source(0.7);
  Example a = render_example(3, 0, src, 1234);
  Example b = render_example(3, 0, src, 1234);
  CHECK(a.image == b.image);
  CHECK(a.annotation == b.annotation);
  CHECK(a.texture_id == b.texture_id);

  Example c = render_example(3, 0, src, 1235);
  CHECK(a.image != c.image);
}

TEST_CASE("edge domains draw strokes whose width follows the spec") {
  DomainSpec quickdraw = DomainSpec::by_name("quickdraw", 0.0);
  DomainSpec sketch = DomainSpec::by_name("sketch", 0.0);
  CHECK(quickdraw.edge_thickness > sketch.edge_thickness);
  // Same stream seed -> same geometry, so the bolder stroke covers strictly
  // more pixels; both outline renders sit inside the filled variant.
  DomainSpec filled = DomainSpec::by_name("graphics", 0.0);
  for (int cls = 0; cls < kNumShapeClasses; ++cls) {
    Example bold = render_example(cls, 0, quickdraw, 77);
    Example thin = render_example(cls, 0, sketch, 77);
    Example fill = render_example(cls, 0, filled, 77);
    CHECK(annotation_count(bold) > annotation_count(thin));
    for (int p = 0; p < kPx; ++p) {
      if (thin.annotation[p]) CHECK(bold.annotation[p] == 1);
      if (bold.annotation[p]) CHECK(fill.annotation[p] == 1);
    }
  }
}

TEST_CASE("bias dial controls the label-texture pairing rate") {
  auto measure = [](double bias, int n) {
    DomainSpec src = DomainSpec::source(bias);
    int paired = 0;
    for (int i = 0; i < n; ++i) {
      const int cls = i % kNumShapeClasses;
      Example ex = render_example(cls, i, src, derive_seed(99, {static_cast<uint64_t>(i)}));
      if (ex.texture_id == cls) ++paired;
    }
    return static_cast<double>(paired) / n;
  };
  CHECK(expected_pairing_rate(0.5) == 0.5);
  CHECK(measure(1.0, 500) == 1.0);
  CHECK(measure(0.0, 500) == 0.0);
  const double at_half = measure(0.5, 5000);
  CHECK(at_half >= 0.48);
  CHECK(at_half <= 0.52);
}

TEST_CASE("decorrelated textures are independent of the label") {
  // 10x10 contingency chi-square below the 0.99 quantile for 81 dof.
  DomainSpec dec = DomainSpec::by_name("painting", 0.0);
  constexpr int kN = 5000;
  std::array<std::array<int, kNumTextures>, kNumShapeClasses> table{};
  std::array<int, kNumShapeClasses> row{};
  std::array<int, kNumTextures> col{};
  for (int i = 0; i < kN; ++i) {
    const int cls = i % kNumShapeClasses;
    Example ex = render_example(cls, i, dec, derive_seed(7, {static_cast<uint64_t>(i)}));
    REQUIRE(ex.texture_id >= 0);
    table[cls][ex.texture_id]++;
    row[cls]++;
    col[ex.texture_id]++;
  }
  double chi2 = 0.0;
  for (int r = 0; r < kNumShapeClasses; ++r)
    for (int c = 0; c < kNumTextures; ++c) {
      const double expect = static_cast<double>(row[r]) * col[c] / kN;
      const double d = table[r][c] - expect;
      chi2 += d * d / expect;
    }
  CHECK(chi2 < 113.51241047036046);
}

TEST_CASE("split generation balances classes and reproduces bitwise") {
  DomainSpec src = DomainSpec::source(1.0);
  Dataset a = generate_split(src, "train", 3, 11);
  Dataset b = generate_split(src, "train", 3, 11);
  REQUIRE(a.examples.size() == 30);
  CHECK(a.meta.count == 30);
  CHECK(a.meta.per_class == 3);

  std::array<int, kNumShapeClasses> counts{};
  for (size_t i = 0; i < a.examples.size(); ++i) {
    counts[a.examples[i].label]++;
    CHECK(a.examples[i].id == static_cast<int64_t>(i));
    CHECK(a.examples[i].image == b.examples[i].image);
    CHECK(a.examples[i].annotation == b.examples[i].annotation);
  }
  for (int c : counts) CHECK(c == 3);

  Dataset other_seed = generate_split(src, "train", 3, 12);
  CHECK(a.examples[0].image != other_seed.examples[0].image);
  Dataset other_split = generate_split(src, "val", 3, 11);
  CHECK(a.examples[0].image != other_split.examples[0].image);

  CHECK_THROWS_AS(generate_split(src, "train", 0, 1), UsageError);
}

TEST_CASE("datasets round-trip through disk") {
  TempDir tmp("salguide_data_roundtrip");
  DomainSpec src = DomainSpec::source(0.8);
  Dataset ds = generate_split(src, "val", 2, 5);
  write_dataset(ds, tmp.path);

  Dataset back = read_dataset(tmp.path);
  CHECK(back.meta.domain == ds.meta.domain);
  CHECK(back.meta.split == ds.meta.split);
  CHECK(back.meta.seed == ds.meta.seed);
  CHECK(back.meta.count == ds.meta.count);
  CHECK(back.meta.format_version == kDatasetFormatVersion);

  REQUIRE(back.examples.size() == ds.examples.size());
  for (size_t i = 0; i < ds.examples.size(); ++i) {
    CHECK(back.examples[i].label == ds.examples[i].label);
    CHECK(back.examples[i].annotation == ds.examples[i].annotation);
    double worst = 0.0;
    for (int p = 0; p < 3 * kPx; ++p)
      worst = std::max(worst,
                       std::abs(back.examples[i].image[p] - ds.examples[i].image[p]));
    CHECK(worst <= 1.0 / 510.0);
  }

  // The manifest header is part of the on-disk contract.
  std::ifstream manifest(tmp.path / "manifest.csv");
  std::string header;
  std::getline(manifest, header);
  CHECK(header == "example_id,class,image_path,mask_path");
}

TEST_CASE("corrupted files are rejected with a data error") {
  TempDir tmp("salguide_data_corrupt");
  Dataset ds = generate_split(DomainSpec::source(1.0), "val", 1, 6);
  write_dataset(ds, tmp.path);

  // Break one image's magic.
  const fs::path img = tmp.path / "images" / "img_00000.ppm";
  REQUIRE(fs::exists(img));
  {
    std::fstream f(img, std::ios::in | std::ios::out | std::ios::binary);
    f.put('X');
  }
  CHECK_THROWS_AS(read_dataset(tmp.path), DataError);
}

TEST_CASE("missing dataset directories are rejected") {
  CHECK_THROWS_AS(read_dataset(fs::temp_directory_path() / "salguide_does_not_exist"),
                  DataError);
}

TEST_CASE("image io preserves bytes exactly") {
  TempDir tmp("salguide_data_io");
  Rng rng(8);
  std::vector<double> img(3 * 16);
  for (auto& v : img) v = rng.uniform_int(256) / 255.0;  // byte-exact values
  write_ppm(tmp.path / "t.ppm", img, 4, 4);
  std::vector<double> back = read_ppm(tmp.path / "t.ppm", 4, 4);
  CHECK(back == img);

  std::vector<uint8_t> mask(16, 0);
  mask[3] = mask[7] = 1;
  write_pgm01(tmp.path / "t.pgm", mask, 4, 4);
  CHECK(read_pgm01(tmp.path / "t.pgm", 4, 4) == mask);

  CHECK_THROWS_AS(read_ppm(tmp.path / "t.ppm", 8, 8), DataError);
}

TEST_CASE("domain registry exposes the six targets plus source") {
  auto names = DomainSpec::known_names();
  REQUIRE(names.size() == 7);
  CHECK(names[0] == "source");
  for (const char* n : {"graphics", "clipart", "infograph", "painting", "quickdraw",
                        "sketch"})
    CHECK(std::find(names.begin(), names.end(), n) != names.end());
  CHECK_THROWS_AS(DomainSpec::by_name("cartoons", 0.0), UsageError);
  CHECK_THROWS_AS(DomainSpec::source(1.5), UsageError);

  CHECK(std::string(shape_class_name(0)) == "circle");
  CHECK_THROWS_AS(shape_class_name(10), UsageError);
}

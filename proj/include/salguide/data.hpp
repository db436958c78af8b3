#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace salguide {

// Procedural shape-vs-texture benchmark. Every example is a 64x64 RGB image
// of one filled (or outlined) shape on a synthetic background, plus an exact
// binary annotation of the drawn pixels. One source domain carries a tunable
// class<->background-texture pairing; target domains restyle the background
// so the pairing shortcut breaks while the shape class stays readable.
//
// Background colors sit on the k/256 grid and foreground colors on the
// (k+0.5)/256 half-grid, so a drawn pixel never equals the background pixel
// it covers — annotations are exactly the changed pixels by construction.

constexpr int kNumShapeClasses = 10;
constexpr int kImageSize = 64;
constexpr int kNumTextures = 10;
constexpr int kDatasetFormatVersion = 1;

const char* shape_class_name(int class_id);

enum class BackgroundPolicy {
  ClassCorrelated,  // gray-mark texture, id paired with the class at rate `bias`
  Decorrelated,     // gray-mark texture, id uniform & independent of the class
  UniformWhite,     // flat pure white (1,1,1)
  NoiseTexture,     // iid per-pixel noise plus small distractor glyphs
  EdgeOnly,         // pure white; the shape renders as a dark outline
  LowColor,         // flat fill from a small posterized palette
};

enum class StyleKind { None, Painterly };  // Painterly: blur + color cast

struct DomainSpec {
  std::string name;
  BackgroundPolicy policy = BackgroundPolicy::Decorrelated;
  StyleKind style = StyleKind::None;
  double bias = 0.0;       // ClassCorrelated: P(paired texture); else unused
  int edge_thickness = 2;  // EdgeOnly stroke width

  static DomainSpec source(double bias);
  // graphics, clipart, infograph, painting, quickdraw, sketch
  static std::vector<DomainSpec> default_targets();
  static DomainSpec by_name(const std::string& name, double bias);
  static std::vector<std::string> known_names();
};

struct Example {
  int64_t id = 0;
  int label = 0;
  int texture_id = -1;              // in-memory only; -1 when untextured or read from disk
  std::vector<double> image;        // planar 3 x 64 x 64, values in [0,1]
  std::vector<uint8_t> annotation;  // 64 x 64, values in {0,1}
};

// With probability `bias` the texture equals the class id, otherwise it is
// drawn uniformly from the other kNumTextures-1 textures, so the measured
// label==texture pairing fraction estimates `bias` itself.
double expected_pairing_rate(double bias);

Example render_example(int class_id, int64_t id, const DomainSpec& domain,
                       uint64_t stream_seed);

struct RenderDebug {
  Example example;
  std::vector<double> background;  // background alone, before any style pass
  std::vector<double> pre_style;   // shape composited, before any style pass
};
RenderDebug render_example_debug(int class_id, int64_t id, const DomainSpec& domain,
                                 uint64_t stream_seed);

struct DatasetMeta {
  int format_version = kDatasetFormatVersion;
  std::string domain;
  std::string split;
  uint64_t seed = 0;
  int num_classes = kNumShapeClasses;
  int per_class = 0;
  int64_t count = 0;
  double bias = 0.0;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<Example> examples;
};

// per_class examples of every class, example i has label i % kNumShapeClasses.
// Each example renders from its own stream derived from (seed, domain, split,
// index): regeneration with the same arguments is bit-identical.
Dataset generate_split(const DomainSpec& domain, const std::string& split,
                       int per_class, uint64_t seed);

// Layout: dir/header.txt, dir/manifest.csv, dir/images/img_NNNNN.ppm (P6),
// dir/masks/mask_NNNNN.pgm (P5, 0/255).
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

// Raw image IO: bytes are round(v*255); P6 for RGB (planar in memory), P5
// for single-channel masks stored 0/255.
void write_ppm(const std::filesystem::path& path, const std::vector<double>& rgb_planar,
               int64_t h, int64_t w);
std::vector<double> read_ppm(const std::filesystem::path& path, int64_t expect_h,
                             int64_t expect_w);
void write_pgm01(const std::filesystem::path& path, const std::vector<uint8_t>& mask,
                 int64_t h, int64_t w);
std::vector<uint8_t> read_pgm01(const std::filesystem::path& path, int64_t expect_h,
                                int64_t expect_w);

}  // namespace salguide

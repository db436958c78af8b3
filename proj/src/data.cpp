#include "salguide/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "salguide/errors.hpp"
#include "salguide/rng.hpp"
#include "salguide/threadpool.hpp"

namespace salguide {

namespace {

constexpr int kSize = kImageSize;
constexpr int kPixels = kSize * kSize;
constexpr double kPi = 3.14159265358979323846;

// --- shapes ------------------------------------------------------------------

// Predicates over local coordinates u,v in [-1,1] (v grows downward).
bool shape_inside(int class_id, double u, double v) {
  if (std::abs(u) > 1.0 || std::abs(v) > 1.0) return false;
  switch (class_id) {
    case 0:  // circle
      return u * u + v * v <= 1.0;
    case 1:  // triangle, apex up
      return std::abs(u) <= (v + 1.0) * 0.5;
    case 2:  // square
      return true;
    case 3:  // cross
      return std::abs(u) <= 0.33 || std::abs(v) <= 0.33;
    case 4: {  // ring
      const double r2 = u * u + v * v;
      return r2 >= 0.55 * 0.55 && r2 <= 1.0;
    }
    case 5: {  // five-point star
      const double r = std::sqrt(u * u + v * v);
      if (r > 1.0) return false;
      if (r <= 0.2) return true;
      const double spike = 2.0 * kPi / 5.0;
      double a = std::fmod(std::atan2(v, u) + kPi / 2.0, spike);
      if (a < 0.0) a += spike;
      const double dist = std::min(a, spike - a);  // 0 at a spike center
      return r <= 1.0 - 0.55 * (dist / (spike / 2.0));
    }
    case 6:  // horizontal bar
      return std::abs(v) <= 0.35;
    case 7:  // diamond
      return std::abs(u) + std::abs(v) <= 1.0;
    case 8:  // L
      return !(u > -0.25 && v < 0.25);
    case 9:  // T
      return v <= -0.5 || std::abs(u) <= 0.25;
    default:
      throw UsageError("shape class out of range: " + std::to_string(class_id));
  }
}

const char* kShapeNames[kNumShapeClasses] = {
    "circle", "triangle", "square", "cross", "ring",
    "star",   "bar",      "diamond", "ell",  "tee"};

// --- textures ----------------------------------------------------------------
//
// A background "texture" is a field of small gray marks on a mid-gray base.
// The texture id t is coded in the marks' shared tone kMarkTone[t]; a single
// mark anywhere in the image is enough to read it. Two guards keep that
// evidence away from the object: marks never enter a 16-px coarse tile the
// object touches (so the annotation region is mark-free at any pooling
// granularity), and each mark within kDecoyReach of an object pixel carries
// an independent random tone instead of the texture tone. The texture is a
// cheap context shortcut everywhere far from the object, while the object's
// own neighbourhood carries no trustworthy texture evidence at all.

constexpr int kMarkGrid = 8;        // 8x8 jittered sites, 8 px pitch
constexpr int kMarksPerImage = 36;
constexpr int kDecoyReach = 8;      // marks this close to the object lie
constexpr int kTile = 16;           // marks avoid object-touched 16-px tiles
constexpr int kMarkTone[kNumTextures] = {7,   31,  55,  79,  103,
                                         155, 179, 203, 227, 250};

// --- colors ------------------------------------------------------------------

using Color = std::array<double, 3>;

// Backgrounds live on the k/256 grid, foregrounds on the (k+0.5)/256 grid.
Color grid_color(Rng& rng, int lo, int hi) {
  Color c;
  for (double& ch : c) ch = (lo + rng.uniform_int(hi - lo + 1)) / 256.0;
  return c;
}
Color halfgrid_color(Rng& rng, int lo, int hi) {
  Color c;
  for (double& ch : c) ch = (lo + rng.uniform_int(hi - lo + 1) + 0.5) / 256.0;
  return c;
}
void fill_flat(std::vector<double>& img, const Color& c) {
  for (int ch = 0; ch < 3; ++ch)
    std::fill(img.begin() + ch * kPixels, img.begin() + (ch + 1) * kPixels, c[ch]);
}

void fill_gray(std::vector<double>& img, double v) {
  std::fill(img.begin(), img.end(), v);
}

void stamp_mark(std::vector<double>& img, int cx, int cy, double v) {
  for (int y = cy - 1; y <= cy + 1; ++y)
    for (int x = cx - 1; x <= cx + 1; ++x)
      for (int ch = 0; ch < 3; ++ch) img[ch * kPixels + y * kSize + x] = v;
}

// true iff any object pixel lies within Chebyshev distance `reach` of (cx, cy).
bool object_within(const std::vector<uint8_t>& object, int cx, int cy, int reach) {
  const int y0 = std::max(0, cy - reach), y1 = std::min(kSize - 1, cy + reach);
  const int x0 = std::max(0, cx - reach), x1 = std::min(kSize - 1, cx + reach);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (object[y * kSize + x]) return true;
  return false;
}

void fill_mark_texture(std::vector<double>& img, int tex, Rng& rng,
                       const std::vector<uint8_t>& object) {
  const double base = (118 + rng.uniform_int(25)) / 256.0;  // gray in [118,142]
  fill_gray(img, base);

  constexpr int kTiles = kSize / kTile;
  bool object_tile[kTiles][kTiles]{};
  for (int y = 0; y < kSize; ++y)
    for (int x = 0; x < kSize; ++x)
      if (object[y * kSize + x]) object_tile[y / kTile][x / kTile] = true;

  // Jittered site centers, drawn row-major. A mark's 3x3 footprint stays
  // inside its 8x8 site cell, so skipping the sites of object tiles keeps
  // every object tile mark-free.
  std::array<std::pair<int, int>, kMarkGrid * kMarkGrid> center;
  std::vector<int> open;
  open.reserve(center.size());
  for (int sy = 0; sy < kMarkGrid; ++sy)
    for (int sx = 0; sx < kMarkGrid; ++sx) {
      const int cx = sx * 8 + 4 + rng.uniform_int(5) - 2;
      const int cy = sy * 8 + 4 + rng.uniform_int(5) - 2;
      center[sy * kMarkGrid + sx] = {cx, cy};
      if (!object_tile[sy * 8 / kTile][sx * 8 / kTile]) open.push_back(sy * kMarkGrid + sx);
    }
  rng.shuffle(open);

  // A large centred shape can block every tile and leave a rare markless
  // image; the min() guards it. Tones stay on the k/256 grid and clear of
  // the base band even after the +/-5 jitter.
  const int total = std::min<int>(kMarksPerImage, static_cast<int>(open.size()));
  for (int i = 0; i < total; ++i) {
    const auto [cx, cy] = center[open[i]];
    const bool near = object_within(object, cx, cy, kDecoyReach);
    const int tone = kMarkTone[near ? rng.uniform_int(kNumTextures) : tex];
    stamp_mark(img, cx, cy, (tone + rng.uniform_int(11) - 5) / 256.0);
  }
}

// Small filled shape stamped into the background (infograph clutter). Colors
// stay on the k/256 grid so the foreground half-grid diff stays exact.
void stamp_glyph(std::vector<double>& img, Rng& rng) {
  const int gclass = rng.uniform_int(kNumShapeClasses);
  const double ghs = rng.uniform(0.06, 0.14) * (kSize / 2.0);
  const double gcx = rng.uniform(ghs, kSize - ghs);
  const double gcy = rng.uniform(ghs, kSize - ghs);
  const Color c = grid_color(rng, 0, 255);
  const int x0 = std::max(0, static_cast<int>(gcx - ghs) - 1);
  const int x1 = std::min(kSize - 1, static_cast<int>(gcx + ghs) + 1);
  const int y0 = std::max(0, static_cast<int>(gcy - ghs) - 1);
  const int y1 = std::min(kSize - 1, static_cast<int>(gcy + ghs) + 1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double u = (x + 0.5 - gcx) / ghs, v = (y + 0.5 - gcy) / ghs;
      if (!shape_inside(gclass, u, v)) continue;
      for (int ch = 0; ch < 3; ++ch) img[ch * kPixels + y * kSize + x] = c[ch];
    }
}

// Returns the texture id, or -1 for untextured policies. Draw order is part
// of the dataset definition: texture choice, base tone, site jitters
// (row-major), site shuffle, per-mark tones.
int render_background(const DomainSpec& dom, int class_id, Rng& rng,
                      const std::vector<uint8_t>& object, std::vector<double>& img) {
  switch (dom.policy) {
    case BackgroundPolicy::ClassCorrelated:
    case BackgroundPolicy::Decorrelated: {
      int tex;
      if (dom.policy == BackgroundPolicy::ClassCorrelated) {
        if (rng.uniform() < dom.bias) {
          tex = class_id;
        } else {
          // Unpaired draw excludes the class's own texture, so the measured
          // pairing fraction equals `bias` exactly.
          tex = rng.uniform_int(kNumTextures - 1);
          if (tex >= class_id) ++tex;
        }
      } else {
        tex = rng.uniform_int(kNumTextures);
      }
      fill_mark_texture(img, tex, rng, object);
      return tex;
    }
    case BackgroundPolicy::LowColor: {
      // Flat posterized fill: each channel from {32,96,160,224}/256.
      Color c;
      for (double& ch : c) ch = (32 + 64 * rng.uniform_int(4)) / 256.0;
      fill_flat(img, c);
      return -1;
    }
    case BackgroundPolicy::UniformWhite:
    case BackgroundPolicy::EdgeOnly:
      fill_flat(img, {1.0, 1.0, 1.0});
      return -1;
    case BackgroundPolicy::NoiseTexture: {
      for (int y = 0; y < kSize; ++y)
        for (int x = 0; x < kSize; ++x)
          for (int ch = 0; ch < 3; ++ch)
            img[ch * kPixels + y * kSize + x] = rng.uniform_int(256) / 256.0;
      for (int g = 0; g < 3; ++g) stamp_glyph(img, rng);
      return -1;
    }
  }
  throw UsageError("unhandled background policy");
}

// Foreground shapes are strongly chromatic -- a permutation of one low, one
// mid and one high channel -- so the silhouette pops against the gray base
// and gray marks on some channel regardless of the draw. Edge-only domains
// keep a dark pencil tone instead.
Color foreground_color(const DomainSpec& dom, Rng& rng) {
  if (dom.policy == BackgroundPolicy::EdgeOnly) return halfgrid_color(rng, 10, 70);
  const double v[3] = {(10 + rng.uniform_int(51) + 0.5) / 256.0,    // [10,60]
                       (95 + rng.uniform_int(66) + 0.5) / 256.0,    // [95,160]
                       (195 + rng.uniform_int(56) + 0.5) / 256.0};  // [195,250]
  static constexpr int kPerm[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                      {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  const int* p = kPerm[rng.uniform_int(6)];
  return {v[p[0]], v[p[1]], v[p[2]]};
}

// --- painterly style ---------------------------------------------------------

void box_blur(std::vector<double>& img) {
  std::vector<double> out(img.size());
  for (int ch = 0; ch < 3; ++ch) {
    const double* src = img.data() + ch * kPixels;
    double* dst = out.data() + ch * kPixels;
    for (int y = 0; y < kSize; ++y)
      for (int x = 0; x < kSize; ++x) {
        double acc = 0.0;
        int cnt = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= kSize || xx < 0 || xx >= kSize) continue;
            acc += src[yy * kSize + xx];
            ++cnt;
          }
        dst[y * kSize + x] = acc / cnt;
      }
  }
  img.swap(out);
}

void apply_painterly(std::vector<double>& img) {
  box_blur(img);
  box_blur(img);
  const double cast[3] = {0.05, 0.0, -0.05};
  for (int ch = 0; ch < 3; ++ch)
    for (int p = 0; p < kPixels; ++p) {
      double v = img[ch * kPixels + p] + cast[ch];
      img[ch * kPixels + p] = std::clamp(v, 0.0, 1.0);
    }
}

}  // namespace

// --- domain specs ------------------------------------------------------------

const char* shape_class_name(int class_id) {
  if (class_id < 0 || class_id >= kNumShapeClasses)
    throw UsageError("shape class out of range: " + std::to_string(class_id));
  return kShapeNames[class_id];
}

double expected_pairing_rate(double bias) { return bias; }

DomainSpec DomainSpec::source(double bias) {
  if (bias < 0.0 || bias > 1.0) throw UsageError("bias must be in [0,1]");
  return {"source", BackgroundPolicy::ClassCorrelated, StyleKind::None, bias, 2};
}

std::vector<DomainSpec> DomainSpec::default_targets() {
  // quickdraw and sketch differ only in stroke weight (bold doodle vs thin
  // pencil); painting restyles a decorrelated texture background.
  return {
      {"graphics", BackgroundPolicy::UniformWhite, StyleKind::None, 0.0, 2},
      {"clipart", BackgroundPolicy::LowColor, StyleKind::None, 0.0, 2},
      {"infograph", BackgroundPolicy::NoiseTexture, StyleKind::None, 0.0, 2},
      {"painting", BackgroundPolicy::Decorrelated, StyleKind::Painterly, 0.0, 2},
      {"quickdraw", BackgroundPolicy::EdgeOnly, StyleKind::None, 0.0, 3},
      {"sketch", BackgroundPolicy::EdgeOnly, StyleKind::None, 0.0, 1},
  };
}

DomainSpec DomainSpec::by_name(const std::string& name, double bias) {
  if (name == "source") return source(bias);
  for (const DomainSpec& d : default_targets())
    if (d.name == name) return d;
  throw UsageError("unknown domain '" + name + "'");
}

std::vector<std::string> DomainSpec::known_names() {
  std::vector<std::string> out = {"source"};
  for (const DomainSpec& d : default_targets()) out.push_back(d.name);
  return out;
}

// --- rendering ---------------------------------------------------------------

RenderDebug render_example_debug(int class_id, int64_t id, const DomainSpec& domain,
                                 uint64_t stream_seed) {
  if (class_id < 0 || class_id >= kNumShapeClasses)
    throw UsageError("shape class out of range: " + std::to_string(class_id));
  Rng rng(stream_seed);
  RenderDebug dbg;

  // Object geometry is drawn first so the background can keep its marks
  // clear of the shape.
  const double scale = rng.uniform(0.3, 0.6);
  const double hs = scale * (kSize / 2.0);
  // Rotation stays within +-15 deg so square and diamond remain separable;
  // 1.23*hs bounds a corner shape's rotated support so nothing clips.
  const double margin = 2.0 + 1.23 * hs;
  const double cx = rng.uniform(margin, kSize - margin);
  const double cy = rng.uniform(margin, kSize - margin);
  const double theta = rng.uniform(-kPi / 12.0, kPi / 12.0);
  const double ct = std::cos(theta), st = std::sin(theta);

  std::vector<uint8_t> inside(kPixels, 0);
  for (int y = 0; y < kSize; ++y)
    for (int x = 0; x < kSize; ++x) {
      const double du = (x + 0.5 - cx) / hs, dv = (y + 0.5 - cy) / hs;
      const double u = ct * du + st * dv, v = ct * dv - st * du;
      inside[y * kSize + x] = shape_inside(class_id, u, v) ? 1 : 0;
    }

  std::vector<double> img(3 * kPixels);
  const int tex = render_background(domain, class_id, rng, inside, img);
  dbg.background = img;
  const Color fg = foreground_color(domain, rng);

  std::vector<uint8_t> drawn;
  if (domain.policy == BackgroundPolicy::EdgeOnly) {
    const int t = domain.edge_thickness;
    drawn.assign(kPixels, 0);
    for (int y = 0; y < kSize; ++y)
      for (int x = 0; x < kSize; ++x) {
        if (!inside[y * kSize + x]) continue;
        bool boundary = false;
        for (int dy = -t; dy <= t && !boundary; ++dy)
          for (int dx = -t; dx <= t && !boundary; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= kSize || xx < 0 || xx >= kSize ||
                !inside[yy * kSize + xx])
              boundary = true;
          }
        drawn[y * kSize + x] = boundary ? 1 : 0;
      }
  } else {
    drawn = inside;
  }

  int drawn_count = 0;
  for (int p = 0; p < kPixels; ++p)
    if (drawn[p]) {
      ++drawn_count;
      for (int ch = 0; ch < 3; ++ch) img[ch * kPixels + p] = fg[ch];
    }
  if (drawn_count == 0)
    throw DataError("rendered shape is empty (class " + std::to_string(class_id) + ")");
  if (drawn_count > (kPixels * 3) / 5)
    throw DataError("rendered shape covers more than 60% of the image (class " +
                    std::to_string(class_id) + ")");
  dbg.pre_style = img;

  if (domain.style == StyleKind::Painterly) apply_painterly(img);

  dbg.example.id = id;
  dbg.example.label = class_id;
  dbg.example.texture_id = tex;
  dbg.example.image = std::move(img);
  dbg.example.annotation = std::move(drawn);
  return dbg;
}

Example render_example(int class_id, int64_t id, const DomainSpec& domain,
                       uint64_t stream_seed) {
  return render_example_debug(class_id, id, domain, stream_seed).example;
}

Dataset generate_split(const DomainSpec& domain, const std::string& split,
                       int per_class, uint64_t seed) {
  if (per_class < 1) throw UsageError("per_class must be >= 1");
  Dataset ds;
  ds.meta.domain = domain.name;
  ds.meta.split = split;
  ds.meta.seed = seed;
  ds.meta.per_class = per_class;
  ds.meta.count = static_cast<int64_t>(per_class) * kNumShapeClasses;
  ds.meta.bias = domain.bias;
  ds.examples.resize(ds.meta.count);

  const uint64_t dom_tag = hash_str(domain.name.c_str());
  const uint64_t split_tag = hash_str(split.c_str());
  ThreadPool::instance().parallel_for(ds.meta.count, [&](int64_t b, int64_t e) {
    for (int64_t i = b; i < e; ++i) {
      const int label = static_cast<int>(i % kNumShapeClasses);
      const uint64_t stream =
          derive_seed(seed, {dom_tag, split_tag, static_cast<uint64_t>(i)});
      ds.examples[i] = render_example(label, i, domain, stream);
    }
  });
  return ds;
}

// --- image file IO -----------------------------------------------------------

namespace {

uint8_t to_byte(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return static_cast<uint8_t>(std::lround(v * 255.0));
}

std::vector<uint8_t> read_pnm_payload(const std::filesystem::path& path,
                                      const char* magic, int64_t expect_h,
                                      int64_t expect_w, int channels) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::string m;
  int64_t w = 0, h = 0, maxval = 0;
  if (!(is >> m >> w >> h >> maxval) || m != magic)
    throw DataError("not a " + std::string(magic) + " file: " + path.string());
  if (w != expect_w || h != expect_h)
    throw DataError(path.string() + ": extent " + std::to_string(w) + "x" +
                    std::to_string(h) + ", want " + std::to_string(expect_w) + "x" +
                    std::to_string(expect_h));
  if (maxval != 255) throw DataError(path.string() + ": unsupported maxval");
  is.get();  // single whitespace after the header
  std::vector<uint8_t> buf(static_cast<size_t>(w) * h * channels);
  if (!is.read(reinterpret_cast<char*>(buf.data()), buf.size()))
    throw DataError(path.string() + ": truncated pixel data");
  return buf;
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const std::vector<double>& rgb_planar,
               int64_t h, int64_t w) {
  if (static_cast<int64_t>(rgb_planar.size()) != 3 * h * w)
    throw UsageError("write_ppm: size mismatch");
  std::vector<uint8_t> buf(3 * h * w);
  for (int64_t p = 0; p < h * w; ++p)
    for (int ch = 0; ch < 3; ++ch)
      buf[p * 3 + ch] = to_byte(rgb_planar[ch * h * w + p]);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << "P6\n" << w << " " << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(buf.data()), buf.size());
  if (!os) throw DataError("write failed: " + path.string());
}

std::vector<double> read_ppm(const std::filesystem::path& path, int64_t expect_h,
                             int64_t expect_w) {
  const auto buf = read_pnm_payload(path, "P6", expect_h, expect_w, 3);
  std::vector<double> out(buf.size());
  const int64_t hw = expect_h * expect_w;
  for (int64_t p = 0; p < hw; ++p)
    for (int ch = 0; ch < 3; ++ch) out[ch * hw + p] = buf[p * 3 + ch] / 255.0;
  return out;
}

void write_pgm01(const std::filesystem::path& path, const std::vector<uint8_t>& mask,
                 int64_t h, int64_t w) {
  if (static_cast<int64_t>(mask.size()) != h * w)
    throw UsageError("write_pgm01: size mismatch");
  std::vector<uint8_t> buf(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] > 1) throw UsageError("write_pgm01: mask values must be 0 or 1");
    buf[i] = mask[i] ? 255 : 0;
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << "P5\n" << w << " " << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(buf.data()), buf.size());
  if (!os) throw DataError("write failed: " + path.string());
}

std::vector<uint8_t> read_pgm01(const std::filesystem::path& path, int64_t expect_h,
                                int64_t expect_w) {
  auto buf = read_pnm_payload(path, "P5", expect_h, expect_w, 1);
  for (uint8_t& v : buf) {
    if (v != 0 && v != 255)
      throw DataError(path.string() + ": mask byte is neither 0 nor 255");
    v = v ? 1 : 0;
  }
  return buf;
}

// --- dataset directories -----------------------------------------------------

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");

  {
    std::ofstream os(dir / "header.txt", std::ios::trunc);
    if (!os) throw DataError("cannot write " + (dir / "header.txt").string());
    os << "format_version " << ds.meta.format_version << "\n"
       << "domain " << ds.meta.domain << "\n"
       << "split " << ds.meta.split << "\n"
       << "seed " << ds.meta.seed << "\n"
       << "num_classes " << ds.meta.num_classes << "\n"
       << "per_class " << ds.meta.per_class << "\n"
       << "count " << ds.meta.count << "\n"
       << "bias " << ds.meta.bias << "\n";
  }

  std::ofstream mf(dir / "manifest.csv", std::ios::trunc);
  if (!mf) throw DataError("cannot write " + (dir / "manifest.csv").string());
  mf << "example_id,class,image_path,mask_path\n";
  char img_name[32], mask_name[32];
  for (size_t i = 0; i < ds.examples.size(); ++i) {
    const Example& ex = ds.examples[i];
    std::snprintf(img_name, sizeof img_name, "images/img_%05zu.ppm", i);
    std::snprintf(mask_name, sizeof mask_name, "masks/mask_%05zu.pgm", i);
    write_ppm(dir / img_name, ex.image, kSize, kSize);
    write_pgm01(dir / mask_name, ex.annotation, kSize, kSize);
    mf << ex.id << "," << ex.label << "," << img_name << "," << mask_name << "\n";
  }
  if (!mf) throw DataError("write failed: " + (dir / "manifest.csv").string());
}

Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  {
    std::ifstream is(dir / "header.txt");
    if (!is) throw DataError("cannot open " + (dir / "header.txt").string());
    std::string key;
    bool saw_version = false;
    while (is >> key) {
      if (key == "format_version") {
        is >> ds.meta.format_version;
        saw_version = true;
      } else if (key == "domain") {
        is >> ds.meta.domain;
      } else if (key == "split") {
        is >> ds.meta.split;
      } else if (key == "seed") {
        is >> ds.meta.seed;
      } else if (key == "num_classes") {
        is >> ds.meta.num_classes;
      } else if (key == "per_class") {
        is >> ds.meta.per_class;
      } else if (key == "count") {
        is >> ds.meta.count;
      } else if (key == "bias") {
        is >> ds.meta.bias;
      } else {
        throw DataError("unknown header key '" + key + "' in " + dir.string());
      }
      if (!is) throw DataError("malformed header in " + dir.string());
    }
    if (!saw_version || ds.meta.format_version != kDatasetFormatVersion)
      throw DataError("unsupported dataset format in " + dir.string());
    if (ds.meta.count < 1 || ds.meta.num_classes < 2)
      throw DataError("implausible header in " + dir.string());
    if (ds.meta.per_class > 0 &&
        static_cast<int64_t>(ds.meta.per_class) * ds.meta.num_classes != ds.meta.count)
      throw DataError("per-class counts do not sum to count in " + dir.string());
  }

  std::ifstream mf(dir / "manifest.csv");
  if (!mf) throw DataError("cannot open " + (dir / "manifest.csv").string());
  std::string line;
  if (!std::getline(mf, line) || line != "example_id,class,image_path,mask_path")
    throw DataError("bad manifest header in " + dir.string());
  while (std::getline(mf, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string f[4];
    for (int i = 0; i < 4; ++i)
      if (!std::getline(row, f[i], i < 3 ? ',' : '\n'))
        throw DataError("short manifest row in " + dir.string() + ": " + line);
    Example ex;
    try {
      ex.id = std::stoll(f[0]);
      ex.label = std::stoi(f[1]);
    } catch (const std::exception&) {
      throw DataError("bad manifest row in " + dir.string() + ": " + line);
    }
    if (ex.label < 0 || ex.label >= ds.meta.num_classes)
      throw DataError("label out of range in " + dir.string() + ": " + line);
    ex.image = read_ppm(dir / f[2], kSize, kSize);
    ex.annotation = read_pgm01(dir / f[3], kSize, kSize);
    ds.examples.push_back(std::move(ex));
  }
  if (static_cast<int64_t>(ds.examples.size()) != ds.meta.count)
    throw DataError(dir.string() + ": manifest has " +
                    std::to_string(ds.examples.size()) + " rows, header says " +
                    std::to_string(ds.meta.count));
  return ds;
}

}  // namespace salguide

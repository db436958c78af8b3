#include "salguide/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "salguide/errors.hpp"
#include "salguide/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

namespace salguide {

ModelConfig ModelConfig::standard(int64_t num_classes, uint64_t init_seed) {
  ModelConfig c;
  c.blocks = {{16, true}, {32, true}, {64, true}, {64, true}};
  c.num_classes = num_classes;
  c.init_seed = init_seed;
  return c;
}

void ModelConfig::validate() const {
  if (in_channels < 1 || in_h < 1 || in_w < 1)
    throw UsageError("model: bad input extents");
  if (blocks.empty()) throw UsageError("model: needs at least one block");
  if (num_classes < 2) throw UsageError("model: needs at least two classes");
  int64_t h = in_h, w = in_w;
  for (size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].out_channels < 1)
      throw UsageError("model: block " + std::to_string(i + 1) + " has no channels");
    if (blocks[i].downsample) {
      if (h % 2 != 0 || w % 2 != 0)
        throw UsageError("model: block " + std::to_string(i + 1) +
                         " downsamples an odd extent");
      h /= 2;
      w /= 2;
    }
    if (h < 1 || w < 1)
      throw UsageError("model: spatial extent vanishes at block " + std::to_string(i + 1));
  }
}

std::pair<int64_t, int64_t> ModelConfig::block_extent(int block) const {
  if (block < 1 || block > num_blocks())
    throw UsageError("model: no block " + std::to_string(block));
  int64_t h = in_h, w = in_w;
  for (int b = 1; b <= block; ++b)
    if (blocks[b - 1].downsample) {
      h /= 2;
      w /= 2;
    }
  return {h, w};
}

std::vector<std::pair<std::string, Tensor>> ModelState::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (size_t b = 0; b < conv_kernels.size(); ++b) {
    out.emplace_back("block" + std::to_string(b + 1) + ".kernel", conv_kernels[b]);
    out.emplace_back("block" + std::to_string(b + 1) + ".bias", conv_biases[b]);
  }
  out.emplace_back("head.weight", head_weight);
  out.emplace_back("head.bias", head_bias);
  return out;
}

std::vector<Tensor> ModelState::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void ModelState::zero_grad() const {
  for (auto& t : parameters()) {
    Tensor p = t;
    p.zero_grad();
  }
}

ModelState ModelState::clone() const {
  ModelState out;
  out.config = config;
  auto copy = [](const Tensor& t) {
    Tensor c = t.detached_copy();
    c.set_requires_grad(true);
    return c;
  };
  for (auto& k : conv_kernels) out.conv_kernels.push_back(copy(k));
  for (auto& b : conv_biases) out.conv_biases.push_back(copy(b));
  out.head_weight = copy(head_weight);
  out.head_bias = copy(head_bias);
  return out;
}

ModelState init_model(const ModelConfig& config) {
  config.validate();
  ModelState st;
  st.config = config;
  Rng rng(config.init_seed);

  auto he_uniform = [&rng](Shape shape, int64_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (double& v : t.mutable_data()) v = rng.uniform(-bound, bound);
    return t;
  };

  int64_t ci = config.in_channels;
  for (const BlockSpec& blk : config.blocks) {
    st.conv_kernels.push_back(he_uniform({blk.out_channels, ci, 3, 3}, ci * 9));
    st.conv_biases.push_back(Tensor::zeros({blk.out_channels}, true));
    ci = blk.out_channels;
  }
  st.head_weight = he_uniform({config.num_classes, ci}, ci);
  st.head_bias = Tensor::zeros({config.num_classes}, true);
  return st;
}

ForwardRecord forward(const ModelState& state, Tape& tape, const Tensor& batch,
                      int mask_block, const BinaryMask* mask) {
  const ModelConfig& cfg = state.config;
  if (batch.rank() != 4 || batch.dim(1) != cfg.in_channels ||
      batch.dim(2) != cfg.in_h || batch.dim(3) != cfg.in_w)
    throw UsageError("forward: batch " + shape_str(batch.shape()) +
                     " does not match model input " +
                     shape_str({-1, cfg.in_channels, cfg.in_h, cfg.in_w}));
  if (mask_block != 0) {
    if (mask_block < 1 || mask_block > cfg.num_blocks())
      throw UsageError("forward: mask block " + std::to_string(mask_block) +
                       " out of range");
    if (mask == nullptr) throw UsageError("forward: mask_block set but no mask given");
    auto [mh, mw] = cfg.block_extent(mask_block);
    if (mask->n != batch.dim(0) || mask->h != mh || mask->w != mw)
      throw UsageError("forward: mask extent does not match block output");
    for (double v : mask->values)
      if (v != 0.0 && v != 1.0) throw UsageError("forward: mask values must be 0 or 1");
  }

  ForwardRecord rec;
  Tensor x = batch;
  for (int b = 1; b <= cfg.num_blocks(); ++b) {
    x = tape.conv2d(x, state.conv_kernels[b - 1], state.conv_biases[b - 1], 1, 1);
    x = tape.relu(x);
    if (cfg.blocks[b - 1].downsample) x = tape.maxpool2d(x);
    if (b == mask_block) {
      Tensor m = Tensor::from({mask->n, mask->h, mask->w}, mask->values);
      x = tape.channel_mask(x, m);
    }
    rec.block_outputs.push_back(x);
  }
  rec.features = tape.global_avg_pool(x);
  rec.logits = tape.dense(rec.features, state.head_weight, state.head_bias);
  return rec;
}

// --- checkpoint IO ---------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'G', 'C', 'K', 'P', 'T', '1', '\n'};

void put_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_u64(std::ostream& os, uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

uint32_t take_u32(std::istream& is, const std::string& path) {
  uint32_t v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    throw DataError("checkpoint truncated: " + path);
  return v;
}
uint64_t take_u64(std::istream& is, const std::string& path) {
  uint64_t v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    throw DataError("checkpoint truncated: " + path);
  return v;
}

struct RawParam {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

std::vector<RawParam> read_records(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("not a checkpoint file: " + path.string());
  const uint32_t count = take_u32(is, path.string());
  if (count == 0 || count > 4096)
    throw DataError("checkpoint has implausible record count: " + path.string());
  std::vector<RawParam> out(count);
  for (RawParam& p : out) {
    const uint32_t name_len = take_u32(is, path.string());
    if (name_len == 0 || name_len > 256)
      throw DataError("checkpoint has implausible name length: " + path.string());
    p.name.resize(name_len);
    if (!is.read(p.name.data(), name_len))
      throw DataError("checkpoint truncated: " + path.string());
    const uint32_t rank = take_u32(is, path.string());
    if (rank > 8) throw DataError("checkpoint has implausible rank: " + path.string());
    int64_t numel = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      const uint64_t ext = take_u64(is, path.string());
      if (ext == 0 || ext > (1ull << 32))
        throw DataError("checkpoint has implausible extent: " + path.string());
      p.shape.push_back(static_cast<int64_t>(ext));
      numel *= static_cast<int64_t>(ext);
    }
    p.values.resize(static_cast<size_t>(numel));
    if (!is.read(reinterpret_cast<char*>(p.values.data()), numel * 8))
      throw DataError("checkpoint truncated: " + path.string());
  }
  return out;
}

ModelState state_from_records(std::vector<RawParam> records, const ModelConfig& cfg,
                              const std::string& path) {
  cfg.validate();
  ModelState st = init_model(cfg);  // shapes/order template; values replaced below
  auto named = st.named_parameters();
  if (records.size() != named.size())
    throw DataError("checkpoint " + path + " has " + std::to_string(records.size()) +
                    " parameters, architecture needs " + std::to_string(named.size()));
  for (size_t i = 0; i < named.size(); ++i) {
    if (records[i].name != named[i].first)
      throw DataError("checkpoint " + path + ": unexpected parameter '" +
                      records[i].name + "' (want '" + named[i].first + "')");
    Tensor t = named[i].second;
    if (records[i].shape != t.shape())
      throw DataError("checkpoint " + path + ": parameter '" + records[i].name +
                      "' has shape " + shape_str(records[i].shape) + ", want " +
                      shape_str(t.shape()));
    std::copy(records[i].values.begin(), records[i].values.end(),
              t.mutable_data().begin());
  }
  return st;
}

}  // namespace

void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
  const auto named = state.named_parameters();
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write checkpoint: " + tmp.string());
    os.write(kMagic, 8);
    put_u32(os, static_cast<uint32_t>(named.size()));
    for (const auto& [name, t] : named) {
      put_u32(os, static_cast<uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      put_u32(os, static_cast<uint32_t>(t.rank()));
      for (int64_t ext : t.shape()) put_u64(os, static_cast<uint64_t>(ext));
      os.write(reinterpret_cast<const char*>(t.data().data()), t.numel() * 8);
    }
    if (!os) throw DataError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ModelState load_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg) {
  return state_from_records(read_records(path), cfg, path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  auto records = read_records(path);
  // Infer the architecture: records must be block1.kernel, block1.bias, ...,
  // head.weight, head.bias. Standard family assumptions: every block
  // downsamples and the input is 64x64.
  if (records.size() < 4 || records.size() % 2 != 0)
    throw DataError("checkpoint " + path.string() + ": unrecognized layout");
  ModelConfig cfg;
  const size_t nblocks = records.size() / 2 - 1;
  for (size_t b = 0; b < nblocks; ++b) {
    const RawParam& k = records[2 * b];
    if (k.name != "block" + std::to_string(b + 1) + ".kernel" ||
        k.shape.size() != 4 || k.shape[2] != 3 || k.shape[3] != 3)
      throw DataError("checkpoint " + path.string() + ": unexpected parameter '" +
                      k.name + "'");
    if (b == 0) cfg.in_channels = k.shape[1];
    cfg.blocks.push_back({k.shape[0], true});
  }
  const RawParam& hw = records[records.size() - 2];
  if (hw.name != "head.weight" || hw.shape.size() != 2)
    throw DataError("checkpoint " + path.string() + ": unexpected parameter '" +
                    hw.name + "'");
  cfg.num_classes = hw.shape[0];
  return state_from_records(std::move(records), cfg, path.string());
}

}  // namespace salguide

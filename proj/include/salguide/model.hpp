#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "salguide/tape.hpp"
#include "salguide/tensor.hpp"

namespace salguide {

// Small conv classifier: a stack of (3x3 conv, stride 1, pad 1) -> relu ->
// optional 2x2 maxpool blocks, then global average pooling and one dense
// layer. Blocks are addressed 1-based; block 0 means "none"/"default".

struct BlockSpec {
  int64_t out_channels = 0;
  bool downsample = true;  // 2x2 maxpool at the end of the block
};

struct ModelConfig {
  int64_t in_channels = 3;
  int64_t in_h = 64, in_w = 64;
  std::vector<BlockSpec> blocks;
  int64_t num_classes = 10;
  uint64_t init_seed = 0;

  // 4 blocks of 16/32/64/64 channels, all downsampling: 64x64 input ->
  // 32/16/8/4 spatial outputs.
  static ModelConfig standard(int64_t num_classes = 10, uint64_t init_seed = 0);

  void validate() const;
  int num_blocks() const { return static_cast<int>(blocks.size()); }
  // Spatial extent of `block`'s output (1-based).
  std::pair<int64_t, int64_t> block_extent(int block) const;
};

// Per-example {0,1} spatial masks matching one block's output extent.
struct BinaryMask {
  int64_t n = 0, h = 0, w = 0;
  std::vector<double> values;  // n*h*w, each 0.0 or 1.0
};

struct ModelState {
  ModelConfig config;
  std::vector<Tensor> conv_kernels;  // per block: [Co,Ci,3,3]
  std::vector<Tensor> conv_biases;   // per block: [Co]
  Tensor head_weight;                // [K,C_last]
  Tensor head_bias;                  // [K]

  // Stable order: block1.kernel, block1.bias, ..., head.weight, head.bias.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  void zero_grad() const;
  ModelState clone() const;  // deep copy
};

// He-uniform kernels/weights (bound sqrt(6/fan_in)), zero biases. Draw order
// follows named_parameters(), one mt19937_64 stream seeded by init_seed.
ModelState init_model(const ModelConfig& config);

struct ForwardRecord {
  Tensor logits;                      // [N,K]
  std::vector<Tensor> block_outputs;  // block_outputs[b-1]: output of block b
  Tensor features;                    // [N,C_last] after global average pool
};

// Runs the net on batch [N,Ci,H,W]. If mask_block > 0, the output of that
// block is multiplied by `mask` (broadcast across channels) and everything
// downstream sees the masked activations.
ForwardRecord forward(const ModelState& state, Tape& tape, const Tensor& batch,
                      int mask_block = 0, const BinaryMask* mask = nullptr);

// Checkpoints: "SGCKPT1\n", u32 record count, then per parameter u32 name
// length, name bytes, u32 rank, u64 extents, f64 values; all little-endian.
// Writes go to a temp file renamed into place, so an interrupted writer
// never corrupts an existing checkpoint.
void save_checkpoint(const ModelState& state, const std::filesystem::path& path);

// Reconstructs the architecture from the stored names/shapes; assumes the
// standard family (every block downsamples, 64x64 input).
ModelState load_checkpoint(const std::filesystem::path& path);
// Validates the stored parameters against an explicit config instead.
ModelState load_checkpoint(const std::filesystem::path& path, const ModelConfig& config);

}  // namespace salguide

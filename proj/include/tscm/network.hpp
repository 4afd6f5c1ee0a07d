#pragma once

// ResNetT: a ResNet whose trailing residual blocks are made temporal. The
// declarative NetworkSpec drives both the weight-allocating builder (Model)
// and the symbolic layer listing (describe) used by the cost model.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tscm/ops.hpp"
#include "tscm/shift.hpp"
#include "tscm/textconfig.hpp"

namespace tscm::net {

enum class BlockKind { basic, bottleneck };
enum class TemporalVariant { tscm, plain2d, conv2plus1d, conv3d };
enum class TapPoint { pre_pool, post_pool };

std::string_view kind_name(BlockKind kind);
BlockKind parse_kind(std::string_view name);
std::string_view variant_name(TemporalVariant variant);
/// Accepts tscm, plain2d (or 2d), 2+1d (or conv2plus1d), 3d (or conv3d).
TemporalVariant parse_variant(std::string_view name);

struct StageSpec {
  std::string name;
  int blocks = 1;
  int width = 64;   // block output channels before the width multiplier
  BlockKind kind = BlockKind::basic;
  int stride = 1;   // spatial stride of the stage's first block
};

/// Classifier tap after a block (1-based global block index), read before or
/// after the temporal pool placed at that block, if any.
struct HeadTap {
  int block = 0;
  TapPoint tap = TapPoint::post_pool;
  int vocab = 0;    // output classes including the blank
};

struct NetworkSpec {
  std::string name = "custom";
  int in_channels = 3;
  int stem_width = 64;
  int stem_kernel = 7;
  int stem_stride = 2;
  bool stem_pool = true;
  std::vector<StageSpec> stages;
  int replaced_tail_blocks = 0;
  TemporalVariant temporal = TemporalVariant::tscm;
  shift::TscmSpec tscm;
  std::vector<int> temporal_pools;   // blocks followed by a kernel-2 stride-2 time pool
  std::vector<HeadTap> heads;        // shallow to deep; the last one decodes
  double width_multiplier = 1.0;
  int input_h = 224;
  int input_w = 224;

  int total_blocks() const;
  /// Blocks left untouched at the front (Part1, together with the stem).
  int part1_blocks() const { return total_blocks() - replaced_tail_blocks; }
  int scaled(int width) const;
  /// Number of temporal pools at or before the given block.
  int pools_through(int block) const;
  void validate() const;
};

NetworkSpec preset(std::string_view name);
std::vector<std::string> preset_names();

/// Pool placement used by the presets: 1 -> end of the penultimate stage,
/// 2 -> also end of the last stage, 3 -> also after the first replaced block.
std::vector<int> standard_pool_points(const NetworkSpec& spec, int count);
/// Three taps: post-pool at the end of the penultimate stage, then pre- and
/// post-pool at the end of the network.
std::vector<HeadTap> standard_heads(const NetworkSpec& spec, int vocab);
void set_vocab(NetworkSpec& spec, int vocab);

std::string to_text(const NetworkSpec& spec);
NetworkSpec spec_from_config(const ConfigDocument& doc);
NetworkSpec parse_spec(const std::string& text);
NetworkSpec load_spec(const std::filesystem::path& path);

enum class LayerKind { conv, norm, linear, shift, spatial_pool, temporal_pool, avgpool };

/// One layer of the symbolic network walk, at a given time divisor.
struct LayerDesc {
  std::string name;
  LayerKind kind = LayerKind::conv;
  int cin = 0;
  int cout = 0;
  std::array<int, 3> kernel{1, 1, 1};   // (t, h, w)
  int h_in = 0, w_in = 0, h_out = 0, w_out = 0;
  int pools_before = 0;                 // temporal pools applied upstream
  bool part2 = false;
  bool temporal_kernel = false;         // conv whose kernel spans time
};

std::vector<LayerDesc> describe(const NetworkSpec& spec);

template <class S>
struct ConvLayer {
  std::string name;
  Var<S> weight;
  ops::KernelDims kernel{1, 1, 1};
  ops::ConvParams params;

  Var<S> operator()(const Var<S>& x) const { return ops::conv3d(x, weight, params); }
};

template <class S>
struct NormLayer {
  std::string name;
  Var<S> gamma;
  Var<S> beta;
  // Running statistics advance during training forwards, even through a
  // const model handle.
  mutable ops::NormState<S> state;
};

/// One conv stage of a residual branch: optional shift, the conv (two for
/// 2+1D), normalisation, optional ReLU.
template <class S>
struct BranchStep {
  shift::ChannelOffsetMap shift_map;   // empty when no temporal shift
  std::vector<ConvLayer<S>> convs;
  NormLayer<S> norm;
  bool relu = true;
};

template <class S>
struct Block {
  std::string name;
  int cin = 0;
  int cout = 0;
  bool part2 = false;
  std::vector<BranchStep<S>> steps;
  bool has_projection = false;
  ConvLayer<S> projection;
  NormLayer<S> projection_norm;
};

template <class S>
struct Head {
  std::string name;
  HeadTap tap;
  Var<S> weight;
  Var<S> bias;
};

template <class S>
struct NamedParam {
  std::string name;
  Var<S> var;
  bool part2 = false;
};

struct ForwardOptions {
  bool training = false;
  /// Cut the graph between Part1 and Part2 so Part1 receives no gradient.
  bool stop_part1_gradient = false;
  /// Training forwards advance the running statistics unless cleared.
  bool update_stats = true;
};

template <class S>
class Model {
 public:
  Model(NetworkSpec spec, std::uint64_t seed);

  const NetworkSpec& spec() const noexcept { return spec_; }

  /// Per-head [T_h, vocab] log-probabilities, shallow to deep. video is
  /// [T, C, H, W] at the spec's input resolution.
  std::vector<Var<S>> forward(const Var<S>& video, const ForwardOptions& options);

  /// Eval-mode forward without graph recording; leaves running statistics
  /// untouched, so concurrent calls on one model are safe.
  std::vector<Tensor<S>> infer(const Tensor<S>& video) const;

  std::vector<NamedParam<S>> parameters() const;
  std::size_t parameter_count() const;
  /// Running normalisation statistics keyed by "<norm>.running_mean|var".
  std::vector<std::pair<std::string, Tensor<S>*>> buffers();

  const std::vector<Block<S>>& blocks() const noexcept { return blocks_; }
  const std::vector<Head<S>>& heads() const noexcept { return heads_; }

  /// Frames left at the deepest head for an input of `frames` frames.
  std::size_t output_frames(std::size_t frames) const;

  /// One residual block. With training set but update_stats cleared, batch
  /// statistics are used without touching the running averages.
  Var<S> block_forward(const Block<S>& block, const Var<S>& x, bool training, bool update_stats) const;

 private:
  std::vector<Var<S>> run(const Var<S>& video, const ForwardOptions& options, bool update_stats) const;
  Var<S> norm_forward(const NormLayer<S>& norm, const Var<S>& x, bool training, bool update_stats) const;

  NetworkSpec spec_;
  ConvLayer<S> stem_conv_;
  NormLayer<S> stem_norm_;
  std::vector<Block<S>> blocks_;
  std::vector<Head<S>> heads_;
};

/// Checkpoint directory: spec.txt plus one snapshot per parameter and buffer.
void save_checkpoint(const std::filesystem::path& dir, Model<float>& model);
Model<float> load_checkpoint(const std::filesystem::path& dir);

}  // namespace tscm::net

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "tscm/network.hpp"
#include "tscm/snapshot.hpp"

namespace tscm::net {

namespace {

template <class S>
ConvLayer<S> make_conv(std::mt19937_64& rng, std::string name, int cin, int cout, ops::KernelDims k, int stride) {
  ConvLayer<S> layer;
  layer.name = std::move(name);
  layer.kernel = k;
  layer.params.stride = {1, static_cast<std::size_t>(stride), static_cast<std::size_t>(stride)};
  layer.params.pad = {k[0] / 2, k[1] / 2, k[2] / 2};
  const std::size_t fan_in = static_cast<std::size_t>(cin) * k[0] * k[1] * k[2];
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor<S> w(Shape{static_cast<std::size_t>(cout), static_cast<std::size_t>(cin), k[0], k[1], k[2]});
  for (auto& v : w.values()) v = static_cast<S>(normal(rng));
  layer.weight = Var<S>::parameter(std::move(w));
  return layer;
}

template <class S>
NormLayer<S> make_norm(std::string name, int channels) {
  const auto c = static_cast<std::size_t>(channels);
  NormLayer<S> norm;
  norm.name = std::move(name);
  norm.gamma = Var<S>::parameter(Tensor<S>::filled(Shape{c}, S{1}));
  norm.beta = Var<S>::parameter(Tensor<S>(Shape{c}));
  norm.state = ops::NormState<S>(c);
  return norm;
}

}  // namespace

template <class S>
Model<S>::Model(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  std::mt19937_64 rng(seed);

  const int stem_w = spec_.scaled(spec_.stem_width);
  const auto sk = static_cast<std::size_t>(spec_.stem_kernel);
  stem_conv_ = make_conv<S>(rng, "stem.conv", spec_.in_channels, stem_w, {1, sk, sk}, spec_.stem_stride);
  stem_norm_ = make_norm<S>("stem.norm", stem_w);

  const bool tscm = spec_.temporal == TemporalVariant::tscm;
  int channels = stem_w;
  int index = 0;
  for (const auto& stage : spec_.stages) {
    for (int b = 0; b < stage.blocks; ++b) {
      ++index;
      Block<S> block;
      block.name = stage.name + "." + std::to_string(b);
      block.cin = channels;
      block.cout = spec_.scaled(stage.width);
      block.part2 = index > spec_.part1_blocks();
      const int stride = b == 0 ? stage.stride : 1;

      auto add_step = [&](const std::string& label, const std::string& norm_label, int ci, int co, std::size_t k, int s,
                          bool relu) {
        BranchStep<S> step;
        const std::string base = block.name + "." + label;
        if (block.part2 && tscm) step.shift_map = shift::build_offset_map(spec_.tscm, static_cast<std::size_t>(ci));
        if (block.part2 && k == 3 && spec_.temporal == TemporalVariant::conv2plus1d) {
          step.convs.push_back(make_conv<S>(rng, base + ".spatial", ci, co, {1, 3, 3}, s));
          step.convs.push_back(make_conv<S>(rng, base + ".temporal", co, co, {3, 1, 1}, 1));
        } else if (block.part2 && k == 3 && spec_.temporal == TemporalVariant::conv3d) {
          step.convs.push_back(make_conv<S>(rng, base, ci, co, {3, 3, 3}, s));
        } else {
          step.convs.push_back(make_conv<S>(rng, base, ci, co, {1, k, k}, s));
        }
        step.norm = make_norm<S>(block.name + "." + norm_label, co);
        step.relu = relu;
        block.steps.push_back(std::move(step));
      };

      if (stage.kind == BlockKind::basic) {
        add_step("conv1", "norm1", block.cin, block.cout, 3, stride, true);
        add_step("conv2", "norm2", block.cout, block.cout, 3, 1, false);
      } else {
        const int mid = std::max(1, block.cout / 4);
        add_step("conv1", "norm1", block.cin, mid, 1, 1, true);
        add_step("conv2", "norm2", mid, mid, 3, stride, true);
        add_step("conv3", "norm3", mid, block.cout, 1, 1, false);
      }
      if (stride != 1 || block.cin != block.cout) {
        block.has_projection = true;
        block.projection = make_conv<S>(rng, block.name + ".proj", block.cin, block.cout, {1, 1, 1}, stride);
        block.projection_norm = make_norm<S>(block.name + ".proj_norm", block.cout);
      }
      channels = block.cout;
      blocks_.push_back(std::move(block));
    }
  }

  for (std::size_t i = 0; i < spec_.heads.size(); ++i) {
    const HeadTap& tap = spec_.heads[i];
    const auto cin = static_cast<std::size_t>(blocks_[static_cast<std::size_t>(tap.block - 1)].cout);
    const auto vocab = static_cast<std::size_t>(tap.vocab);
    Head<S> head;
    head.name = "head" + std::to_string(i);
    head.tap = tap;
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    Tensor<S> w(Shape{vocab, cin});
    for (auto& v : w.values()) v = static_cast<S>(uniform(rng));
    head.weight = Var<S>::parameter(std::move(w));
    head.bias = Var<S>::parameter(Tensor<S>(Shape{vocab}));
    heads_.push_back(std::move(head));
  }
}

template <class S>
Var<S> Model<S>::norm_forward(const NormLayer<S>& norm, const Var<S>& x, bool training, bool update_stats) const {
  if (training && !update_stats) {
    ops::NormState<S> scratch = norm.state;
    return ops::channel_norm(x, norm.gamma, norm.beta, scratch, true);
  }
  return ops::channel_norm(x, norm.gamma, norm.beta, norm.state, training);
}

template <class S>
Var<S> Model<S>::block_forward(const Block<S>& block, const Var<S>& x, bool training, bool update_stats) const {
  Var<S> h = x;
  for (const auto& step : block.steps) {
    if (step.shift_map.channels() > 0) h = shift::temporal_shift(h, step.shift_map);
    for (const auto& conv : step.convs) h = conv(h);
    h = norm_forward(step.norm, h, training, update_stats);
    if (step.relu) h = ops::relu(h);
  }
  Var<S> shortcut = x;
  if (block.has_projection) {
    shortcut = norm_forward(block.projection_norm, block.projection(x), training, update_stats);
  }
  return ops::relu(ops::add(h, shortcut));
}

template <class S>
std::vector<Var<S>> Model<S>::run(const Var<S>& video, const ForwardOptions& options, bool update_stats) const {
  const Shape& shape = video.shape();
  if (shape.size() != 4 || shape[1] != static_cast<std::size_t>(spec_.in_channels) ||
      shape[2] != static_cast<std::size_t>(spec_.input_h) || shape[3] != static_cast<std::size_t>(spec_.input_w)) {
    throw ShapeError("model " + spec_.name + ": expected video [T, " + std::to_string(spec_.in_channels) + ", " +
                     std::to_string(spec_.input_h) + ", " + std::to_string(spec_.input_w) + "], got " +
                     shape_string(shape));
  }
  if (shape[0] == 0) throw ShapeError("model " + spec_.name + ": video has no frames");
  if ((shape[0] >> spec_.temporal_pools.size()) == 0) {
    throw ShapeError("model " + spec_.name + ": " + std::to_string(shape[0]) + " frames cannot pass " +
                     std::to_string(spec_.temporal_pools.size()) + " temporal pools");
  }

  const bool training = options.training;
  const bool cut = options.training && options.stop_part1_gradient;
  Var<S> x = stem_conv_(video);
  x = ops::relu(norm_forward(stem_norm_, x, training, update_stats));
  if (spec_.stem_pool) x = ops::maxpool2d(x, 3, 2, 1);
  if (cut && spec_.part1_blocks() == 0) x = ops::detach(x);

  std::vector<Var<S>> outputs(heads_.size());
  std::size_t next_pool = 0;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const int index = static_cast<int>(i) + 1;
    x = block_forward(blocks_[i], x, training, update_stats);
    if (cut && index == spec_.part1_blocks()) x = ops::detach(x);
    const Var<S> pre = x;
    if (next_pool < spec_.temporal_pools.size() && spec_.temporal_pools[next_pool] == index) {
      x = ops::maxpool1d_temporal(x, 2, 2);
      ++next_pool;
    }
    for (std::size_t h = 0; h < heads_.size(); ++h) {
      const Head<S>& head = heads_[h];
      if (head.tap.block != index) continue;
      const Var<S>& feature = head.tap.tap == TapPoint::pre_pool ? pre : x;
      outputs[h] = ops::log_softmax(ops::linear(ops::global_avgpool_spatial(feature), head.weight, head.bias));
    }
  }
  return outputs;
}

template <class S>
std::vector<Var<S>> Model<S>::forward(const Var<S>& video, const ForwardOptions& options) {
  return run(video, options, options.training && options.update_stats);
}

template <class S>
std::vector<Tensor<S>> Model<S>::infer(const Tensor<S>& video) const {
  NoGradGuard guard;
  std::vector<Tensor<S>> out;
  for (const auto& v : run(Var<S>::constant(video), ForwardOptions{}, false)) out.push_back(v.value());
  return out;
}

template <class S>
std::vector<NamedParam<S>> Model<S>::parameters() const {
  std::vector<NamedParam<S>> out;
  auto conv = [&](const ConvLayer<S>& c, bool part2) { out.push_back({c.name + ".weight", c.weight, part2}); };
  auto norm = [&](const NormLayer<S>& n, bool part2) {
    out.push_back({n.name + ".gamma", n.gamma, part2});
    out.push_back({n.name + ".beta", n.beta, part2});
  };
  conv(stem_conv_, false);
  norm(stem_norm_, false);
  for (const auto& block : blocks_) {
    for (const auto& step : block.steps) {
      for (const auto& c : step.convs) conv(c, block.part2);
      norm(step.norm, block.part2);
    }
    if (block.has_projection) {
      conv(block.projection, block.part2);
      norm(block.projection_norm, block.part2);
    }
  }
  for (const auto& head : heads_) {
    out.push_back({head.name + ".weight", head.weight, true});
    out.push_back({head.name + ".bias", head.bias, true});
  }
  return out;
}

template <class S>
std::size_t Model<S>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.var.value().size();
  return n;
}

template <class S>
std::vector<std::pair<std::string, Tensor<S>*>> Model<S>::buffers() {
  std::vector<std::pair<std::string, Tensor<S>*>> out;
  auto norm = [&](NormLayer<S>& n) {
    out.emplace_back(n.name + ".running_mean", &n.state.running_mean);
    out.emplace_back(n.name + ".running_var", &n.state.running_var);
  };
  norm(stem_norm_);
  for (auto& block : blocks_) {
    for (auto& step : block.steps) norm(step.norm);
    if (block.has_projection) norm(block.projection_norm);
  }
  return out;
}

template <class S>
std::size_t Model<S>::output_frames(std::size_t frames) const {
  const HeadTap& deepest = spec_.heads.back();
  int pools = spec_.pools_through(deepest.block);
  const bool pool_here = std::find(spec_.temporal_pools.begin(), spec_.temporal_pools.end(), deepest.block) !=
                         spec_.temporal_pools.end();
  if (deepest.tap == TapPoint::pre_pool && pool_here) --pools;
  return frames >> pools;
}

template class Model<float>;
template class Model<double>;

void save_checkpoint(const std::filesystem::path& dir, Model<float>& model) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream spec(dir / "spec.txt");
    if (!spec) throw SnapshotError("cannot write " + (dir / "spec.txt").string());
    spec << to_text(model.spec());
  }
  for (const auto& p : model.parameters()) save_snapshot(dir / (p.name + ".tensor"), p.var.value());
  for (const auto& [name, tensor] : model.buffers()) save_snapshot(dir / (name + ".tensor"), *tensor);
}

Model<float> load_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "spec.txt")) {
    throw SnapshotError("checkpoint " + dir.string() + " has no spec.txt");
  }
  Model<float> model(load_spec(dir / "spec.txt"), 0);
  auto restore = [&](const std::string& name, Tensor<float>& into) {
    Tensor<float> t = load_snapshot(dir / (name + ".tensor"));
    if (t.shape() != into.shape()) {
      throw SnapshotError("checkpoint tensor " + name + " has shape " + shape_string(t.shape()) + ", model expects " +
                          shape_string(into.shape()));
    }
    into = std::move(t);
  };
  for (auto& p : model.parameters()) restore(p.name, p.var.mutable_value());
  for (auto& [name, tensor] : model.buffers()) restore(name, *tensor);
  return model;
}

}  // namespace tscm::net

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "tscm/network.hpp"

namespace tscm::net {

std::string_view kind_name(BlockKind kind) { return kind == BlockKind::basic ? "basic" : "bottleneck"; }

BlockKind parse_kind(std::string_view name) {
  if (name == "basic") return BlockKind::basic;
  if (name == "bottleneck") return BlockKind::bottleneck;
  throw ConfigError("unknown block kind '" + std::string(name) + "'");
}

std::string_view variant_name(TemporalVariant variant) {
  switch (variant) {
    case TemporalVariant::tscm: return "tscm";
    case TemporalVariant::plain2d: return "plain2d";
    case TemporalVariant::conv2plus1d: return "2+1d";
    case TemporalVariant::conv3d: return "3d";
  }
  return "unknown";
}

TemporalVariant parse_variant(std::string_view name) {
  if (name == "tscm") return TemporalVariant::tscm;
  if (name == "plain2d" || name == "2d") return TemporalVariant::plain2d;
  if (name == "2+1d" || name == "conv2plus1d") return TemporalVariant::conv2plus1d;
  if (name == "3d" || name == "conv3d") return TemporalVariant::conv3d;
  throw ConfigError("unknown temporal variant '" + std::string(name) + "' (expected tscm, plain2d, 2+1d, 3d)");
}

int NetworkSpec::total_blocks() const {
  int n = 0;
  for (const auto& s : stages) n += s.blocks;
  return n;
}

int NetworkSpec::scaled(int width) const {
  return std::max(1, static_cast<int>(std::lround(width * width_multiplier)));
}

int NetworkSpec::pools_through(int block) const {
  return static_cast<int>(std::count_if(temporal_pools.begin(), temporal_pools.end(), [&](int p) { return p <= block; }));
}

void NetworkSpec::validate() const {
  auto fail = [&](const std::string& why) { throw ConfigError("network spec '" + name + "': " + why); };
  if (in_channels < 1) fail("in_channels must be >= 1");
  if (stem_width < 1 || stem_kernel < 1 || stem_stride < 1) fail("stem width, kernel and stride must be >= 1");
  if (stages.empty()) fail("at least one stage is required");
  for (const auto& s : stages) {
    if (s.blocks < 1 || s.width < 1 || s.stride < 1) fail("stage " + s.name + " needs blocks, width, stride >= 1");
  }
  if (!(width_multiplier > 0.0)) fail("width_multiplier must be positive");
  if (input_h < 1 || input_w < 1) fail("input resolution must be positive");
  const int total = total_blocks();
  if (replaced_tail_blocks < 0 || replaced_tail_blocks > total) {
    fail("replaced_tail_blocks=" + std::to_string(replaced_tail_blocks) + " but the network has only " +
         std::to_string(total) + " blocks");
  }
  try {
    tscm.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  for (std::size_t i = 0; i < temporal_pools.size(); ++i) {
    const int p = temporal_pools[i];
    if (p < 1 || p > total) fail("temporal pool after block " + std::to_string(p) + " does not exist");
    if (i > 0 && p <= temporal_pools[i - 1]) fail("temporal pools must be strictly increasing");
  }
  if (heads.empty()) fail("at least one head is required");
  for (std::size_t i = 0; i < heads.size(); ++i) {
    const auto& h = heads[i];
    if (h.block < 1 || h.block > total) fail("head tap at block " + std::to_string(h.block) + " does not exist");
    if (h.vocab < 2) fail("head vocabulary must include the blank and at least one gloss");
    if (i > 0) {
      const auto& prev = heads[i - 1];
      const bool ordered = prev.block < h.block || (prev.block == h.block && prev.tap == TapPoint::pre_pool &&
                                                    h.tap == TapPoint::post_pool);
      if (!ordered) fail("heads must be listed shallow to deep");
    }
  }
}

namespace {

NetworkSpec resnet_layout(std::string name, BlockKind kind, std::array<int, 4> blocks, std::array<int, 4> widths) {
  NetworkSpec spec;
  spec.name = std::move(name);
  const char* names[] = {"res2", "res3", "res4", "res5"};
  for (int i = 0; i < 4; ++i) spec.stages.push_back(StageSpec{names[i], blocks[i], widths[i], kind, i == 0 ? 1 : 2});
  spec.replaced_tail_blocks = 7;
  spec.temporal_pools = standard_pool_points(spec, 2);
  spec.heads = standard_heads(spec, 1233);
  return spec;
}

}  // namespace

std::vector<int> standard_pool_points(const NetworkSpec& spec, int count) {
  if (count < 0 || count > 3) throw ConfigError("temporal pool count must be within 0..3");
  if (spec.stages.size() < 2) throw ConfigError("standard pool placement needs at least two stages");
  const int total = spec.total_blocks();
  const int penultimate_end = total - spec.stages.back().blocks;
  std::vector<int> points;
  if (count >= 1) points.push_back(penultimate_end);
  if (count >= 2) points.push_back(total);
  if (count >= 3) {
    const int first_replaced = std::max(1, spec.part1_blocks() + 1);
    if (first_replaced < penultimate_end) {
      points.push_back(first_replaced);
    } else {
      points.push_back(std::max(1, penultimate_end - 1));
    }
  }
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());
  return points;
}

std::vector<HeadTap> standard_heads(const NetworkSpec& spec, int vocab) {
  const int total = spec.total_blocks();
  const int penultimate_end = total - spec.stages.back().blocks;
  return {HeadTap{penultimate_end, TapPoint::post_pool, vocab}, HeadTap{total, TapPoint::pre_pool, vocab},
          HeadTap{total, TapPoint::post_pool, vocab}};
}

void set_vocab(NetworkSpec& spec, int vocab) {
  for (auto& h : spec.heads) h.vocab = vocab;
}

NetworkSpec preset(std::string_view name) {
  if (name == "resnett34") return resnet_layout("resnett34", BlockKind::basic, {3, 4, 6, 3}, {64, 128, 256, 512});
  if (name == "resnett50") {
    return resnet_layout("resnett50", BlockKind::bottleneck, {3, 4, 6, 3}, {256, 512, 1024, 2048});
  }
  if (name == "resnett101") {
    return resnet_layout("resnett101", BlockKind::bottleneck, {3, 4, 23, 3}, {256, 512, 1024, 2048});
  }
  if (name == "resnett34-desk" || name == "resnett50-desk" || name == "resnett101-desk") {
    const std::string base(name.substr(0, name.size() - 5));
    NetworkSpec spec = preset(base);
    spec.name = std::string(name);
    spec.width_multiplier = 0.125;
    spec.input_h = 32;
    spec.input_w = 32;
    set_vocab(spec, 9);
    return spec;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

std::vector<std::string> preset_names() {
  return {"resnett34", "resnett50", "resnett101", "resnett34-desk", "resnett50-desk", "resnett101-desk"};
}

std::string to_text(const NetworkSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  os << "[network]\n"
     << "name = " << spec.name << '\n'
     << "in_channels = " << spec.in_channels << '\n'
     << "input = " << spec.input_h << 'x' << spec.input_w << '\n'
     << "width_multiplier = " << spec.width_multiplier << '\n'
     << "replaced_tail_blocks = " << spec.replaced_tail_blocks << '\n'
     << "temporal = " << variant_name(spec.temporal) << "\n\n";
  os << "[stem]\n"
     << "width = " << spec.stem_width << '\n'
     << "kernel = " << spec.stem_kernel << '\n'
     << "stride = " << spec.stem_stride << '\n'
     << "pool = " << (spec.stem_pool ? 1 : 0) << "\n\n";
  for (const auto& s : spec.stages) {
    os << "[stage " << s.name << "]\n"
       << "blocks = " << s.blocks << '\n'
       << "width = " << s.width << '\n'
       << "kind = " << kind_name(s.kind) << '\n'
       << "stride = " << s.stride << "\n\n";
  }
  os << "[tscm]\n"
     << "mode = " << shift::mode_name(spec.tscm.mode) << '\n'
     << "span = " << spec.tscm.span << '\n'
     << "seed = " << spec.tscm.seed << '\n'
     << "tsm_fraction = " << spec.tscm.tsm_fraction << "\n\n";
  for (int p : spec.temporal_pools) os << "[pool]\nafter = " << p << "\n\n";
  for (const auto& h : spec.heads) {
    os << "[head]\n"
       << "block = " << h.block << '\n'
       << "tap = " << (h.tap == TapPoint::pre_pool ? "pre" : "post") << '\n'
       << "vocab = " << h.vocab << "\n\n";
  }
  return os.str();
}

NetworkSpec spec_from_config(const ConfigDocument& doc) {
  NetworkSpec spec;
  if (const auto* n = doc.first("network")) {
    if (n->has("preset")) spec = preset(n->get("preset"));
    spec.name = n->get_or("name", spec.name);
    spec.in_channels = static_cast<int>(n->get_int_or("in_channels", spec.in_channels));
    if (n->has("input")) {
      const std::string in = n->get("input");
      const auto x = in.find('x');
      if (x == std::string::npos) throw ConfigError("network.input must look like HxW, got '" + in + "'");
      spec.input_h = static_cast<int>(parse_long(in.substr(0, x), "network.input"));
      spec.input_w = static_cast<int>(parse_long(in.substr(x + 1), "network.input"));
    }
    spec.width_multiplier = n->get_double_or("width_multiplier", spec.width_multiplier);
    spec.replaced_tail_blocks = static_cast<int>(n->get_int_or("replaced_tail_blocks", spec.replaced_tail_blocks));
    if (n->has("temporal")) spec.temporal = parse_variant(n->get("temporal"));
  }
  if (const auto* s = doc.first("stem")) {
    spec.stem_width = static_cast<int>(s->get_int_or("width", spec.stem_width));
    spec.stem_kernel = static_cast<int>(s->get_int_or("kernel", spec.stem_kernel));
    spec.stem_stride = static_cast<int>(s->get_int_or("stride", spec.stem_stride));
    spec.stem_pool = s->get_int_or("pool", spec.stem_pool ? 1 : 0) != 0;
  }
  const auto stages = doc.all("stage");
  if (!stages.empty()) {
    spec.stages.clear();
    for (const auto* s : stages) {
      StageSpec st;
      st.name = s->label.empty() ? "stage" + std::to_string(spec.stages.size() + 2) : s->label;
      st.blocks = static_cast<int>(s->get_int("blocks"));
      st.width = static_cast<int>(s->get_int("width"));
      st.kind = parse_kind(s->get_or("kind", "basic"));
      st.stride = static_cast<int>(s->get_int_or("stride", 1));
      spec.stages.push_back(st);
    }
  }
  if (const auto* t = doc.first("tscm")) {
    if (t->has("mode")) spec.tscm.mode = shift::parse_mode(t->get("mode"));
    spec.tscm.span = static_cast<int>(t->get_int_or("span", spec.tscm.span));
    spec.tscm.seed = static_cast<std::uint64_t>(t->get_int_or("seed", static_cast<long>(spec.tscm.seed)));
    spec.tscm.tsm_fraction = t->get_double_or("tsm_fraction", spec.tscm.tsm_fraction);
  }
  const auto pools = doc.all("pool");
  if (!pools.empty()) {
    spec.temporal_pools.clear();
    for (const auto* p : pools) spec.temporal_pools.push_back(static_cast<int>(p->get_int("after")));
  }
  const auto heads = doc.all("head");
  if (!heads.empty()) {
    spec.heads.clear();
    for (const auto* h : heads) {
      HeadTap tap;
      tap.block = static_cast<int>(h->get_int("block"));
      const std::string where = h->get_or("tap", "post");
      if (where != "pre" && where != "post") throw ConfigError("head.tap must be 'pre' or 'post'");
      tap.tap = where == "pre" ? TapPoint::pre_pool : TapPoint::post_pool;
      tap.vocab = static_cast<int>(h->get_int("vocab"));
      spec.heads.push_back(tap);
    }
  }
  spec.validate();
  return spec;
}

NetworkSpec parse_spec(const std::string& text) { return spec_from_config(parse_config(text)); }

NetworkSpec load_spec(const std::filesystem::path& path) { return spec_from_config(load_config(path.string())); }

namespace {

int out_extent(int n, int k, int stride, int pad, const std::string& layer) {
  if (n + 2 * pad < k) {
    throw ConfigError("layer " + layer + ": kernel " + std::to_string(k) + " exceeds padded extent " +
                      std::to_string(n + 2 * pad) + "; input resolution too small");
  }
  return (n + 2 * pad - k) / stride + 1;
}

class Walker {
 public:
  explicit Walker(const NetworkSpec& spec) : spec_(spec), h_(spec.input_h), w_(spec.input_w) {}

  void conv(const std::string& name, int cin, int cout, std::array<int, 3> k, int stride, bool part2) {
    LayerDesc d = base(name, LayerKind::conv, cin, cout, part2);
    d.kernel = k;
    d.h_out = out_extent(h_, k[1], stride, k[1] / 2, name);
    d.w_out = out_extent(w_, k[2], stride, k[2] / 2, name);
    d.temporal_kernel = k[0] > 1;
    layers_.push_back(d);
    h_ = d.h_out;
    w_ = d.w_out;
  }
  void norm(const std::string& name, int c, bool part2) { layers_.push_back(base(name, LayerKind::norm, c, c, part2)); }
  void shift(const std::string& name, int c, bool part2) { layers_.push_back(base(name, LayerKind::shift, c, c, part2)); }
  void spatial_pool(const std::string& name, int c) {
    LayerDesc d = base(name, LayerKind::spatial_pool, c, c, false);
    d.kernel = {1, 3, 3};
    d.h_out = out_extent(h_, 3, 2, 1, name);
    d.w_out = out_extent(w_, 3, 2, 1, name);
    layers_.push_back(d);
    h_ = d.h_out;
    w_ = d.w_out;
  }
  void temporal_pool(const std::string& name, int c, bool part2) {
    LayerDesc d = base(name, LayerKind::temporal_pool, c, c, part2);
    d.kernel = {2, 1, 1};
    layers_.push_back(d);
    ++pools_;
  }
  void head(const std::string& name, int cin, int vocab, int pools_before, bool part2) {
    LayerDesc avg = base(name + ".avgpool", LayerKind::avgpool, cin, cin, part2);
    avg.pools_before = pools_before;
    avg.h_in = head_h_;
    avg.w_in = head_w_;
    avg.h_out = avg.w_out = 1;
    layers_.push_back(avg);
    LayerDesc lin = base(name + ".linear", LayerKind::linear, cin, vocab, part2);
    lin.pools_before = pools_before;
    lin.h_in = lin.w_in = lin.h_out = lin.w_out = 1;
    layers_.push_back(lin);
  }
  void append(const LayerDesc& d) { layers_.push_back(d); }
  void remember_head_extent(int h, int w) {
    head_h_ = h;
    head_w_ = w;
  }
  int h() const { return h_; }
  int w() const { return w_; }
  int pools() const { return pools_; }
  std::vector<LayerDesc> take() { return std::move(layers_); }

 private:
  LayerDesc base(const std::string& name, LayerKind kind, int cin, int cout, bool part2) const {
    LayerDesc d;
    d.name = name;
    d.kind = kind;
    d.cin = cin;
    d.cout = cout;
    d.h_in = d.h_out = h_;
    d.w_in = d.w_out = w_;
    d.pools_before = pools_;
    d.part2 = part2;
    return d;
  }

  const NetworkSpec& spec_;
  int h_, w_;
  int pools_ = 0;
  int head_h_ = 1, head_w_ = 1;
  std::vector<LayerDesc> layers_;
};

}  // namespace

std::vector<LayerDesc> describe(const NetworkSpec& spec) {
  spec.validate();
  Walker walk(spec);
  const int stem_w = spec.scaled(spec.stem_width);
  {
    const int k = spec.stem_kernel;
    walk.conv("stem.conv", spec.in_channels, stem_w, {1, k, k}, spec.stem_stride, false);
    walk.norm("stem.norm", stem_w, false);
    if (spec.stem_pool) walk.spatial_pool("stem.pool", stem_w);
  }

  struct TapInfo {
    int channels, h, w, pools;
    bool part2;
  };
  std::vector<TapInfo> pre(spec.total_blocks() + 1), post(spec.total_blocks() + 1);

  const bool tscm = spec.temporal == TemporalVariant::tscm;
  int channels = stem_w;
  int index = 0;
  for (const auto& stage : spec.stages) {
    for (int b = 0; b < stage.blocks; ++b) {
      ++index;
      const bool part2 = index > spec.part1_blocks();
      const std::string name = stage.name + "." + std::to_string(b);
      const int stride = b == 0 ? stage.stride : 1;
      const int cin = channels;
      const int cout = spec.scaled(stage.width);
      const int h_in = walk.h(), w_in = walk.w();

      auto conv_step = [&](const std::string& label, int ci, int co, int k, int s) {
        if (part2 && tscm) walk.shift(name + "." + label + ".shift", ci, part2);
        if (part2 && k == 3 && spec.temporal == TemporalVariant::conv2plus1d) {
          walk.conv(name + "." + label + ".spatial", ci, co, {1, 3, 3}, s, part2);
          walk.conv(name + "." + label + ".temporal", co, co, {3, 1, 1}, 1, part2);
        } else if (part2 && k == 3 && spec.temporal == TemporalVariant::conv3d) {
          walk.conv(name + "." + label, ci, co, {3, 3, 3}, s, part2);
        } else {
          walk.conv(name + "." + label, ci, co, {1, k, k}, s, part2);
        }
      };

      if (stage.kind == BlockKind::basic) {
        conv_step("conv1", cin, cout, 3, stride);
        walk.norm(name + ".norm1", cout, part2);
        conv_step("conv2", cout, cout, 3, 1);
        walk.norm(name + ".norm2", cout, part2);
      } else {
        const int mid = std::max(1, cout / 4);
        conv_step("conv1", cin, mid, 1, 1);
        walk.norm(name + ".norm1", mid, part2);
        conv_step("conv2", mid, mid, 3, stride);
        walk.norm(name + ".norm2", mid, part2);
        conv_step("conv3", mid, cout, 1, 1);
        walk.norm(name + ".norm3", cout, part2);
      }
      if (stride != 1 || cin != cout) {
        LayerDesc proj;
        proj.name = name + ".proj";
        proj.kind = LayerKind::conv;
        proj.cin = cin;
        proj.cout = cout;
        proj.h_in = h_in;
        proj.w_in = w_in;
        proj.h_out = out_extent(h_in, 1, stride, 0, proj.name);
        proj.w_out = out_extent(w_in, 1, stride, 0, proj.name);
        proj.pools_before = walk.pools();
        proj.part2 = part2;
        if (proj.h_out != walk.h() || proj.w_out != walk.w()) {
          throw ConfigError("block " + name + ": shortcut and branch spatial sizes disagree");
        }
        walk.append(proj);
        walk.norm(name + ".proj_norm", cout, part2);
      }
      channels = cout;
      pre[index] = TapInfo{channels, walk.h(), walk.w(), walk.pools(), part2};
      if (std::find(spec.temporal_pools.begin(), spec.temporal_pools.end(), index) != spec.temporal_pools.end()) {
        walk.temporal_pool(name + ".tpool", channels, part2);
      }
      post[index] = TapInfo{channels, walk.h(), walk.w(), walk.pools(), part2};
    }
  }

  std::vector<LayerDesc> layers = walk.take();
  for (std::size_t i = 0; i < spec.heads.size(); ++i) {
    const auto& tap = spec.heads[i];
    const TapInfo& info = tap.tap == TapPoint::pre_pool ? pre[tap.block] : post[tap.block];
    Walker hw(spec);
    hw.remember_head_extent(info.h, info.w);
    hw.head("head" + std::to_string(i), info.channels, tap.vocab, info.pools, info.part2);
    for (auto& l : hw.take()) layers.push_back(l);
  }
  return layers;
}

}  // namespace tscm::net

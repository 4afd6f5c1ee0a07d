#include "tscm/datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "tscm/snapshot.hpp"

namespace tscm::data {

namespace {

constexpr int kGlyph = 7;

// Base shapes; further shapes are drawn from a fixed generator so the
// vocabulary can grow without touching these.
constexpr std::array<const char*, 4> kShapeNames = {"ring", "cross", "bar", "tee"};
constexpr std::array<std::array<const char*, kGlyph>, 4> kShapes = {{
    {"#######", "#.....#", "#.....#", "#.....#", "#.....#", "#.....#", "#######"},
    {"...#...", "...#...", "...#...", "#######", "...#...", "...#...", "...#..."},
    {"#######", "#######", ".......", ".......", ".......", "#######", "#######"},
    {"#######", "#######", "...#...", "...#...", "...#...", "...#...", "...#..."},
}};
constexpr std::array<std::array<float, 3>, 6> kColors = {{
    {1.0f, 0.2f, 0.2f}, {0.2f, 1.0f, 0.2f}, {0.3f, 0.4f, 1.0f},
    {1.0f, 1.0f, 0.2f}, {1.0f, 0.3f, 1.0f}, {0.2f, 1.0f, 1.0f},
}};

struct Axis {
  int x, y;
  const char* plus;
  const char* minus;
};
constexpr std::array<Axis, 4> kAxes = {{
    {1, 0, "right", "left"}, {0, 1, "down", "up"}, {1, 1, "southeast", "northwest"}, {1, -1, "northeast", "southwest"},
}};

bool glyph_on(int shape, int row, int col) {
  if (shape < static_cast<int>(kShapes.size())) return kShapes[shape][row][col] == '#';
  std::mt19937_64 bits(0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(shape));
  std::uint64_t mask = bits();
  // Left-right symmetric random glyph with a solid border row.
  const int c = std::min(col, kGlyph - 1 - col);
  if (row == 0) return true;
  return (mask >> (row * 4 + c)) & 1U;
}

int scale_of(int height, int width) { return std::max(1, std::min(height, width) / 32); }

int wrap(int v, int n) {
  v %= n;
  return v < 0 ? v + n : v;
}

std::string sample_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%05d", i);
  return buf;
}

}  // namespace

void GenerateConfig::validate() const {
  if (vocab < 4 || vocab % 2 != 0) throw DataError("vocab must be even and >= 4 (glosses come in opposite-motion pairs)");
  if (sentences < 10) throw DataError("at least 10 sentences are needed for an 80/10/10 split");
  if (sentences < vocab / 2) throw DataError("too few sentences to place every gloss in the training split");
  if (height < 2 * kGlyph || width < 2 * kGlyph) {
    throw DataError("resolution " + std::to_string(height) + "x" + std::to_string(width) + " is too small for " +
                    std::to_string(kGlyph) + "-pixel glyphs (need at least " + std::to_string(2 * kGlyph) + ")");
  }
  if (min_label < 1 || max_label < min_label) throw DataError("label length range is empty");
  if (min_gloss_frames < 1 || max_gloss_frames < min_gloss_frames) throw DataError("gloss duration range is empty");
  if (min_transition < 0 || max_transition < min_transition) throw DataError("transition range is empty");
  if (noise < 0.0 || noise > 1.0) throw DataError("noise must be within [0, 1]");
}

std::vector<GlyphGloss> make_vocabulary(const GenerateConfig& config) {
  std::vector<GlyphGloss> out;
  const int speed = 2 * scale_of(config.height, config.width);
  for (int pair = 0; pair < config.vocab / 2; ++pair) {
    const Axis& axis = kAxes[pair % kAxes.size()];
    const int shape = pair;
    const std::string shape_name =
        shape < static_cast<int>(kShapeNames.size()) ? kShapeNames[shape] : "glyph" + std::to_string(shape);
    for (int sign : {1, -1}) {
      GlyphGloss g;
      g.id = static_cast<int>(out.size()) + 1;
      g.shape = shape;
      g.dx = sign * axis.x * speed;
      g.dy = sign * axis.y * speed;
      g.name = shape_name + "_" + (sign > 0 ? axis.plus : axis.minus);
      g.min_frames = config.min_gloss_frames;
      g.max_frames = config.max_gloss_frames;
      out.push_back(g);
    }
  }
  return out;
}

Tensor<float> render_gloss(const GlyphGloss& gloss, int x, int y, int frames, int height, int width) {
  if (frames < 0) throw DataError("negative frame count");
  const int s = scale_of(height, width);
  if (height < 2 * kGlyph * s || width < 2 * kGlyph * s) throw DataError("resolution too small for glyphs");
  const auto& color = kColors[static_cast<std::size_t>(gloss.shape) % kColors.size()];
  const auto H = static_cast<std::size_t>(height), W = static_cast<std::size_t>(width);
  Tensor<float> video(Shape{static_cast<std::size_t>(frames), 3, H, W});
  for (int f = 0; f < frames; ++f) {
    const int ox = x + f * gloss.dx, oy = y + f * gloss.dy;
    for (int r = 0; r < kGlyph; ++r) {
      for (int c = 0; c < kGlyph; ++c) {
        if (!glyph_on(gloss.shape, r, c)) continue;
        for (int i = 0; i < s; ++i) {
          for (int j = 0; j < s; ++j) {
            const auto py = static_cast<std::size_t>(wrap(oy + r * s + i, height));
            const auto px = static_cast<std::size_t>(wrap(ox + c * s + j, width));
            for (std::size_t ch = 0; ch < 3; ++ch) video.at4(static_cast<std::size_t>(f), ch, py, px) = color[ch];
          }
        }
      }
    }
  }
  return video;
}

Sample render_sample(const GenerateConfig& config, const std::vector<GlyphGloss>& vocab, const GlossSequence& label,
                     std::uint64_t seed, std::string id) {
  std::mt19937_64 rng(seed);
  std::vector<Tensor<float>> pieces;
  Sample sample;
  sample.id = std::move(id);
  sample.label = label;
  sample.seed = seed;
  int t = 0;
  const auto H = static_cast<std::size_t>(config.height), W = static_cast<std::size_t>(config.width);
  for (std::size_t i = 0; i < label.size(); ++i) {
    const int token = label.tokens[i];
    if (token < 1 || token > static_cast<int>(vocab.size())) throw DataError("label token out of vocabulary");
    const GlyphGloss& g = vocab[static_cast<std::size_t>(token - 1)];
    if (i > 0) {
      const int gap = std::uniform_int_distribution<int>(config.min_transition, config.max_transition)(rng);
      pieces.emplace_back(Shape{static_cast<std::size_t>(gap), 3, H, W});
      t += gap;
    }
    const int len = std::uniform_int_distribution<int>(g.min_frames, g.max_frames)(rng);
    const int x = std::uniform_int_distribution<int>(0, config.width - 1)(rng);
    const int y = std::uniform_int_distribution<int>(0, config.height - 1)(rng);
    pieces.push_back(render_gloss(g, x, y, len, config.height, config.width));
    sample.spans.emplace_back(t, t + len);
    t += len;
  }
  Tensor<float> video(Shape{static_cast<std::size_t>(t), 3, H, W});
  std::size_t offset = 0;
  for (const auto& p : pieces) {
    std::copy(p.storage().begin(), p.storage().end(), video.storage().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.size();
  }
  if (config.noise > 0.0) {
    std::uniform_real_distribution<float> u(static_cast<float>(-config.noise), static_cast<float>(config.noise));
    for (auto& v : video.values()) v = std::clamp(v + u(rng), 0.0f, 1.0f);
  }
  sample.video = std::move(video);
  return sample;
}

void generate(const GenerateConfig& config, const std::filesystem::path& dir) {
  config.validate();
  const auto vocab = make_vocabulary(config);
  std::mt19937_64 rng(config.seed);

  const int n = config.sentences;
  const int V = config.vocab;
  std::vector<GlossSequence> labels(static_cast<std::size_t>(n));
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(n));
  const int covering = (V + 1) / 2;
  for (int i = 0; i < n; ++i) {
    auto& tokens = labels[static_cast<std::size_t>(i)].tokens;
    const int len = std::uniform_int_distribution<int>(config.min_label, config.max_label)(rng);
    for (int k = 0; k < len; ++k) tokens.push_back(std::uniform_int_distribution<int>(1, V)(rng));
    // The first sentences cover the vocabulary so every gloss reaches train.
    if (i < covering) {
      tokens[0] = 2 * i + 1;
      if (tokens.size() > 1 && 2 * i + 2 <= V) tokens[1] = 2 * i + 2;
      else if (2 * i + 2 <= V) tokens.push_back(2 * i + 2);
      std::shuffle(tokens.begin(), tokens.end(), rng);
    }
    seeds[static_cast<std::size_t>(i)] = rng();
  }

  std::vector<int> order;
  for (int i = covering; i < n; ++i) order.push_back(i);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_train = static_cast<int>(std::lround(0.8 * n));
  const int n_dev = static_cast<int>(std::lround(0.1 * n));
  std::vector<std::string> split(static_cast<std::size_t>(n), "train");
  for (std::size_t k = 0; k < order.size(); ++k) {
    const int slot = covering + static_cast<int>(k);
    const auto i = static_cast<std::size_t>(order[k]);
    if (slot >= n_train + n_dev) split[i] = "test";
    else if (slot >= n_train) split[i] = "dev";
  }

  std::filesystem::create_directories(dir / "samples");
  {
    std::ofstream v(dir / "vocab.txt");
    if (!v) throw DataError("cannot write " + (dir / "vocab.txt").string());
    v << "<blank>\n";
    for (const auto& g : vocab) v << g.name << '\n';
  }
  std::ofstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw DataError("cannot write " + (dir / "manifest.jsonl").string());
  for (int i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    Sample s = render_sample(config, vocab, labels[idx], seeds[idx], sample_id(i));
    const std::string rel = "samples/" + s.id + ".tensor";
    save_snapshot(dir / rel, s.video);
    nlohmann::json row;
    row["id"] = s.id;
    row["path"] = rel;
    row["label"] = s.label.tokens;
    row["T"] = s.video.dim(0);
    row["split"] = split[idx];
    row["seed"] = s.seed;
    row["spans"] = s.spans;
    manifest << row.dump() << '\n';
  }
  nlohmann::json meta = {{"vocab", config.vocab},       {"sentences", config.sentences},
                         {"height", config.height},     {"width", config.width},
                         {"seed", config.seed},         {"min_label", config.min_label},
                         {"max_label", config.max_label}, {"noise", config.noise}};
  std::ofstream(dir / "generate.json") << meta.dump(2) << '\n';
}

std::vector<const SampleRef*> Dataset::split(const std::string& name) const {
  std::vector<const SampleRef*> out;
  for (const auto& s : samples) {
    if (s.split == name) out.push_back(&s);
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.root = std::filesystem::absolute(dir);
  std::ifstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw DataError("no manifest.jsonl in " + dir.string());
  std::ifstream vocab(dir / "vocab.txt");
  if (!vocab) throw DataError("no vocab.txt in " + dir.string());
  for (std::string line; std::getline(vocab, line);) {
    if (!line.empty()) ds.vocab.push_back(line);
  }
  int lineno = 0;
  for (std::string line; std::getline(manifest, line);) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto row = nlohmann::json::parse(line);
      SampleRef ref;
      ref.id = row.at("id").get<std::string>();
      ref.path = ds.root / row.at("path").get<std::string>();
      ref.label.tokens = row.at("label").get<std::vector<int>>();
      ref.frames = row.at("T").get<std::size_t>();
      ref.split = row.at("split").get<std::string>();
      for (int tok : ref.label.tokens) {
        if (tok < 1 || static_cast<std::size_t>(tok) >= ds.vocab.size()) {
          throw DataError("label token " + std::to_string(tok) + " not in vocab.txt");
        }
      }
      ds.samples.push_back(std::move(ref));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return ds;
}

Tensor<float> load_video(const SampleRef& ref) {
  Tensor<float> v = load_snapshot(ref.path);
  if (v.rank() != 4 || v.dim(0) != ref.frames) {
    throw DataError("sample " + ref.id + ": tensor " + shape_string(v.shape()) + " does not match manifest T=" +
                    std::to_string(ref.frames));
  }
  return v;
}

Tensor<float> resample_frames(const Tensor<float>& video, std::size_t frames) {
  if (video.rank() != 4) throw ShapeError("resample_frames: expected [T,C,H,W], got " + shape_string(video.shape()));
  const std::size_t T = video.dim(0);
  const std::size_t frame = video.size() / std::max<std::size_t>(T, 1);
  Tensor<float> out(Shape{frames, video.dim(1), video.dim(2), video.dim(3)});
  for (std::size_t i = 0; i < frames; ++i) {
    const std::size_t src = i * T / frames;
    std::copy_n(video.data() + src * frame, frame, out.data() + i * frame);
  }
  return out;
}

namespace {

Tensor<float> crop(const Tensor<float>& video, int pad, int oy, int ox, int h, int w) {
  const std::size_t T = video.dim(0), C = video.dim(1);
  const int H = static_cast<int>(video.dim(2)), W = static_cast<int>(video.dim(3));
  Tensor<float> out(Shape{T, C, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      for (int y = 0; y < h; ++y) {
        const int sy = oy + y - pad;
        if (sy < 0 || sy >= H) continue;
        for (int x = 0; x < w; ++x) {
          const int sx = ox + x - pad;
          if (sx < 0 || sx >= W) continue;
          out.at4(t, c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
              video.at4(t, c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
        }
      }
    }
  }
  return out;
}

}  // namespace

Tensor<float> center_crop(const Tensor<float>& video, int height, int width) {
  if (video.rank() != 4) throw ShapeError("center_crop: expected [T,C,H,W], got " + shape_string(video.shape()));
  const int H = static_cast<int>(video.dim(2)), W = static_cast<int>(video.dim(3));
  if (height > H || width > W || height < 1 || width < 1) {
    throw ShapeError("center_crop: cannot take " + std::to_string(height) + "x" + std::to_string(width) + " from " +
                     shape_string(video.shape()));
  }
  return crop(video, 0, (H - height) / 2, (W - width) / 2, height, width);
}

Tensor<float> augment(const Tensor<float>& video, const AugmentConfig& config, std::mt19937_64& rng) {
  if (video.rank() != 4) throw ShapeError("augment: expected [T,C,H,W], got " + shape_string(video.shape()));
  const std::size_t T = video.dim(0);
  Tensor<float> out = video;
  if (config.temporal_jitter > 0.0 && T > 0) {
    const double t = static_cast<double>(T);
    const auto lo = static_cast<std::size_t>(std::max(1.0, std::ceil((1.0 - config.temporal_jitter) * t - 1e-9)));
    const auto hi = static_cast<std::size_t>(std::floor((1.0 + config.temporal_jitter) * t + 1e-9));
    const std::size_t frames = std::uniform_int_distribution<std::size_t>(lo, std::max(lo, hi))(rng);
    out = resample_frames(out, frames);
  }
  const int H = static_cast<int>(out.dim(2)), W = static_cast<int>(out.dim(3));
  const int h = config.crop_h > 0 ? config.crop_h : H;
  const int w = config.crop_w > 0 ? config.crop_w : W;
  const int canvas_h = H + 2 * config.pad, canvas_w = W + 2 * config.pad;
  if (h > canvas_h || w > canvas_w) {
    throw ShapeError("augment: crop " + std::to_string(h) + "x" + std::to_string(w) + " exceeds canvas " +
                     std::to_string(canvas_h) + "x" + std::to_string(canvas_w));
  }
  if (config.pad > 0 || h != H || w != W) {
    const int oy = std::uniform_int_distribution<int>(0, canvas_h - h)(rng);
    const int ox = std::uniform_int_distribution<int>(0, canvas_w - w)(rng);
    out = crop(out, config.pad, oy, ox, h, w);
  }
  if (config.flip && std::bernoulli_distribution(0.5)(rng)) {
    const std::size_t w_out = out.dim(3);
    for (std::size_t t = 0; t < out.dim(0); ++t) {
      for (std::size_t c = 0; c < out.dim(1); ++c) {
        for (std::size_t y = 0; y < out.dim(2); ++y) {
          float* row = &out.at4(t, c, y, 0);
          std::reverse(row, row + w_out);
        }
      }
    }
  }
  return out;
}

}  // namespace tscm::data

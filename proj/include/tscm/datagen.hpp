#pragma once

// MovingGlyphs: synthetic continuous-gesture videos. Each gloss is a glyph
// shape travelling in one direction; glosses come in pairs sharing a shape
// and moving in opposite directions, so a single frame never tells a pair
// apart and the order of frames does.

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "tscm/gloss.hpp"
#include "tscm/tensor.hpp"

namespace tscm::data {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GlyphGloss {
  int id = 0;                 // 1-based; 0 is the blank
  std::string name;
  int shape = 0;              // index into the glyph bitmaps
  int dx = 0, dy = 0;         // motion per frame, in pixels
  int min_frames = 6, max_frames = 9;
};

struct GenerateConfig {
  int vocab = 8;              // even, >= 4
  int sentences = 200;
  int height = 32;
  int width = 32;
  std::uint64_t seed = 0;
  int min_label = 2, max_label = 5;
  int min_gloss_frames = 6, max_gloss_frames = 9;
  int min_transition = 1, max_transition = 2;
  double noise = 0.0;         // uniform pixel noise amplitude

  void validate() const;
};

std::vector<GlyphGloss> make_vocabulary(const GenerateConfig& config);

/// Frames [frames, 3, H, W] of one gloss starting with the glyph's top-left
/// corner at (x, y); positions wrap around the canvas.
Tensor<float> render_gloss(const GlyphGloss& gloss, int x, int y, int frames, int height, int width);

struct Sample {
  std::string id;
  Tensor<float> video;        // [T, 3, H, W] in [0, 1]
  GlossSequence label;
  std::uint64_t seed = 0;
  std::vector<std::pair<int, int>> spans;   // [begin, end) frames per gloss
};

Sample render_sample(const GenerateConfig& config, const std::vector<GlyphGloss>& vocab, const GlossSequence& label,
                     std::uint64_t seed, std::string id);

/// Writes manifest.jsonl, vocab.txt and samples/*.tensor under dir.
void generate(const GenerateConfig& config, const std::filesystem::path& dir);

struct SampleRef {
  std::string id;
  std::filesystem::path path;   // absolute
  GlossSequence label;
  std::size_t frames = 0;
  std::string split;
};

struct Dataset {
  std::filesystem::path root;
  std::vector<std::string> vocab;   // vocab[0] is the blank
  std::vector<SampleRef> samples;

  std::vector<const SampleRef*> split(const std::string& name) const;
};

Dataset load_dataset(const std::filesystem::path& dir);
Tensor<float> load_video(const SampleRef& ref);

struct AugmentConfig {
  double temporal_jitter = 0.2;   // T' uniform in [(1-j)T, (1+j)T]
  int pad = 4;                    // canvas padding before the random crop
  int crop_h = 0, crop_w = 0;     // 0 keeps the input size
  bool flip = false;              // inverts motion classes on MovingGlyphs
};

/// Resamples time by uniform duplication/deletion to `frames` frames.
Tensor<float> resample_frames(const Tensor<float>& video, std::size_t frames);
Tensor<float> center_crop(const Tensor<float>& video, int height, int width);
Tensor<float> augment(const Tensor<float>& video, const AugmentConfig& config, std::mt19937_64& rng);

}  // namespace tscm::data

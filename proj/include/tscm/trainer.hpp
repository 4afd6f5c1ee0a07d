#pragma once

// Optimisation loop: Adam with decoupled weight decay, step learning-rate
// drops, a per-iteration random gradient stop on Part1, multi-level CTC,
// best-dev checkpointing, and corpus-WER evaluation.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "tscm/ctc.hpp"
#include "tscm/datagen.hpp"
#include "tscm/metrics.hpp"
#include "tscm/network.hpp"

namespace tscm::train {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;   // decoupled: theta -= lr * wd * theta
};

template <class S>
struct AdamState {
  std::vector<Tensor<S>> m;
  std::vector<Tensor<S>> v;
  std::vector<long> steps;   // per parameter, so skipped parameters keep their bias correction

  void ensure(const std::vector<Tensor<S>*>& params) {
    if (m.size() == params.size()) return;
    m.clear();
    v.clear();
    for (const auto* p : params) {
      m.emplace_back(p->shape());
      v.emplace_back(p->shape());
    }
    steps.assign(params.size(), 0);
  }
};

/// Updates params[i] for every i in `active` (all when empty).
template <class S>
void adam_step(const std::vector<Tensor<S>*>& params, const std::vector<const Tensor<S>*>& grads, AdamState<S>& state,
               const AdamConfig& config, double lr, const std::vector<bool>& active = {}) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam: params and grads differ in count");
  state.ensure(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!active.empty() && !active[i]) continue;
    Tensor<S>& p = *params[i];
    const Tensor<S>& g = *grads[i];
    if (g.shape() != p.shape()) throw ShapeError("adam: gradient shape mismatch for parameter " + std::to_string(i));
    const long t = ++state.steps[i];
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = static_cast<double>(g[k]);
      const double mk = config.beta1 * static_cast<double>(m[k]) + (1.0 - config.beta1) * gk;
      const double vk = config.beta2 * static_cast<double>(v[k]) + (1.0 - config.beta2) * gk * gk;
      m[k] = static_cast<S>(mk);
      v[k] = static_cast<S>(vk);
      double theta = static_cast<double>(p[k]);
      theta -= lr * config.weight_decay * theta;
      theta -= lr * (mk / c1) / (std::sqrt(vk / c2) + config.eps);
      p[k] = static_cast<S>(theta);
    }
  }
}

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  int batch = 2;
  int epochs = 15;
  std::vector<int> lr_drops;        // epochs (1-based) at which lr is multiplied by drop_factor
  double drop_factor = 0.2;
  double p_stop = 0.5;
  ctc::CtcConfig ctc{3, {}, 10};
  std::uint64_t seed = 0;
  data::AugmentConfig augment;
  bool augment_enabled = true;
  double time_limit_s = 0.0;        // 0: unlimited; otherwise stop after the epoch that crosses it
  long max_steps = 0;               // 0: unlimited
  bool verbose = false;

  void validate() const;
  double lr_at(int epoch) const;
};

/// Reads a [train] section; keys absent from the document keep defaults.
TrainConfig train_config_from(const ConfigDocument& doc, TrainConfig base = {});

struct Example {
  std::string id;
  Tensor<float> video;
  GlossSequence label;
};

struct StepReport {
  double loss = 0.0;          // mean over feasible examples
  int feasible = 0;
  bool gradient_stopped = false;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double dev_wer = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
  int skipped = 0;
};

struct TrainResult {
  std::vector<EpochLog> history;
  double best_dev_wer = 0.0;
  int best_epoch = 0;
  long steps = 0;
  bool stopped_early = false;
};

class Trainer {
 public:
  Trainer(net::Model<float>& model, TrainConfig config);

  /// One optimisation step on a batch. gate forces the gradient-stop draw
  /// (-1 draws from p_stop, 0 off, 1 on).
  StepReport step(const std::vector<Example>& batch, int gate = -1);

  /// Batch-mean multi-level CTC loss with the current weights, without
  /// updating anything. Infeasible examples are left out.
  double loss(const std::vector<Example>& batch, bool gradient_stopped) const;

  const TrainConfig& config() const noexcept { return config_; }
  net::Model<float>& model() noexcept { return model_; }
  long steps() const noexcept { return steps_; }
  void set_epoch(int epoch) { epoch_ = epoch; }

 private:
  net::Model<float>& model_;
  TrainConfig config_;
  AdamState<float> adam_;
  std::mt19937_64 gate_rng_;
  long steps_ = 0;
  int epoch_ = 1;
};

struct EvalResult {
  double wer = 0.0;
  metrics::EditOps ops;
  std::vector<metrics::ScoredPair> pairs;
};

enum class Decoder { greedy, beam };

/// Center-crops to the model resolution, decodes the deepest head, and pools
/// WER over the split.
EvalResult evaluate(const net::Model<float>& model, const data::Dataset& dataset, const std::string& split,
                    Decoder decoder = Decoder::beam, int beam_width = 10);

/// Full loop over the train split with dev selection. With out_dir set, writes
/// metrics.csv, best/ and last/ checkpoints there.
TrainResult train(net::Model<float>& model, const data::Dataset& dataset, const TrainConfig& config,
                  const std::filesystem::path& out_dir = {},
                  const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace tscm::train

#include "tscm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

namespace tscm::train {

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("lr must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(drop_factor > 0.0 && drop_factor < 1.0)) throw ConfigError("drop_factor must lie in (0, 1)");
  if (!(p_stop >= 0.0 && p_stop <= 1.0)) throw ConfigError("p_stop must lie in [0, 1]");
  if (augment.temporal_jitter < 0.0 || augment.temporal_jitter >= 1.0) {
    throw ConfigError("temporal_jitter must lie in [0, 1)");
  }
  if (augment.pad < 0) throw ConfigError("pad must be >= 0");
  try {
    ctc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

double TrainConfig::lr_at(int epoch) const {
  double rate = lr;
  for (int d : lr_drops) {
    if (epoch >= d) rate *= drop_factor;
  }
  return rate;
}

TrainConfig train_config_from(const ConfigDocument& doc, TrainConfig base) {
  const ConfigSection* t = doc.first("train");
  if (t == nullptr) return base;
  base.lr = t->get_double_or("lr", base.lr);
  base.weight_decay = t->get_double_or("weight_decay", base.weight_decay);
  base.batch = static_cast<int>(t->get_int_or("batch", base.batch));
  base.epochs = static_cast<int>(t->get_int_or("epochs", base.epochs));
  if (t->has("lr_drops")) {
    base.lr_drops.clear();
    std::stringstream ss(t->get("lr_drops"));
    for (std::string item; std::getline(ss, item, ',');) {
      if (item.find_first_not_of(" \t") == std::string::npos) continue;
      base.lr_drops.push_back(static_cast<int>(parse_long(item, "train.lr_drops")));
    }
  }
  base.drop_factor = t->get_double_or("drop_factor", base.drop_factor);
  base.p_stop = t->get_double_or("p_stop", base.p_stop);
  base.ctc.levels = static_cast<int>(t->get_int_or("ctc_levels", base.ctc.levels));
  base.ctc.beam_width = static_cast<int>(t->get_int_or("beam_width", base.ctc.beam_width));
  base.seed = static_cast<std::uint64_t>(t->get_int_or("seed", static_cast<long>(base.seed)));
  base.augment.temporal_jitter = t->get_double_or("temporal_jitter", base.augment.temporal_jitter);
  base.augment.pad = static_cast<int>(t->get_int_or("pad", base.augment.pad));
  base.augment.flip = t->get_int_or("flip", base.augment.flip ? 1 : 0) != 0;
  base.augment_enabled = t->get_int_or("augment", base.augment_enabled ? 1 : 0) != 0;
  base.time_limit_s = t->get_double_or("time_limit", base.time_limit_s);
  base.max_steps = t->get_int_or("max_steps", base.max_steps);
  base.validate();
  return base;
}

Trainer::Trainer(net::Model<float>& model, TrainConfig config)
    : model_(model), config_(std::move(config)), gate_rng_(config_.seed ^ 0x5bd1e995ULL) {
  config_.validate();
  if (static_cast<std::size_t>(config_.ctc.levels) > model_.heads().size()) {
    throw ConfigError("ctc_levels=" + std::to_string(config_.ctc.levels) + " but the network has " +
                      std::to_string(model_.heads().size()) + " heads");
  }
}

namespace {

std::string describe_heads(const std::vector<Var<float>>& heads) {
  std::string out;
  for (std::size_t h = 0; h < heads.size(); ++h) {
    out += " head" + std::to_string(h) + "=" + shape_string(heads[h].shape()) +
           (all_finite(heads[h].value()) ? " finite" : " NON-FINITE");
  }
  return out;
}

}  // namespace

StepReport Trainer::step(const std::vector<Example>& batch, int gate) {
  StepReport report;
  report.gradient_stopped = gate == 1 || (gate < 0 && std::bernoulli_distribution(config_.p_stop)(gate_rng_));

  auto params = model_.parameters();
  for (auto& p : params) p.var.zero_grad();

  net::ForwardOptions options;
  options.training = true;
  options.stop_part1_gradient = report.gradient_stopped;
  Var<float> total;
  double loss_sum = 0.0;
  for (const auto& ex : batch) {
    auto heads = model_.forward(Var<float>::constant(ex.video), options);
    Var<float> loss = ctc::multilevel_ctc(heads, ex.label, config_.ctc);
    const double value = static_cast<double>(loss.value()[0]);
    if (std::isnan(value) || (std::isinf(value) && value < 0)) {
      throw TrainError("non-finite loss " + std::to_string(value) + " at step " + std::to_string(steps_ + 1) +
                       " on sample " + ex.id + " (T=" + std::to_string(ex.video.dim(0)) +
                       ", label length " + std::to_string(ex.label.size()) + ");" + describe_heads(heads));
    }
    if (std::isinf(value)) continue;   // label does not fit the output frames
    ++report.feasible;
    loss_sum += value;
    total = total.defined() ? ops::add(total, loss) : loss;
  }
  if (report.feasible == 0) return report;
  report.loss = loss_sum / report.feasible;

  total = ops::scale(total, 1.0f / static_cast<float>(report.feasible));
  backward(total);

  std::vector<Tensor<float>*> values;
  std::vector<const Tensor<float>*> grads;
  std::vector<bool> active;
  Tensor<float> zero;
  for (auto& p : params) {
    values.push_back(&p.var.mutable_value());
    const bool has = p.var.has_grad();
    grads.push_back(has ? &p.var.node()->grad : &p.var.value());
    active.push_back(has);
    if (has && !all_finite(p.var.node()->grad)) {
      throw TrainError("non-finite gradient for " + p.name + " at step " + std::to_string(steps_ + 1));
    }
  }
  AdamConfig adam;
  adam.weight_decay = config_.weight_decay;
  adam_step(values, grads, adam_, adam, config_.lr_at(epoch_), active);
  for (auto& p : params) p.var.zero_grad();
  ++steps_;
  return report;
}

double Trainer::loss(const std::vector<Example>& batch, bool gradient_stopped) const {
  NoGradGuard guard;
  net::ForwardOptions options;
  options.training = true;
  options.stop_part1_gradient = gradient_stopped;
  options.update_stats = false;
  double sum = 0.0;
  int feasible = 0;
  for (const auto& ex : batch) {
    const double value = ctc::multilevel_ctc(model_.forward(Var<float>::constant(ex.video), options), ex.label,
                                             config_.ctc).value()[0];
    if (std::isinf(value)) continue;
    sum += value;
    ++feasible;
  }
  return feasible ? sum / feasible : std::numeric_limits<double>::infinity();
}

namespace {

Tensor<float> fit_resolution(const Tensor<float>& video, const net::NetworkSpec& spec) {
  if (video.rank() == 4 && video.dim(2) == static_cast<std::size_t>(spec.input_h) &&
      video.dim(3) == static_cast<std::size_t>(spec.input_w)) {
    return video;
  }
  return data::center_crop(video, spec.input_h, spec.input_w);
}

}  // namespace

EvalResult evaluate(const net::Model<float>& model, const data::Dataset& dataset, const std::string& split,
                    Decoder decoder, int beam_width) {
  const auto refs = dataset.split(split);
  if (refs.empty()) throw TrainError("split '" + split + "' is empty");
  EvalResult res;
  for (const auto* ref : refs) {
    const Tensor<float> video = fit_resolution(data::load_video(*ref), model.spec());
    const auto heads = model.infer(video);
    const Tensor<float>& deepest = heads.back();
    GlossSequence hyp = decoder == Decoder::beam ? ctc::beam_decode(deepest, beam_width) : ctc::greedy_decode(deepest);
    res.pairs.push_back({ref->id, ref->label, std::move(hyp)});
  }
  const auto w = metrics::corpus_wer(res.pairs);
  res.wer = w.percent;
  res.ops = w.ops;
  return res;
}

TrainResult train(net::Model<float>& model, const data::Dataset& dataset, const TrainConfig& config,
                  const std::filesystem::path& out_dir, const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  const auto train_refs = dataset.split("train");
  if (train_refs.empty()) throw TrainError("training split is empty");
  if (dataset.split("dev").empty()) throw TrainError("dev split is empty");
  const int vocab = static_cast<int>(dataset.vocab.size());
  for (const auto& h : model.spec().heads) {
    if (h.vocab != vocab) {
      throw TrainError("network heads emit " + std::to_string(h.vocab) + " classes but the dataset vocabulary has " +
                       std::to_string(vocab) + " (including the blank)");
    }
  }

  std::vector<Example> pool;
  for (const auto* ref : train_refs) {
    pool.push_back({ref->id, fit_resolution(data::load_video(*ref), model.spec()), ref->label});
  }

  std::ofstream csv;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    csv.open(out_dir / "metrics.csv");
    if (!csv) throw TrainError("cannot write " + (out_dir / "metrics.csv").string());
    csv << "epoch,loss,dev_wer,lr,seconds,skipped\n";
  }

  Trainer trainer(model, config);
  std::mt19937_64 rng(config.seed);
  TrainResult result;
  result.best_dev_wer = std::numeric_limits<double>::infinity();
  const auto started = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(pool.size());

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    trainer.set_epoch(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    log.lr = config.lr_at(epoch);
    double loss_sum = 0.0;
    int counted = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch)) {
      std::vector<Example> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + static_cast<std::size_t>(config.batch)); ++k) {
        const Example& src = pool[order[k]];
        batch.push_back({src.id, config.augment_enabled ? data::augment(src.video, config.augment, rng) : src.video,
                         src.label});
      }
      StepReport rep;
      try {
        rep = trainer.step(batch);
      } catch (const TrainError& e) {
        if (!out_dir.empty()) {
          std::ofstream dump(out_dir / "diagnostic.txt");
          dump << "epoch " << epoch << "\n" << e.what() << "\n";
        }
        throw;
      }
      loss_sum += rep.loss * rep.feasible;
      counted += rep.feasible;
      log.skipped += static_cast<int>(batch.size()) - rep.feasible;
      if (config.max_steps > 0 && trainer.steps() >= config.max_steps) break;
    }
    log.loss = counted ? loss_sum / counted : std::numeric_limits<double>::infinity();
    log.dev_wer = evaluate(model, dataset, "dev", Decoder::greedy).wer;
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    result.history.push_back(log);
    if (csv) {
      csv << log.epoch << ',' << log.loss << ',' << log.dev_wer << ',' << log.lr << ',' << log.seconds << ','
          << log.skipped << '\n';
      csv.flush();
    }
    if (config.verbose) {
      std::cerr << "epoch " << log.epoch << " loss " << log.loss << " dev_wer " << log.dev_wer << " ("
                << log.seconds << " s)\n";
    }
    if (on_epoch) on_epoch(log);
    if (log.dev_wer < result.best_dev_wer) {
      result.best_dev_wer = log.dev_wer;
      result.best_epoch = epoch;
      if (!out_dir.empty()) net::save_checkpoint(out_dir / "best", model);
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (config.max_steps > 0 && trainer.steps() >= config.max_steps) {
      result.stopped_early = epoch < config.epochs;
      break;
    }
    if (config.time_limit_s > 0.0 && elapsed >= config.time_limit_s) {
      result.stopped_early = epoch < config.epochs;
      break;
    }
  }
  result.steps = trainer.steps();
  if (!out_dir.empty()) net::save_checkpoint(out_dir / "last", model);
  return result;
}

}  // namespace tscm::train

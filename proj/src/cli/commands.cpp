#include "tscm/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tscm/ablation.hpp"
#include "tscm/costmodel.hpp"
#include "tscm/datagen.hpp"
#include "tscm/kernels.hpp"
#include "tscm/trainer.hpp"

namespace tscm::cli {

namespace {

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Globals {
  std::uint64_t seed = 0;
  std::string out_dir = "tscm-out";
  std::string config;
};

struct Resolution {
  int h = 0, w = 0;
};

Resolution parse_resolution(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) throw UsageError("resolution must look like HxW, got '" + text + "'");
  Resolution r;
  try {
    r.h = static_cast<int>(parse_long(text.substr(0, x), "height"));
    r.w = static_cast<int>(parse_long(text.substr(x + 1), "width"));
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  if (r.h < 1 || r.w < 1) throw UsageError("resolution must be positive, got '" + text + "'");
  return r;
}

ConfigDocument load_global_config(const Globals& g) {
  if (g.config.empty()) return {};
  if (!std::filesystem::exists(g.config)) throw UsageError("config file not found: " + g.config);
  return load_config(g.config);
}

struct NetworkChoice {
  std::string preset;
  std::string spec_file;
  std::string temporal;
  std::string mode;
  int span = 0;

  void add_to(CLI::App* cmd, const std::string& default_preset) {
    preset = default_preset;
    cmd->add_option("--preset", preset, "Network preset")->capture_default_str();
    cmd->add_option("--spec", spec_file, "Network spec file (overrides --preset)");
    cmd->add_option("--temporal", temporal, "Temporal variant: tscm, plain2d, 2+1d, 3d");
    cmd->add_option("--mode", mode, "TSCM mode: crossover, superposition, random_crossover, tsm, identity");
    cmd->add_option("--span", span, "TSCM span n (odd, >= 3)");
  }

  net::NetworkSpec resolve(const ConfigDocument& doc) const {
    try {
      return build(doc);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }

 private:
  net::NetworkSpec build(const ConfigDocument& doc) const {
    net::NetworkSpec spec;
    if (!spec_file.empty()) {
      spec = net::load_spec(spec_file);
    } else if (doc.first("network") != nullptr || !doc.all("stage").empty()) {
      spec = net::spec_from_config(doc);
    } else {
      spec = net::preset(preset);
    }
    if (!temporal.empty()) spec.temporal = net::parse_variant(temporal);
    if (!mode.empty()) spec.tscm.mode = shift::parse_mode(mode);
    if (span != 0) spec.tscm.span = span;
    spec.validate();
    return spec;
  }
};

std::filesystem::path out_path(const Globals& g) {
  std::filesystem::path p(g.out_dir);
  std::filesystem::create_directories(p);
  return p;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

// ---- generate ---------------------------------------------------------------

int cmd_generate(const Globals& g, const data::GenerateConfig& base, const std::string& input, std::ostream& out) {
  data::GenerateConfig cfg = base;
  const ConfigDocument doc = load_global_config(g);
  if (const auto* s = doc.first("generate")) {
    cfg.vocab = static_cast<int>(s->get_int_or("vocab", cfg.vocab));
    cfg.sentences = static_cast<int>(s->get_int_or("sentences", cfg.sentences));
    cfg.noise = s->get_double_or("noise", cfg.noise);
  }
  const Resolution r = parse_resolution(input);
  cfg.height = r.h;
  cfg.width = r.w;
  cfg.seed = g.seed;
  try {
    cfg.validate();
  } catch (const data::DataError& e) {
    throw UsageError(e.what());
  }
  const auto dir = out_path(g);
  data::generate(cfg, dir);
  const auto ds = data::load_dataset(dir);
  out << "generated " << ds.samples.size() << " sentences (train " << ds.split("train").size() << ", dev "
      << ds.split("dev").size() << ", test " << ds.split("test").size() << ") over " << cfg.vocab << " glosses in "
      << dir.string() << '\n';
  return kExitOk;
}

// ---- train / eval -------------------------------------------------------------

struct TrainFlags {
  std::string data;
  int epochs = 0;
  double lr = -1, weight_decay = -1, p_stop = -1, time_limit = -1;
  int batch = 0, ctc_levels = 0;
  long max_steps = -1;
  bool no_augment = false;
  bool verbose = false;
  std::string input;
};

train::TrainConfig resolve_train_config(const Globals& g, const ConfigDocument& doc, const TrainFlags& f) {
  train::TrainConfig cfg;
  cfg = train::train_config_from(doc, cfg);
  if (f.epochs > 0) cfg.epochs = f.epochs;
  if (f.lr >= 0) cfg.lr = f.lr;
  if (f.weight_decay >= 0) cfg.weight_decay = f.weight_decay;
  if (f.p_stop >= 0) cfg.p_stop = f.p_stop;
  if (f.time_limit >= 0) cfg.time_limit_s = f.time_limit;
  if (f.batch > 0) cfg.batch = f.batch;
  if (f.ctc_levels > 0) cfg.ctc.levels = f.ctc_levels;
  if (f.max_steps >= 0) cfg.max_steps = f.max_steps;
  if (f.no_augment) cfg.augment_enabled = false;
  cfg.verbose = f.verbose;
  cfg.seed = g.seed;
  cfg.validate();
  return cfg;
}

data::Dataset open_dataset(const std::string& dir) {
  if (dir.empty()) throw UsageError("--data is required");
  return data::load_dataset(dir);
}

int cmd_train(const Globals& g, const NetworkChoice& choice, const TrainFlags& flags, std::ostream& out) {
  const ConfigDocument doc = load_global_config(g);
  net::NetworkSpec spec = choice.resolve(doc);
  if (!flags.input.empty()) {
    const Resolution r = parse_resolution(flags.input);
    spec.input_h = r.h;
    spec.input_w = r.w;
  }
  const train::TrainConfig cfg = resolve_train_config(g, doc, flags);
  const data::Dataset ds = open_dataset(flags.data);
  net::set_vocab(spec, static_cast<int>(ds.vocab.size()));
  net::Model<float> model(spec, g.seed);
  const auto dir = out_path(g);
  write_text(dir / "spec.txt", net::to_text(spec));
  const auto res = train::train(model, ds, cfg, dir, [&](const train::EpochLog& e) {
    out << "epoch " << e.epoch << "  loss " << std::fixed << std::setprecision(4) << e.loss << "  dev WER "
        << std::setprecision(2) << e.dev_wer << "%  (" << std::setprecision(1) << e.seconds << " s)\n"
        << std::defaultfloat;
  });
  nlohmann::json j;
  j["network"] = spec.name;
  j["temporal"] = net::variant_name(spec.temporal);
  j["tscm_mode"] = shift::mode_name(spec.tscm.mode);
  j["params"] = model.parameter_count();
  j["best_dev_wer"] = res.best_dev_wer;
  j["best_epoch"] = res.best_epoch;
  j["steps"] = res.steps;
  j["stopped_early"] = res.stopped_early;
  auto& hist = j["history"] = nlohmann::json::array();
  for (const auto& e : res.history) {
    hist.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"dev_wer", e.dev_wer}, {"lr", e.lr}, {"seconds", e.seconds}});
  }
  write_text(dir / "train.json", j.dump(2) + "\n");
  out << "best dev WER " << std::fixed << std::setprecision(2) << res.best_dev_wer << "% at epoch " << res.best_epoch
      << "; checkpoint in " << (dir / "best").string() << '\n';
  return kExitOk;
}

int cmd_eval(const Globals& g, const std::string& checkpoint, const std::string& data_dir, const std::string& split,
             const std::string& decoder, int beam, std::ostream& out) {
  if (checkpoint.empty()) throw UsageError("--checkpoint is required");
  if (decoder != "beam" && decoder != "greedy") throw UsageError("--decoder must be beam or greedy");
  const data::Dataset ds = open_dataset(data_dir);
  const net::Model<float> model = net::load_checkpoint(checkpoint);
  const auto res = train::evaluate(model, ds, split, decoder == "beam" ? train::Decoder::beam : train::Decoder::greedy,
                                   beam);
  const auto dir = out_path(g);
  {
    std::ofstream csv(dir / "report.csv");
    metrics::write_report_csv(csv, res.pairs, ds.vocab);
  }
  nlohmann::json j = {{"split", split},
                      {"decoder", decoder},
                      {"beam_width", beam},
                      {"sentences", res.pairs.size()},
                      {"wer", res.wer},
                      {"ins", res.ops.ins},
                      {"del", res.ops.del},
                      {"sub", res.ops.sub},
                      {"ref_words", res.ops.ref_words}};
  write_text(dir / "eval.json", j.dump(2) + "\n");
  out << "WER " << std::fixed << std::setprecision(2) << res.wer << "% on " << split << " (" << res.pairs.size()
      << " sentences, " << res.ops.ref_words << " words: " << res.ops.sub << " sub, " << res.ops.del << " del, "
      << res.ops.ins << " ins)\n";
  return kExitOk;
}

// ---- analyze / compare / bench -----------------------------------------------

int cmd_analyze(const Globals& g, const NetworkChoice& choice, const std::string& input, long frames, int vocab,
                std::ostream& out) {
  if (frames < 1) throw UsageError("--frames must be >= 1");
  net::NetworkSpec spec = choice.resolve(load_global_config(g));
  if (vocab > 0) net::set_vocab(spec, vocab);
  Resolution r{spec.input_h, spec.input_w};
  if (!input.empty()) r = parse_resolution(input);
  const auto report = cost::analyze(spec, r.h, r.w, static_cast<std::size_t>(frames));
  const auto dir = out_path(g);
  {
    std::ofstream j(dir / "cost.json");
    cost::write_json(j, report);
    std::ofstream c(dir / "cost_layers.csv");
    cost::write_layers_csv(c, report);
  }
  out << report.network << " (" << report.temporal << ") at 3x" << r.h << "x" << r.w << ", T=" << frames << ": params "
      << std::fixed << std::setprecision(3) << report.params / 1e6 << "M, memory " << std::setprecision(2)
      << report.memory_mib() << " MiB, compute " << report.gflops() << " GFlops\n";
  return kExitOk;
}

int cmd_compare(const Globals& g, const NetworkChoice& choice, const std::string& input, long frames, int vocab,
                std::ostream& out) {
  if (frames < 1) throw UsageError("--frames must be >= 1");
  net::NetworkSpec base = choice.resolve(load_global_config(g));
  if (vocab > 0) net::set_vocab(base, vocab);
  Resolution r{base.input_h, base.input_w};
  if (!input.empty()) r = parse_resolution(input);
  std::vector<net::NetworkSpec> specs;
  for (auto v : {net::TemporalVariant::plain2d, net::TemporalVariant::tscm, net::TemporalVariant::conv2plus1d,
                 net::TemporalVariant::conv3d}) {
    net::NetworkSpec s = base;
    s.temporal = v;
    specs.push_back(s);
  }
  const auto reports = cost::compare(specs, r.h, r.w, static_cast<std::size_t>(frames));
  const auto dir = out_path(g);
  {
    std::ofstream csv(dir / "compare.csv");
    cost::write_compare_csv(csv, reports);
  }
  cost::write_compare_csv(out, reports);
  return kExitOk;
}

int cmd_bench(const Globals& g, const NetworkChoice& choice, long frames, int repeats, const std::string& variants,
              std::ostream& out) {
  if (frames < 1) throw UsageError("--frames must be >= 1");
  if (repeats < 1) throw UsageError("--repeats must be >= 1");
  const net::NetworkSpec base = choice.resolve(load_global_config(g));
  std::vector<std::string> names;
  std::stringstream ss(variants);
  for (std::string v; std::getline(ss, v, ',');) {
    if (!v.empty()) names.push_back(v);
  }
  if (names.empty()) throw UsageError("--variants is empty");
  const auto dir = out_path(g);
  std::ofstream csv(dir / "bench.csv");
  csv << "variant,frames,repeats,median_ms,mean_ms\n";
  nlohmann::json j = nlohmann::json::array();
  std::vector<double> medians;
  for (const auto& name : names) {
    net::NetworkSpec spec = base;
    spec.temporal = net::parse_variant(name);
    const net::Model<float> model(spec, g.seed);
    const auto res = cost::bench_inference(model, static_cast<std::size_t>(frames), repeats, g.seed);
    medians.push_back(res.median_ms);
    csv << net::variant_name(spec.temporal) << ',' << frames << ',' << repeats << ',' << res.median_ms << ','
        << res.mean_ms << '\n';
    j.push_back({{"variant", net::variant_name(spec.temporal)},
                 {"frames", frames},
                 {"repeats", repeats},
                 {"median_ms", res.median_ms},
                 {"mean_ms", res.mean_ms},
                 {"samples_ms", res.samples_ms}});
    out << std::left << std::setw(8) << net::variant_name(spec.temporal) << " median " << std::fixed
        << std::setprecision(3) << res.median_ms << " ms, mean " << res.mean_ms << " ms over " << repeats
        << " runs\n";
  }
  write_text(dir / "bench.json", j.dump(2) + "\n");
  const bool ordered = std::is_sorted(medians.begin(), medians.end());
  out << "latency ordering " << variants << ": " << (ordered ? "as listed" : "differs from listed order")
      << " (informational, isa " << kernels::isa_name(kernels::active_isa()) << ")\n";
  return kExitOk;
}

// ---- ablate -------------------------------------------------------------------

int cmd_ablate(const Globals& g, const std::string& plan_path, const std::string& axis, const std::string& values,
               bool all, const TrainFlags& flags, int parallel, std::ostream& out) {
  ConfigDocument doc = load_global_config(g);
  if (!plan_path.empty()) {
    if (!std::filesystem::exists(plan_path)) throw UsageError("plan file not found: " + plan_path);
    const ConfigDocument plan = load_config(plan_path);
    doc.sections.insert(doc.sections.end(), plan.sections.begin(), plan.sections.end());
  }
  const train::TrainConfig cfg = resolve_train_config(g, doc, flags);
  std::vector<ablate::AblationPlan> plans;
  if (all) {
    for (auto a : ablate::all_axes()) {
      ablate::AblationPlan p;
      p.axis = a;
      p.values = ablate::standard_values(a);
      p.train = cfg;
      plans.push_back(p);
    }
  } else if (!axis.empty()) {
    ablate::AblationPlan p;
    p.axis = ablate::parse_axis(axis);
    p.values = ablate::standard_values(p.axis);
    if (!values.empty()) {
      p.values.clear();
      std::stringstream ss(values);
      for (std::string v; std::getline(ss, v, ',');) {
        if (!v.empty()) p.values.push_back(v);
      }
    }
    p.train = cfg;
    p.validate();
    plans.push_back(p);
  } else {
    plans = ablate::plans_from_config(doc, cfg);
  }
  if (const auto* n = doc.first("ablate")) {
    for (auto& p : plans) p.preset = n->get_or("preset", p.preset);
  }
  for (const auto& p : plans) p.validate();

  const data::Dataset ds = open_dataset(flags.data);
  const auto dir = out_path(g);
  const auto results = ablate::run(plans, ds, dir, parallel, g.seed, [&](const ablate::RunResult& r) {
    out << r.axis << "=" << r.value << ": best dev WER " << std::fixed << std::setprecision(2) << r.best_dev_wer
        << "% (epoch " << r.best_epoch << "), test WER " << r.test_wer << "%, " << std::setprecision(1) << r.seconds
        << " s\n"
        << std::defaultfloat;
  });
  out << results.size() << " runs; tables in " << (dir / "ablation.csv").string() << '\n';
  return kExitOk;
}

// ---- equivcheck -----------------------------------------------------------------

Tensor<double> naive_shift(const Tensor<double>& x, const shift::ChannelOffsetMap& map) {
  Tensor<double> out(x.shape());
  const long T = static_cast<long>(x.dim(0));
  for (long t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < x.dim(1); ++c) {
      const long src = t + map.offsets[c];
      if (src < 0 || src >= T) continue;
      for (std::size_t h = 0; h < x.dim(2); ++h) {
        for (std::size_t w = 0; w < x.dim(3); ++w) {
          out.at4(static_cast<std::size_t>(t), c, h, w) = x.at4(static_cast<std::size_t>(src), c, h, w);
        }
      }
    }
  }
  return out;
}

int cmd_equivcheck(const Globals& g, int trials, bool corrupt, std::ostream& out, std::ostream& err) {
  if (trials < 0) throw UsageError("--trials must be >= 0");
  if (trials == 0) err << "warning: --trials 0 checks nothing\n";
  std::mt19937_64 rng(g.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto dim = [&](int lo, int hi) { return static_cast<std::size_t>(std::uniform_int_distribution<int>(lo, hi)(rng)); };

  double max_diff = 0.0;
  int equiv_fail = 0;
  for (int i = 0; i < trials; ++i) {
    const std::size_t T = dim(3, 12), C = dim(1, 6), Co = dim(1, 4);
    Tensor<double> x(Shape{T, C}), w(Shape{Co, C, 3});
    for (auto& v : x.values()) v = u(rng);
    for (auto& v : w.values()) v = u(rng);
    const auto [conv, stacked] = shift::stacked_equivalence_reference(x, w, corrupt);
    double d = 0.0;
    for (std::size_t k = 0; k < conv.size(); ++k) d = std::max(d, std::abs(conv[k] - stacked[k]));
    max_diff = std::max(max_diff, d);
    if (!(d < 1e-10)) ++equiv_fail;
  }

  const shift::Mode modes[] = {shift::Mode::crossover, shift::Mode::superposition, shift::Mode::random_crossover,
                               shift::Mode::tsm, shift::Mode::identity};
  int oracle_fail = 0;
  for (int i = 0; i < trials; ++i) {
    shift::TscmSpec spec;
    spec.mode = modes[static_cast<std::size_t>(i) % 5];
    spec.span = static_cast<int>(2 * dim(1, 3) + 1);
    spec.seed = rng();
    const std::size_t T = dim(1, 8), C = dim(1, 16), H = dim(1, 4), W = dim(1, 4);
    Tensor<double> x(Shape{T, C, H, W});
    for (auto& v : x.values()) v = u(rng);
    const auto map = shift::build_offset_map(spec, C);
    if (!(shift::apply(x, map) == naive_shift(x, map))) ++oracle_fail;
  }

  const bool pass = equiv_fail == 0 && oracle_fail == 0;
  nlohmann::json j = {{"trials", trials},
                      {"corrupt_arrangement", corrupt},
                      {"equivalence_max_abs_diff", max_diff},
                      {"equivalence_failures", equiv_fail},
                      {"tscm_oracle_failures", oracle_fail},
                      {"tolerance", 1e-10},
                      {"pass", pass}};
  write_text(out_path(g) / "equivcheck.json", j.dump(2) + "\n");
  out << "stacked-channel equivalence: " << (trials - equiv_fail) << "/" << trials << " trials within 1e-10 (max |diff| "
      << std::scientific << std::setprecision(3) << max_diff << std::defaultfloat << ")"
      << (corrupt ? " [reversed W' arrangement]" : "") << '\n';
  out << "tscm apply vs per-element oracle: " << (trials - oracle_fail) << "/" << trials << " bit-exact\n";
  out << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? kExitOk : kExitFailure;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"TSCM toolkit: temporal superimposed crossover networks, CTC training and cost analysis", "tscm"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed for every stochastic step")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Directory for outputs")->capture_default_str();
  app.add_option("--config", g.config, "Config file with [network]/[stage]/[train]/[generate]/[ablate] sections");

  // generate
  auto* gen = app.add_subcommand("generate", "Render a MovingGlyphs dataset");
  data::GenerateConfig gen_cfg;
  std::string gen_input = "32x32";
  gen->add_option("--vocab", gen_cfg.vocab, "Glosses (even, >= 4)")->capture_default_str();
  gen->add_option("--sentences", gen_cfg.sentences, "Sentences to render")->capture_default_str();
  gen->add_option("--input", gen_input, "Frame resolution HxW")->capture_default_str();
  gen->add_option("--noise", gen_cfg.noise, "Uniform pixel noise amplitude")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Train a network on a dataset");
  NetworkChoice tr_net;
  tr_net.add_to(tr, "resnett34-desk");
  TrainFlags tf;
  auto add_train_flags = [](CLI::App* cmd, TrainFlags& f) {
    cmd->add_option("--data", f.data, "Dataset directory (manifest.jsonl)");
    cmd->add_option("--epochs", f.epochs, "Epochs");
    cmd->add_option("--lr", f.lr, "Initial learning rate");
    cmd->add_option("--weight-decay", f.weight_decay, "Decoupled weight decay");
    cmd->add_option("--batch", f.batch, "Sentences per step");
    cmd->add_option("--p-stop", f.p_stop, "Probability of stopping Part1 gradients per step");
    cmd->add_option("--ctc-levels", f.ctc_levels, "Heads contributing CTC loss, deepest first");
    cmd->add_option("--time-limit", f.time_limit, "Stop after the epoch that exceeds this many seconds");
    cmd->add_option("--max-steps", f.max_steps, "Stop after this many optimisation steps");
    cmd->add_flag("--no-augment", f.no_augment, "Disable temporal and crop augmentation");
    cmd->add_flag("--verbose", f.verbose, "Log progress to stderr");
  };
  add_train_flags(tr, tf);
  tr->add_option("--input", tf.input, "Network input resolution HxW");

  // eval
  auto* ev = app.add_subcommand("eval", "Decode a split with a checkpoint and score WER");
  std::string ev_ckpt, ev_data, ev_split = "test", ev_decoder = "beam";
  int ev_beam = 10;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint directory");
  ev->add_option("--data", ev_data, "Dataset directory");
  ev->add_option("--split", ev_split, "train, dev or test")->capture_default_str();
  ev->add_option("--decoder", ev_decoder, "beam or greedy")->capture_default_str();
  ev->add_option("--beam", ev_beam, "Beam width")->capture_default_str()->check(CLI::PositiveNumber);

  // analyze
  auto* an = app.add_subcommand("analyze", "Parameter, memory and MAC counts of a network");
  NetworkChoice an_net;
  an_net.add_to(an, "resnett34");
  std::string an_input;
  long an_frames = 200;
  int an_vocab = 0;
  an->add_option("--input", an_input, "Input resolution HxW (default: the spec's)");
  an->add_option("--frames", an_frames, "Input frames T")->capture_default_str();
  an->add_option("--vocab", an_vocab, "Head classes including the blank (default: the spec's)");

  // compare
  auto* cmp = app.add_subcommand("compare", "2D / TSCM+2D / 2+1D / 3D cost table");
  NetworkChoice cmp_net;
  cmp_net.add_to(cmp, "resnett34");
  std::string cmp_input;
  long cmp_frames = 200;
  int cmp_vocab = 0;
  cmp->add_option("--input", cmp_input, "Input resolution HxW (default: the spec's)");
  cmp->add_option("--frames", cmp_frames, "Input frames T")->capture_default_str();
  cmp->add_option("--vocab", cmp_vocab, "Head classes including the blank");

  // bench
  auto* bn = app.add_subcommand("bench", "Median eval-forward latency per temporal variant");
  NetworkChoice bn_net;
  bn_net.add_to(bn, "resnett34-desk");
  long bn_frames = 16;
  int bn_repeats = 20;
  std::string bn_variants = "plain2d,tscm,2+1d,3d";
  bn->add_option("--frames", bn_frames, "Input frames T")->capture_default_str();
  bn->add_option("--repeats", bn_repeats, "Timed forwards per variant")->capture_default_str();
  bn->add_option("--variants", bn_variants, "Comma-separated temporal variants")->capture_default_str();

  // ablate
  auto* ab = app.add_subcommand("ablate", "Train and evaluate one value per run along ablation axes");
  std::string ab_plan, ab_axis, ab_values;
  bool ab_all = false;
  int ab_parallel = 1;
  TrainFlags ab_flags;
  ab->add_option("--plan", ab_plan, "Plan file with [ablate] sections (axis, values, preset) and [train]");
  ab->add_option("--axis", ab_axis,
                 "resblockt_count, model_size, superposition, channel_span, temporal_pools, ctc_levels");
  ab->add_option("--values", ab_values, "Comma-separated values (default: the standard list)");
  ab->add_flag("--all", ab_all, "Every axis with its standard values");
  ab->add_option("--parallel", ab_parallel, "Concurrent runs")->capture_default_str()->check(CLI::PositiveNumber);
  add_train_flags(ab, ab_flags);

  // equivcheck
  auto* eq = app.add_subcommand("equivcheck", "Check the stacked-channel identity and the TSCM remap oracle");
  int eq_trials = 100;
  bool eq_corrupt = false;
  eq->add_option("--trials", eq_trials, "Randomised trials")->capture_default_str();
  eq->add_flag("--corrupt", eq_corrupt, "Negative control: reverse the W' block order");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return cmd_generate(g, gen_cfg, gen_input, out);
    if (*tr) return cmd_train(g, tr_net, tf, out);
    if (*ev) return cmd_eval(g, ev_ckpt, ev_data, ev_split, ev_decoder, ev_beam, out);
    if (*an) return cmd_analyze(g, an_net, an_input, an_frames, an_vocab, out);
    if (*cmp) return cmd_compare(g, cmp_net, cmp_input, cmp_frames, cmp_vocab, out);
    if (*bn) return cmd_bench(g, bn_net, bn_frames, bn_repeats, bn_variants, out);
    if (*ab) return cmd_ablate(g, ab_plan, ab_axis, ab_values, ab_all, ab_flags, ab_parallel, out);
    if (*eq) return cmd_equivcheck(g, eq_trials, eq_corrupt, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace tscm::cli

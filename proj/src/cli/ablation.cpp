#include "tscm/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "tscm/svg.hpp"

namespace tscm::ablate {

std::string_view axis_name(Axis axis) {
  switch (axis) {
    case Axis::resblockt_count: return "resblockt_count";
    case Axis::model_size: return "model_size";
    case Axis::superposition: return "superposition";
    case Axis::channel_span: return "channel_span";
    case Axis::temporal_pools: return "temporal_pools";
    case Axis::ctc_levels: return "ctc_levels";
  }
  return "unknown";
}

Axis parse_axis(std::string_view name) {
  for (Axis a : all_axes()) {
    if (axis_name(a) == name) return a;
  }
  throw ConfigError("unknown ablation axis '" + std::string(name) +
                    "' (expected resblockt_count, model_size, superposition, channel_span, temporal_pools, "
                    "ctc_levels)");
}

std::vector<Axis> all_axes() {
  return {Axis::resblockt_count, Axis::model_size,      Axis::superposition,
          Axis::channel_span,    Axis::temporal_pools, Axis::ctc_levels};
}

std::vector<std::string> standard_values(Axis axis) {
  switch (axis) {
    case Axis::resblockt_count: return {"4", "5", "6", "7", "8"};
    case Axis::model_size: return {"34", "50", "101"};
    case Axis::superposition: return {"tsm", "superposition", "crossover", "random"};
    case Axis::channel_span: return {"3", "5", "7"};
    case Axis::temporal_pools: return {"0", "1", "2", "3"};
    case Axis::ctc_levels: return {"1", "2", "3"};
  }
  return {};
}

namespace {

long int_value(const std::string& value, Axis axis, long lo, long hi) {
  const long v = parse_long(value, std::string(axis_name(axis)));
  if (v < lo || v > hi) {
    throw ConfigError(std::string(axis_name(axis)) + " value " + value + " outside " + std::to_string(lo) + ".." +
                      std::to_string(hi));
  }
  return v;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = item.find_last_not_of(" \t");
    out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

void AblationPlan::validate() const {
  if (values.empty()) throw ConfigError("ablation over " + std::string(axis_name(axis)) + " has no values");
  for (const auto& v : values) (void)spec_for(*this, v, 9);
  train.validate();
}

std::vector<AblationPlan> plans_from_config(const ConfigDocument& doc, const train::TrainConfig& base) {
  std::vector<AblationPlan> plans;
  for (const auto* s : doc.all("ablate")) {
    AblationPlan plan;
    plan.axis = parse_axis(s->get("axis"));
    plan.values = s->has("values") ? split_list(s->get("values")) : standard_values(plan.axis);
    plan.preset = s->get_or("preset", plan.preset);
    plan.train = base;
    plan.validate();
    plans.push_back(std::move(plan));
  }
  if (plans.empty()) throw ConfigError("plan has no [ablate] section");
  return plans;
}

net::NetworkSpec spec_for(const AblationPlan& plan, const std::string& value, int vocab) {
  std::string preset = plan.preset;
  if (plan.axis == Axis::model_size) {
    const long size = parse_long(value, "model_size");
    if (size != 34 && size != 50 && size != 101) throw ConfigError("model_size must be 34, 50 or 101");
    const bool desk = preset.size() > 5 && preset.ends_with("-desk");
    preset = "resnett" + value + (desk ? "-desk" : "");
  }
  net::NetworkSpec spec = net::preset(preset);
  switch (plan.axis) {
    case Axis::resblockt_count:
      spec.replaced_tail_blocks = static_cast<int>(int_value(value, plan.axis, 4, 8));
      break;
    case Axis::superposition:
      spec.tscm.mode = shift::parse_mode(value);
      break;
    case Axis::channel_span:
      spec.tscm.span = static_cast<int>(int_value(value, plan.axis, 3, 7));
      if (spec.tscm.span % 2 == 0) throw ConfigError("channel_span must be odd");
      break;
    case Axis::temporal_pools:
      spec.temporal_pools = net::standard_pool_points(spec, static_cast<int>(int_value(value, plan.axis, 0, 3)));
      break;
    case Axis::ctc_levels:
      int_value(value, plan.axis, 1, 3);
      break;
    case Axis::model_size:
      break;
  }
  net::set_vocab(spec, vocab);
  spec.validate();
  return spec;
}

train::TrainConfig config_for(const AblationPlan& plan, const std::string& value) {
  train::TrainConfig cfg = plan.train;
  if (plan.axis == Axis::ctc_levels) cfg.ctc.levels = static_cast<int>(int_value(value, plan.axis, 1, 3));
  return cfg;
}

std::vector<RunResult> run(const std::vector<AblationPlan>& plans, const data::Dataset& dataset,
                           const std::filesystem::path& out_dir, int parallel, std::uint64_t seed,
                           const std::function<void(const RunResult&)>& on_run) {
  struct Job {
    const AblationPlan* plan;
    std::string value;
    std::size_t slot;
  };
  std::vector<Job> jobs;
  for (const auto& p : plans) {
    for (const auto& v : p.values) jobs.push_back({&p, v, jobs.size()});
  }
  std::vector<RunResult> results(jobs.size());
  const int vocab = static_cast<int>(dataset.vocab.size());
  std::filesystem::create_directories(out_dir);

  std::mutex report_mutex;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& job = jobs[i];
      try {
        const auto start = std::chrono::steady_clock::now();
        net::NetworkSpec spec = spec_for(*job.plan, job.value, vocab);
        train::TrainConfig cfg = config_for(*job.plan, job.value);
        cfg.seed = seed + job.slot;
        net::Model<float> model(spec, seed + job.slot);
        const std::string tag = std::string(axis_name(job.plan->axis)) + "_" + job.value;
        const auto res = train::train(model, dataset, cfg, out_dir / "runs" / tag);
        // Report the dev-selected weights, as the training loop keeps them.
        const net::Model<float> best = net::load_checkpoint(out_dir / "runs" / tag / "best");
        RunResult r;
        r.axis = std::string(axis_name(job.plan->axis));
        r.value = job.value;
        r.params = best.parameter_count();
        r.best_dev_wer = res.best_dev_wer;
        r.best_epoch = res.best_epoch;
        r.test_wer = dataset.split("test").empty() ? res.best_dev_wer : train::evaluate(best, dataset, "test").wer;
        r.history = res.history;
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::lock_guard lock(report_mutex);
        results[job.slot] = r;
        if (on_run) on_run(r);
      } catch (...) {
        std::lock_guard lock(report_mutex);
        if (!failure) failure = std::current_exception();
        next = jobs.size();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(parallel, static_cast<int>(jobs.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::ofstream table(out_dir / "ablation.csv");
  table << "axis,value,params,best_dev_wer,best_epoch,test_wer,seconds\n";
  for (const auto& r : results) {
    table << r.axis << ',' << r.value << ',' << r.params << ',' << r.best_dev_wer << ',' << r.best_epoch << ','
          << r.test_wer << ',' << r.seconds << '\n';
  }
  std::ofstream curves(out_dir / "curves.csv");
  curves << "axis,value,epoch,loss,dev_wer\n";
  for (const auto& r : results) {
    for (const auto& e : r.history) {
      curves << r.axis << ',' << r.value << ',' << e.epoch << ',' << e.loss << ',' << e.dev_wer << '\n';
    }
  }
  for (const auto& p : plans) {
    std::vector<svg::Series> series;
    for (const auto& r : results) {
      if (r.axis != axis_name(p.axis)) continue;
      svg::Series s;
      s.label = r.value;
      for (const auto& e : r.history) {
        s.x.push_back(e.epoch);
        s.y.push_back(e.dev_wer);
      }
      series.push_back(std::move(s));
    }
    std::ofstream(out_dir / (std::string(axis_name(p.axis)) + ".svg"))
        << svg::line_chart("dev WER by epoch: " + std::string(axis_name(p.axis)), "epoch", "dev WER (%)", series);
  }
  return results;
}

}  // namespace tscm::ablate

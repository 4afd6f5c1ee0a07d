#pragma once

// Ablation harness: one axis of the standard studies swept over a list of
// values, each value trained and evaluated on the same dataset.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "tscm/trainer.hpp"

namespace tscm::ablate {

enum class Axis { resblockt_count, model_size, superposition, channel_span, temporal_pools, ctc_levels };

std::string_view axis_name(Axis axis);
Axis parse_axis(std::string_view name);
std::vector<Axis> all_axes();
/// The value list studied for each axis.
std::vector<std::string> standard_values(Axis axis);

struct AblationPlan {
  Axis axis = Axis::ctc_levels;
  std::vector<std::string> values;
  std::string preset = "resnett34-desk";
  train::TrainConfig train;

  void validate() const;
};

/// One plan per [ablate] section; values default to the standard list.
std::vector<AblationPlan> plans_from_config(const ConfigDocument& doc, const train::TrainConfig& base);

/// Spec for one value on the axis, with heads sized to the vocabulary.
net::NetworkSpec spec_for(const AblationPlan& plan, const std::string& value, int vocab);
train::TrainConfig config_for(const AblationPlan& plan, const std::string& value);

struct RunResult {
  std::string axis;
  std::string value;
  std::size_t params = 0;
  double best_dev_wer = 0.0;
  int best_epoch = 0;
  double test_wer = 0.0;
  double seconds = 0.0;
  std::vector<train::EpochLog> history;
};

/// Runs every value, sequentially or on up to `parallel` threads, and
/// writes ablation.csv, curves.csv and one SVG per axis under out_dir.
std::vector<RunResult> run(const std::vector<AblationPlan>& plans, const data::Dataset& dataset,
                           const std::filesystem::path& out_dir, int parallel = 1, std::uint64_t seed = 0,
                           const std::function<void(const RunResult&)>& on_run = {});

}  // namespace tscm::ablate

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "recon/domain.hpp"
#include "recon/explainer.hpp"
#include "recon/io.hpp"
#include "recon/learner.hpp"
#include "recon/sim_user.hpp"

namespace recon {

struct ExperimentConfig {
  std::string domain;
  /// Parameter overrides for the robot model, as accepted by params_from_json.
  std::string robot_overrides = "{}";
  std::size_t k = 3;
  std::size_t instances = 20;
  std::vector<std::size_t> train_sizes;
  /// Held-out rows per instance; 0 means "whatever remains after the largest
  /// training size".
  std::size_t test_size = 100;
  /// Unique rows to collect per instance.
  std::size_t target_rows = 1000;
  std::size_t trace_len = 40;
  std::size_t batch_traces = 10;
  std::size_t max_batches = 1000;
  MessageSampler sampler;
  CheckOptions check;
  double alpha = 1.0;
  bool include_next_state = false;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0: hardware concurrency

  std::string to_json() const;
  /// Fields absent from the text keep the values in base. Throws ConfigError
  /// on unknown fields or wrong types.
  static ExperimentConfig from_json(const std::string& text, ExperimentConfig base);
  /// Throws ConfigError when sizes are infeasible.
  void validate() const;
};

/// Training sizes, test size and row target for the shipped domains
/// (900/100 for warehouse and four_rooms, 220 plus the remainder for taxi).
ExperimentConfig default_config(const std::string& domain, std::uint64_t seed);

ParamAssignment robot_params(const DomainSpec& spec, const ExperimentConfig& config);

struct InstanceData {
  ParamAssignment hidden;
  std::vector<ParamId> mismatched;
  std::vector<LabeledTransition> rows;  // unique
  std::size_t traces = 0;
};

/// make_user, then sampled sessions in batches until target_rows unique rows
/// exist. Rows beyond max(train_sizes) + test_size are dropped unless
/// test_size is 0. Throws Error when max_batches runs out first.
InstanceData generate_instance(const DomainSpec& spec, const ExperimentConfig& config,
                               std::size_t instance);

/// Rows from a fixed hidden model instead of a sampled one.
std::vector<LabeledTransition> generate_rows(const DomainSpec& spec, const ParamAssignment& robot,
                                             const ParamAssignment& hidden,
                                             const ExperimentConfig& config, std::uint64_t seed);

struct InstanceSummary {
  std::size_t instance = 0;
  std::uint64_t seed = 0;
  bool completed = false;
  std::string error;
  std::size_t rows = 0;
  std::size_t test_rows = 0;
  double inexplicable_fraction = 0.0;
  double conflict_rate = 0.0;
  std::vector<CurvePoint> curve;
};

struct Fig3Result {
  ResultsFile results;
  std::vector<InstanceSummary> instances;
  std::vector<CurvePoint> mean_curve;
  std::size_t completed = 0;
};

/// Runs all instances on a worker pool. Results are ordered by instance and
/// independent of the thread count. Throws Error when fewer than 80% of the
/// instances complete.
Fig3Result run_fig3(const DomainSpec& spec, const ExperimentConfig& config,
                    const std::function<void(const InstanceSummary&)>& progress = {});

/// Explanation output with message texts and the objective breakdown.
std::string explanation_to_json(const DomainSpec& spec, const ExplanationResult& result,
                                std::optional<bool> oracle_explicable = std::nullopt);

/// True when every transition of every trace is explicable to the user under
/// the mask.
bool oracle_explicable(SimulatedUser& user, const std::vector<Trajectory>& traces,
                       MessageMask mask);

struct Scenario {
  std::string domain;
  ParamAssignment robot;
  ParamAssignment human;
  std::optional<GridPos> detour_start;
};

Scenario load_scenario(const DomainSpec& spec, const std::filesystem::path& path);

/// The robot's most likely trace from the detour start (features x, y, then
/// zeros).
Trajectory detour_trace(const DomainSpec& spec, const Scenario& scenario,
                        std::size_t max_len = 40);

}  // namespace recon

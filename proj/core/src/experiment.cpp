#include "recon/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "recon/error.hpp"

namespace recon {

using nlohmann::json;

std::string ExperimentConfig::to_json() const {
  json obj = {
      {"domain", domain},
      {"robot", json::parse(robot_overrides.empty() ? "{}" : robot_overrides)},
      {"k", k},
      {"instances", instances},
      {"train_sizes", train_sizes},
      {"test_size", test_size},
      {"target_rows", target_rows},
      {"trace_len", trace_len},
      {"batch_traces", batch_traces},
      {"max_batches", max_batches},
      {"sampler", sampler.kind == MessageSampler::Kind::uniform ? "uniform" : "fixed_size"},
      {"sampler_size", sampler.size},
      {"eps_opt", check.eps_opt},
      {"delta", check.delta},
      {"alpha", alpha},
      {"include_next_state", include_next_state},
      {"seed", seed},
  };
  return obj.dump();
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text, ExperimentConfig base) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed config: ") + e.what());
  }
  if (!obj.is_object()) throw ConfigError("config must be a JSON object");
  try {
    for (const auto& [key, value] : obj.items()) {
      if (key == "domain") base.domain = value.get<std::string>();
      else if (key == "robot") base.robot_overrides = value.dump();
      else if (key == "k") base.k = value.get<std::size_t>();
      else if (key == "instances") base.instances = value.get<std::size_t>();
      else if (key == "train_sizes") base.train_sizes = value.get<std::vector<std::size_t>>();
      else if (key == "test_size") base.test_size = value.get<std::size_t>();
      else if (key == "target_rows") base.target_rows = value.get<std::size_t>();
      else if (key == "trace_len") base.trace_len = value.get<std::size_t>();
      else if (key == "batch_traces") base.batch_traces = value.get<std::size_t>();
      else if (key == "max_batches") base.max_batches = value.get<std::size_t>();
      else if (key == "sampler") {
        const auto kind = value.get<std::string>();
        if (kind == "uniform") base.sampler.kind = MessageSampler::Kind::uniform;
        else if (kind == "fixed_size") base.sampler.kind = MessageSampler::Kind::fixed_size;
        else throw ConfigError("unknown sampler '" + kind + "'");
      }
      else if (key == "sampler_size") base.sampler.size = value.get<std::size_t>();
      else if (key == "eps_opt") base.check.eps_opt = value.get<double>();
      else if (key == "delta") base.check.delta = value.get<double>();
      else if (key == "alpha") base.alpha = value.get<double>();
      else if (key == "include_next_state") base.include_next_state = value.get<bool>();
      else if (key == "seed") base.seed = value.get<std::uint64_t>();
      else if (key == "threads") base.threads = value.get<std::size_t>();
      else throw ConfigError("unknown config field '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return base;
}

void ExperimentConfig::validate() const {
  if (domain.empty()) throw ConfigError("config has no domain");
  if (train_sizes.empty()) throw ConfigError("config has no training sizes");
  if (std::find(train_sizes.begin(), train_sizes.end(), 0) != train_sizes.end()) {
    throw ConfigError("training sizes must be positive");
  }
  const std::size_t largest = *std::max_element(train_sizes.begin(), train_sizes.end());
  if (test_size == 0 ? target_rows <= largest : target_rows < largest + test_size) {
    throw ConfigError("target_rows " + std::to_string(target_rows) +
                      " cannot hold the largest training size plus a test set");
  }
  if (batch_traces == 0 || max_batches == 0) throw ConfigError("batch sizes must be positive");
  if (!(check.eps_opt >= 0.0)) throw ConfigError("eps_opt must be nonnegative");
  if (!(check.delta >= 0.0 && check.delta < 1.0)) throw ConfigError("delta must lie in [0, 1)");
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be nonnegative");
}

ExperimentConfig default_config(const std::string& domain, std::uint64_t seed) {
  ExperimentConfig c;
  c.domain = domain;
  c.seed = seed;
  const std::string stem = std::filesystem::path(domain).filename().string();
  if (stem.rfind("taxi", 0) == 0) {
    c.train_sizes = {20, 50, 100, 150, 220};
    c.test_size = 0;
    c.target_rows = 235;
    c.batch_traces = 2;
  } else {
    c.train_sizes = {50, 100, 200, 300, 450, 600, 750, 900};
    c.test_size = 100;
    c.target_rows = 1000;
  }
  return c;
}

ParamAssignment robot_params(const DomainSpec& spec, const ExperimentConfig& config) {
  const ParamAssignment robot =
      params_from_json(spec, config.robot_overrides.empty() ? "{}" : config.robot_overrides,
                       spec.schema().defaults());
  spec.schema().validate(robot);
  return robot;
}

std::vector<LabeledTransition> generate_rows(const DomainSpec& spec, const ParamAssignment& robot,
                                             const ParamAssignment& hidden,
                                             const ExperimentConfig& config, std::uint64_t seed) {
  SimulatedUser user(spec, robot, hidden, config.check);
  const SolvedModel robot_model = solve_model(spec.build(robot));
  Rng rng(seed);
  SessionOptions options{config.batch_traces, config.sampler, config.trace_len};
  std::vector<LabeledTransition> unique;
  for (std::size_t b = 0; b < config.max_batches && unique.size() < config.target_rows; ++b) {
    std::vector<LabeledTransition> all = std::move(unique);
    const auto batch = simulate_session(user, robot_model, options, rng);
    all.insert(all.end(), batch.begin(), batch.end());
    unique = dedupe(all);
  }
  return unique;
}

InstanceData generate_instance(const DomainSpec& spec, const ExperimentConfig& config,
                               std::size_t instance) {
  const std::uint64_t seed = derive_seed(config.seed, instance);
  const ParamAssignment robot = robot_params(spec, config);
  SimulatedUser user = make_user(spec, robot, config.k, derive_seed(seed, 1), config.check);

  InstanceData data;
  data.hidden = user.hidden();
  data.mismatched = user.mismatched();
  data.rows = generate_rows(spec, robot, data.hidden, config, derive_seed(seed, 2));
  if (data.rows.size() < config.target_rows) {
    throw Error("instance " + std::to_string(instance) + " produced only " +
                std::to_string(data.rows.size()) + " unique rows");
  }
  if (config.test_size != 0) {
    const std::size_t largest = *std::max_element(config.train_sizes.begin(),
                                                  config.train_sizes.end());
    data.rows.resize(largest + config.test_size);
  }
  return data;
}

namespace {

InstanceSummary run_instance(const DomainSpec& spec, const ExperimentConfig& config,
                             std::size_t instance) {
  InstanceSummary s;
  s.instance = instance;
  s.seed = derive_seed(config.seed, instance);
  const InstanceData data = generate_instance(spec, config, instance);
  const FeatureEncoder encoder(spec, config.include_next_state);
  const std::vector<FeatureRow> rows = encoder.encode(data.rows);
  const std::size_t largest =
      *std::max_element(config.train_sizes.begin(), config.train_sizes.end());
  s.rows = rows.size();
  s.test_rows = config.test_size != 0 ? config.test_size : rows.size() - largest;
  std::size_t bad = 0;
  for (const FeatureRow& r : rows) bad += r.label == Label::inexplicable ? 1 : 0;
  s.inexplicable_fraction = static_cast<double>(bad) / static_cast<double>(rows.size());
  s.conflict_rate = conflict_rate(rows);
  s.curve = training_curve(encoder.schema(), rows, config.train_sizes, s.test_rows,
                           derive_seed(s.seed, 3));
  s.completed = true;
  return s;
}

}  // namespace

Fig3Result run_fig3(const DomainSpec& spec, const ExperimentConfig& config,
                    const std::function<void(const InstanceSummary&)>& progress) {
  config.validate();
  Fig3Result out;
  out.instances.resize(config.instances);
  std::atomic<std::size_t> next{0};
  std::mutex report;
  auto worker = [&] {
    for (std::size_t i = next++; i < config.instances; i = next++) {
      InstanceSummary s;
      try {
        s = run_instance(spec, config, i);
      } catch (const std::exception& e) {
        s.instance = i;
        s.seed = derive_seed(config.seed, i);
        s.error = e.what();
      }
      std::lock_guard lock(report);
      out.instances[i] = s;
      if (progress) progress(s);
    }
  };
  std::size_t threads = config.threads != 0 ? config.threads : std::thread::hardware_concurrency();
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(config.instances, 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  out.results.config_json = config.to_json();
  std::vector<double> sums(config.train_sizes.size(), 0.0);
  for (const InstanceSummary& s : out.instances) {
    if (!s.completed) continue;
    ++out.completed;
    for (std::size_t j = 0; j < s.curve.size(); ++j) {
      out.results.rows.push_back({s.instance, s.curve[j].train_size, s.curve[j].test_accuracy,
                                  s.seed});
      sums[j] += s.curve[j].test_accuracy;
    }
  }
  if (out.completed * 5 < config.instances * 4) {
    throw Error("only " + std::to_string(out.completed) + " of " +
                std::to_string(config.instances) + " instances completed");
  }
  for (std::size_t j = 0; j < sums.size(); ++j) {
    out.mean_curve.push_back(
        {config.train_sizes[j], out.completed ? sums[j] / static_cast<double>(out.completed) : 0.0});
  }
  return out;
}

bool oracle_explicable(SimulatedUser& user, const std::vector<Trajectory>& traces,
                       MessageMask mask) {
  for (const Trajectory& t : traces) {
    for (const Transition& step : t.steps) {
      if (user.label(step, mask) != Label::explicable) return false;
    }
  }
  return true;
}

std::string explanation_to_json(const DomainSpec& spec, const ExplanationResult& result,
                                std::optional<bool> oracle) {
  json chosen = json::array();
  for (const std::string& id : result.chosen) {
    const Message& m = spec.messages()[message_index(spec.messages(), id)];
    chosen.push_back({{"id", m.id}, {"text", m.text}, {"cost", m.cost}});
  }
  json predicted = json::array();
  for (const auto& trace : result.predicted) {
    json labels = json::array();
    for (Label l : trace) labels.push_back(static_cast<int>(l));
    predicted.push_back(std::move(labels));
  }
  json out = {{"schema_version", kFileSchemaVersion},
              {"kind", "explanation"},
              {"domain", spec.name()},
              {"mode", std::string(to_string(result.mode))},
              {"alpha", result.alpha},
              {"chosen", std::move(chosen)},
              {"cost", result.cost},
              {"predicted_inexplicable", result.inexplicable},
              {"objective", result.objective},
              {"predicted", std::move(predicted)},
              {"evaluated", result.evaluated}};
  if (oracle) out["oracle_explicable"] = *oracle;
  return out.dump(2) + "\n";
}

Scenario load_scenario(const DomainSpec& spec, const std::filesystem::path& path) {
  json obj;
  try {
    obj = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed scenario: ") + e.what());
  }
  if (!obj.is_object() || obj.value("schema_version", 0) != kFileSchemaVersion) {
    throw VersionMismatch("scenario schema_version must be " + std::to_string(kFileSchemaVersion));
  }
  Scenario s;
  s.domain = obj.value("domain", spec.name());
  if (s.domain != spec.name()) {
    throw ConfigError("scenario is for domain '" + s.domain + "', not '" + spec.name() + "'");
  }
  s.robot = params_from_json(spec, obj.value("robot", json::object()).dump(),
                             spec.schema().defaults());
  s.human = params_from_json(spec, obj.value("human", json::object()).dump(), s.robot);
  if (obj.contains("detour_start")) {
    const auto xy = obj.at("detour_start").get<std::vector<int>>();
    if (xy.size() != 2) throw ParseError("detour_start must be [x, y]", 0, "detour_start");
    s.detour_start = GridPos{xy[0], xy[1]};
  }
  return s;
}

Trajectory detour_trace(const DomainSpec& spec, const Scenario& scenario, std::size_t max_len) {
  if (!scenario.detour_start) throw ConfigError("scenario has no detour_start");
  FeatureVector f;
  f.values.assign(spec.feature_names().size(), 0);
  f.values[0] = scenario.detour_start->x;
  f.values[1] = scenario.detour_start->y;
  const auto start = spec.state_from_features(f);
  if (!start) throw ConfigError("detour_start is not a free cell");
  const SolvedModel robot = solve_model(spec.build(scenario.robot));
  return most_likely_trajectory(robot.mdp, robot.policy, *start, max_len);
}

}  // namespace recon

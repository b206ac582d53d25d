#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

#include "http/label_server.hpp"
#include "recon/domain.hpp"
#include "recon/error.hpp"
#include "recon/experiment.hpp"
#include "recon/explainer.hpp"
#include "recon/io.hpp"
#include "recon/learner.hpp"
#include "recon/reconciliation.hpp"
#include "recon/sim_user.hpp"
#include "recon/study.hpp"

using namespace recon;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

LabelServer* g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

ParamAssignment load_params(const DomainSpec& spec, const std::string& path, ParamAssignment base) {
  if (path.empty()) return base;
  return params_from_json(spec, read_text_file(path), std::move(base));
}

std::vector<std::string> split_ids(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::optional<GridPos> parse_xy(const std::string& text) {
  if (text.empty()) return std::nullopt;
  int x = 0;
  int y = 0;
  char comma = 0;
  std::istringstream in(text);
  if (!(in >> x >> comma >> y) || comma != ',') throw ConfigError("expected x,y but got '" + text + "'");
  return GridPos{x, y};
}

StateId start_state(const DomainSpec& spec, GridPos pos) {
  FeatureVector f;
  f.values.assign(spec.feature_names().size(), 0);
  f.values[0] = pos.x;
  f.values[1] = pos.y;
  if (spec.dynamics() == Dynamics::taxi) {
    // waiting passenger: the layout's pickup code
    f.values = spec.features(0).values;
    f.values[0] = pos.x;
    f.values[1] = pos.y;
  }
  const auto s = spec.state_from_features(f);
  if (!s) throw ConfigError("start is not a free cell");
  return *s;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_text_file(out_path, text);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explanation as model reconciliation for MDPs"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string layout;
  std::string out_path;

  // solve
  auto* solve = app.add_subcommand("solve", "Solve a layout and print values and policy");
  std::string solve_params;
  double tol = 1e-9;
  std::size_t max_iter = 100000;
  bool solve_json = false;
  solve->add_option("layout", layout, "Layout name or path")->required();
  solve->add_option("--params", solve_params, "Parameter overrides (JSON file)");
  solve->add_option("--tol", tol, "Bellman residual tolerance")->check(CLI::PositiveNumber);
  solve->add_option("--max-iter", max_iter, "Iteration cap");
  solve->add_flag("--json", solve_json, "Print values and policy as JSON");
  solve->add_option("--out", out_path, "Write output here instead of stdout");

  // sample-trace
  auto* sample = app.add_subcommand("sample-trace", "Sample robot traces to a trace file");
  std::string sample_params;
  std::string sample_start;
  std::size_t sample_len = 40;
  std::size_t sample_count = 1;
  bool most_likely = false;
  sample->add_option("layout", layout, "Layout name or path")->required();
  sample->add_option("--seed", seed, "Random seed")->required();
  sample->add_option("--params", sample_params, "Robot parameter overrides (JSON file)");
  sample->add_option("--start", sample_start, "Start cell x,y (default: initial distribution)");
  sample->add_option("--max-len", sample_len, "Trace length limit");
  sample->add_option("--count", sample_count, "Number of traces");
  sample->add_flag("--most-likely", most_likely, "Follow the most likely successor");
  sample->add_option("--out", out_path, "Output trace file")->required();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Simulate a user and write a labeled dataset");
  std::string gen_domain;
  std::string gen_config;
  std::string gen_scenario;
  std::string gen_human;
  std::size_t gen_instance = 0;
  std::optional<std::size_t> gen_k;
  std::optional<std::size_t> gen_rows;
  gen->add_option("--domain", gen_domain, "Layout name or path")->required();
  gen->add_option("--seed", seed, "Random seed")->required();
  gen->add_option("--config", gen_config, "Experiment config (JSON file)");
  gen->add_option("--instance", gen_instance, "Instance index for the sampled user");
  gen->add_option("--k", gen_k, "Mismatched parameters of the sampled user");
  gen->add_option("--rows", gen_rows, "Unique rows to collect");
  gen->add_option("--scenario", gen_scenario, "Scenario file with a fixed human model");
  gen->add_option("--human", gen_human, "Human parameter overrides (JSON file)");
  gen->add_option("--out", out_path, "Output dataset (JSONL)")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a labeling tree on a dataset");
  std::string train_data;
  std::string train_domain;
  std::size_t min_leaf = 1;
  std::optional<std::size_t> max_depth;
  bool next_state = false;
  std::size_t cv_folds = 0;
  train->add_option("--data", train_data, "Dataset (JSONL)")->required();
  train->add_option("--domain", train_domain, "Layout name or path (default: dataset header)");
  train->add_option("--seed", seed, "Random seed")->required();
  train->add_option("--min-leaf", min_leaf, "Minimum rows per leaf")->check(CLI::PositiveNumber);
  train->add_option("--max-depth", max_depth, "Depth limit (default: none)");
  train->add_flag("--next-state", next_state, "Add next-state features");
  train->add_option("--cv", cv_folds, "Also report k-fold cross-validation");
  train->add_option("--out", out_path, "Output tree (JSON)")->required();

  // curve
  auto* curve = app.add_subcommand("curve", "Training-curve experiment over simulated users");
  std::string curve_domain;
  std::string curve_config;
  std::optional<std::size_t> curve_instances;
  std::optional<std::size_t> curve_k;
  std::size_t curve_threads = 0;
  curve->add_option("--domain", curve_domain, "Layout name or path")->required();
  curve->add_option("--seed", seed, "Random seed")->required();
  curve->add_option("--config", curve_config, "Experiment config (JSON file)");
  curve->add_option("--instances", curve_instances, "Number of simulated users");
  curve->add_option("--k", curve_k, "Mismatched parameters per user");
  curve->add_option("--threads", curve_threads, "Worker threads (0: all cores)");
  curve->add_option("--out", out_path, "Results CSV")->required();

  // explain
  auto* explain = app.add_subcommand("explain", "Select messages for traces with a learned tree");
  std::string ex_domain;
  std::string ex_traces;
  std::string ex_tree;
  std::string ex_mode = "exhaustive";
  std::string ex_scenario;
  std::string ex_human;
  double alpha = 1.0;
  explain->add_option("--domain", ex_domain, "Layout name or path")->required();
  explain->add_option("--traces", ex_traces, "Trace file")->required();
  explain->add_option("--tree", ex_tree, "Tree file")->required();
  explain->add_option("--alpha", alpha, "Weight of predicted inexplicability")->check(CLI::NonNegativeNumber);
  explain->add_option("--mode", ex_mode, "exhaustive or greedy")
      ->check(CLI::IsMember({"exhaustive", "greedy"}));
  explain->add_option("--scenario", ex_scenario, "Scenario for oracle verification");
  explain->add_option("--human", ex_human, "Human overrides for oracle verification");
  explain->add_option("--out", out_path, "Write the result here instead of stdout");

  // check-explanation
  auto* check = app.add_subcommand("check-explanation", "Test explanation completeness");
  std::string ck_domain;
  std::string ck_human;
  std::string ck_robot;
  std::string ck_scenario;
  std::string ck_messages;
  std::string ck_traces;
  std::string ck_mode = "behavior";
  std::string ck_search = "exhaustive";
  double delta = 0.0;
  double eps = 1e-6;
  bool minimal = false;
  check->add_option("--domain", ck_domain, "Layout name or path")->required();
  check->add_option("--scenario", ck_scenario, "Scenario with robot and human models");
  check->add_option("--human", ck_human, "Human overrides (JSON file)");
  check->add_option("--robot", ck_robot, "Robot overrides (JSON file)");
  check->add_option("--messages", ck_messages, "Comma-separated message ids to test");
  check->add_option("--traces", ck_traces, "Trace file (behavior mode; default: scenario detour)");
  check->add_option("--mode", ck_mode, "policy or behavior")->check(CLI::IsMember({"policy", "behavior"}));
  check->add_option("--search", ck_search, "exhaustive or greedy")
      ->check(CLI::IsMember({"exhaustive", "greedy"}));
  check->add_option("--delta", delta, "Trace probability threshold");
  check->add_option("--eps", eps, "Optimality tolerance");
  check->add_flag("--minimal", minimal, "Also search for the cheapest complete subset");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the labeling service");
  std::string journal_dir = "study-journal";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string origin = "*";
  std::size_t traces = 8;
  serve->add_option("--journal-dir", journal_dir, "Directory for session journals");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port");
  serve->add_option("--origin", origin, "Allowed CORS origin");
  serve->add_option("--traces", traces, "Traces per session");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*solve) {
      const DomainSpec spec = load_named_layout(layout);
      const ParamAssignment params = load_params(spec, solve_params, spec.schema().defaults());
      const Mdp mdp = spec.build(params);
      const Solution sol = value_iteration(mdp, {tol, max_iter});
      const Policy pi = greedy_policy(sol.q);
      json out = {{"domain", spec.name()},
                  {"states", mdp.num_states()},
                  {"actions", mdp.num_actions()},
                  {"iterations", sol.iterations},
                  {"residual", sol.residual}};
      if (solve_json) {
        out["values"] = sol.values;
        json names = json::array();
        for (ActionId a : pi.actions) names.push_back(spec.actions()[static_cast<std::size_t>(a)]);
        out["policy"] = names;
      }
      double start_value = 0.0;
      const auto mu = mdp.initial_distribution();
      for (std::size_t s = 0; s < mu.size(); ++s) start_value += mu[s] * sol.values[s];
      out["expected_start_value"] = start_value;
      emit(out.dump(2) + "\n", out_path);
      return kExitOk;
    }

    if (*sample) {
      const DomainSpec spec = load_named_layout(layout);
      const ParamAssignment params = load_params(spec, sample_params, spec.schema().defaults());
      const SolvedModel robot = solve_model(spec.build(params));
      Rng rng(seed);
      std::vector<Trajectory> out;
      const auto start = parse_xy(sample_start);
      for (std::size_t i = 0; i < sample_count; ++i) {
        const StateId s = start ? start_state(spec, *start)
                                : sample_state(robot.mdp.initial_distribution(), rng);
        out.push_back(most_likely ? most_likely_trajectory(robot.mdp, robot.policy, s, sample_len)
                                  : sample_trajectory(robot.mdp, robot.policy, s, sample_len, rng));
      }
      save_traces(out_path, spec.name(), out);
      std::cerr << "wrote " << out.size() << " trace(s) to " << out_path << "\n";
      return kExitOk;
    }

    if (*gen) {
      const DomainSpec spec = load_named_layout(gen_domain);
      ExperimentConfig config = default_config(gen_domain, seed);
      if (!gen_config.empty()) config = ExperimentConfig::from_json(read_text_file(gen_config), config);
      config.seed = seed;
      if (gen_k) config.k = *gen_k;
      if (gen_rows) {
        config.target_rows = *gen_rows;
        config.test_size = 0;
        config.train_sizes = {std::max<std::size_t>(*gen_rows, 2) - 1};
      }
      std::vector<LabeledTransition> rows;
      if (!gen_scenario.empty() || !gen_human.empty()) {
        ParamAssignment robot = robot_params(spec, config);
        ParamAssignment human = robot;
        if (!gen_scenario.empty()) {
          const Scenario sc = load_scenario(spec, gen_scenario);
          robot = sc.robot;
          human = sc.human;
        }
        human = load_params(spec, gen_human, human);
        rows = generate_rows(spec, robot, human, config, derive_seed(seed, gen_instance));
      } else {
        InstanceData data = generate_instance(spec, config, gen_instance);
        std::cerr << "mismatched:";
        for (const ParamId& id : data.mismatched) {
          std::cerr << ' ' << id.key << '=' << spec.format_value(id, data.hidden.at(id));
        }
        std::cerr << "\n";
        rows = std::move(data.rows);
      }
      if (gen_rows && rows.size() > *gen_rows) rows.resize(*gen_rows);
      save_dataset(out_path, make_dataset(spec, rows));
      std::size_t bad = 0;
      for (const auto& r : rows) bad += r.label == Label::inexplicable ? 1 : 0;
      std::cerr << "wrote " << rows.size() << " rows (" << bad << " inexplicable) to " << out_path
                << "\n";
      return kExitOk;
    }

    if (*train) {
      const Dataset data = load_dataset(train_data);
      const DomainSpec spec = load_named_layout(train_domain.empty() ? data.domain : train_domain);
      std::vector<std::string> ids;
      for (const Message& m : spec.messages()) ids.push_back(m.id);
      if (ids != data.messages) throw SchemaMismatch("dataset messages do not match the layout catalog");
      const FeatureEncoder encoder(spec, next_state);
      const std::vector<FeatureRow> rows = encoder.encode(data.rows);
      TreeHyper hyper;
      hyper.min_leaf = min_leaf;
      if (max_depth) hyper.max_depth = *max_depth;
      const DecisionTree tree = train_tree(encoder.schema(), rows, hyper, seed);
      save_tree(out_path, tree);
      std::cout << "rows " << rows.size() << ", nodes " << tree.nodes.size() << ", depth "
                << tree.depth() << ", train accuracy " << accuracy(tree, rows)
                << ", conflict rate " << conflict_rate(rows) << "\n";
      if (cv_folds > 0) {
        const CrossValidation cv = cross_validate(encoder.schema(), rows, cv_folds, seed, hyper);
        std::cout << cv_folds << "-fold cross-validation accuracy " << cv.mean_accuracy << "\n";
      }
      return kExitOk;
    }

    if (*curve) {
      const DomainSpec spec = load_named_layout(curve_domain);
      ExperimentConfig config = default_config(curve_domain, seed);
      if (!curve_config.empty()) config = ExperimentConfig::from_json(read_text_file(curve_config), config);
      config.seed = seed;
      if (curve_instances) config.instances = *curve_instances;
      if (curve_k) config.k = *curve_k;
      config.threads = curve_threads;
      const Fig3Result result = run_fig3(spec, config, [](const InstanceSummary& s) {
        if (!s.completed) std::cerr << "instance " << s.instance << " failed: " << s.error << "\n";
      });
      save_results(out_path, result.results);
      std::cout << "completed " << result.completed << "/" << config.instances << " instances\n";
      std::cout << "train_size,mean_test_accuracy\n";
      for (const CurvePoint& p : result.mean_curve) {
        std::cout << p.train_size << "," << p.test_accuracy << "\n";
      }
      return kExitOk;
    }

    if (*explain) {
      const DomainSpec spec = load_named_layout(ex_domain);
      const std::vector<Trajectory> trs = load_traces(ex_traces);
      const DecisionTree tree = load_tree(ex_tree);
      const FeatureEncoder encoder(spec, tree.schema.size() > FeatureEncoder(spec).schema().size());
      const Explainer explainer(encoder, tree, spec.messages());
      const ExplanationResult r =
          explainer.select(trs, alpha, ex_mode == "greedy" ? SearchMode::greedy : SearchMode::exhaustive);
      std::optional<bool> verified;
      if (!ex_scenario.empty() || !ex_human.empty()) {
        ParamAssignment robot = spec.schema().defaults();
        ParamAssignment human = robot;
        if (!ex_scenario.empty()) {
          const Scenario sc = load_scenario(spec, ex_scenario);
          robot = sc.robot;
          human = sc.human;
        }
        human = load_params(spec, ex_human, human);
        SimulatedUser user(spec, robot, human);
        verified = oracle_explicable(user, trs, r.mask);
      }
      emit(explanation_to_json(spec, r, verified), out_path);
      return kExitOk;
    }

    if (*check) {
      const DomainSpec spec = load_named_layout(ck_domain);
      ParamAssignment robot = spec.schema().defaults();
      ParamAssignment human = robot;
      std::optional<Scenario> scenario;
      if (!ck_scenario.empty()) {
        scenario = load_scenario(spec, ck_scenario);
        robot = scenario->robot;
        human = scenario->human;
      }
      robot = load_params(spec, ck_robot, robot);
      human = load_params(spec, ck_human, human);
      const ExplanationMode mode = ck_mode == "policy" ? ExplanationMode::policy : ExplanationMode::behavior;
      std::vector<Trajectory> trs;
      if (mode == ExplanationMode::behavior) {
        if (!ck_traces.empty()) {
          trs = load_traces(ck_traces);
        } else if (scenario && scenario->detour_start) {
          trs = {detour_trace(spec, *scenario)};
        } else {
          throw ConfigError("behavior mode needs --traces or a scenario with detour_start");
        }
      }
      const std::vector<Message> chosen =
          select_messages_by_mask(spec.messages(), mask_from_ids(spec.messages(), split_ids(ck_messages)));
      const std::set<ParamId> subset = message_param_ids(chosen);
      json out = {{"mode", std::string(to_string(mode))}, {"messages", split_ids(ck_messages)}};
      json mismatched = json::array();
      for (const auto& [id, v] : human) {
        if (robot.at(id) != v) mismatched.push_back(id.key);
      }
      out["mismatched"] = mismatched;
      if (mode == ExplanationMode::policy) {
        const PolicyCheck pc = check_policy_complete(spec, human, robot, subset, eps);
        out["complete"] = pc.complete;
        json states = json::array();
        for (StateId s : pc.violations) states.push_back(spec.describe(s));
        out["violations"] = states;
      } else {
        const BehaviorCheck bc = check_behavior_complete(spec, human, robot, subset, trs, {eps, delta});
        out["complete"] = bc.complete;
        json diag = json::array();
        for (const TraceDiagnosis& d : bc.traces) {
          diag.push_back({{"explicable", d.explicable}, {"reason", d.reason()}, {"probability", d.probability}});
        }
        out["traces"] = diag;
      }
      if (minimal) {
        ExplanationQuery q;
        q.mode = mode;
        q.search = ck_search == "greedy" ? SearchMode::greedy : SearchMode::exhaustive;
        q.traces = trs;
        q.check = {eps, delta};
        const MinimalExplanation m = minimal_complete_explanation(spec, human, robot, spec.messages(), q);
        out["minimal"] = {{"found", m.found},
                          {"optimal", m.optimal},
                          {"messages", m.chosen},
                          {"cost", m.cost},
                          {"residual_violations", m.residual_violations},
                          {"subsets_evaluated", m.subsets_evaluated}};
      }
      std::cout << out.dump(2) << "\n";
      return kExitOk;
    }

    if (*serve) {
      StudyConfig config;
      config.journal_dir = journal_dir;
      config.traces = traces;
      StudyService service(config);
      ServerOptions options;
      options.allowed_origin = origin;
      LabelServer server(service, options);
      const int bound = server.bind(host, port);
      if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on http://" << host << ":" << bound << "\n";
      const bool ok = server.serve();
      g_server = nullptr;
      return ok ? kExitOk : kExitRuntime;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SchemaMismatch& e) {
    std::cerr << "schema mismatch: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UnknownParam& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

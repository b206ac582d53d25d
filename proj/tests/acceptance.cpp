// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "oracles.hpp"
#include "recon/domain.hpp"
#include "recon/error.hpp"
#include "recon/experiment.hpp"
#include "recon/explainer.hpp"
#include "recon/io.hpp"
#include "recon/study.hpp"

using namespace recon;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

const char* const kDomains[] = {"warehouse", "four_rooms", "taxi"};
const std::string kScenario = std::string(RECON_DATA_DIR) + "/scenarios/warehouse_study.json";

Verdict solver_oracle() {
  std::size_t policy_mismatch = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Mdp m = oracle::random_mdp(derive_seed(2024, seed), 4, 3);
    const Solution sol = value_iteration(m);
    const oracle::Optimum opt = oracle::enumerate_policies(m);
    const Policy pi = greedy_policy(sol.q);
    const std::vector<double> pv = oracle::evaluate_policy(m, {pi.actions.begin(), pi.actions.end()});
    for (StateId s = 0; s < m.num_states(); ++s) {
      const auto i = static_cast<std::size_t>(s);
      worst = std::max({worst, std::abs(sol.values[i] - opt.values[i]), std::abs(pv[i] - opt.values[i])});
      double best = -std::numeric_limits<double>::infinity();
      for (ActionId a = 0; a < m.num_actions(); ++a) best = std::max(best, opt.qsa(s, a));
      if (opt.qsa(s, pi(s)) < best - 1e-6) ++policy_mismatch;
    }
  }
  return {policy_mismatch == 0 && worst <= 1e-6,
          "200 models, non-optimal greedy actions " + std::to_string(policy_mismatch) +
              ", max value error " + fmt("%.2e", worst)};
}

Verdict trajectory_mass() {
  bool ok = true;
  std::ostringstream detail;
  for (const char* name : kDomains) {
    const DomainSpec spec = load_named_layout(name);
    const SolvedModel m = solve_model(spec.build(spec.schema().defaults()));
    const auto mu = m.mdp.initial_distribution();
    double worst = 0.0;
    std::size_t traces = 0;
    std::size_t starts = 0;
    std::size_t horizon = 40;
    for (StateId s = 0; s < m.mdp.num_states(); ++s) {
      if (mu[static_cast<std::size_t>(s)] == 0.0) continue;
      ++starts;
      std::vector<WeightedTrajectory> all;
      while (true) {
        try {
          all = enumerate_trajectories(m.mdp, m.policy, s, horizon);
          break;
        } catch (const BudgetExceeded&) {
          horizon /= 2;
        }
      }
      double mass = 0.0;
      for (const auto& w : all) {
        mass += w.probability;
        if (trajectory_probability(m.mdp, m.policy, w.trajectory) != w.probability) ok = false;
      }
      traces += all.size();
      worst = std::max(worst, std::abs(mass - 1.0));
    }
    ok = ok && worst <= 1e-9;
    detail << name << ": " << starts << " starts, " << traces << " traces, horizon " << horizon
           << ", |mass-1| " << fmt("%.1e", worst) << "; ";
  }
  return {ok, detail.str()};
}

Verdict reconciliation_algebra() {
  std::size_t identity = 0, full = 0, compose = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto c = oracle::random_reconcile_case(derive_seed(77, seed));
    const ParamSchema& schema = c.family.schema();
    if (reconcile(schema, c.human, c.robot, {}) != c.human) ++identity;
    std::set<ParamId> all;
    for (const ParamSpec& s : schema.specs()) all.insert(s.id);
    if (reconcile(schema, c.human, c.robot, all) != c.robot) ++full;
    Rng rng(seed);
    const auto b = oracle::random_subset(schema, rng, rng.uniform());
    std::set<ParamId> both = c.subset;
    both.insert(b.begin(), b.end());
    const auto once = reconcile(schema, c.human, c.robot, both);
    const auto twice = reconcile(schema, reconcile(schema, c.human, c.robot, c.subset), c.robot, b);
    bool close = true;
    for (const auto& [id, v] : once) close = close && std::abs(v - twice.at(id)) <= 1e-12;
    try {
      schema.validate(once);
    } catch (const InvalidModel&) {
      close = false;
    }
    if (!close) ++compose;
  }
  return {identity + full + compose == 0,
          "1000 cases; identity failures " + std::to_string(identity) + ", overwrite failures " +
              std::to_string(full) + ", composition failures " + std::to_string(compose)};
}

Verdict minimality_oracle() {
  const DomainSpec spec = load_named_layout("warehouse");
  const Scenario sc = load_scenario(spec, kScenario);
  const std::vector<Trajectory> traces{detour_trace(spec, sc)};
  bool ok = spec.messages().size() == 7;
  std::ostringstream detail;
  detail << spec.messages().size() << " messages; ";
  MinimalExplanation behavior;
  for (ExplanationMode mode : {ExplanationMode::policy, ExplanationMode::behavior}) {
    ExplanationQuery q;
    q.mode = mode;
    q.traces = traces;
    const MinimalExplanation got = minimal_complete_explanation(spec, sc.human, sc.robot, spec.messages(), q);
    const auto want = oracle::brute_force_explanation(spec, sc.human, sc.robot, spec.messages(), mode, traces);
    const bool same = got.found == want.found && got.chosen == want.chosen && got.cost == want.cost;
    ok = ok && same;
    std::string ids;
    for (const auto& id : got.chosen) ids += (ids.empty() ? "" : ",") + id;
    detail << to_string(mode) << " {" << ids << "} " << (same ? "matches" : "differs from")
           << " brute force (" << want.complete_subsets << " complete subsets); ";
    if (mode == ExplanationMode::behavior) behavior = got;
  }
  std::set<ParamId> mismatched;
  for (const auto& [id, v] : sc.human) {
    if (sc.robot.at(id) != v) mismatched.insert(id);
  }
  const auto msgs = select_messages_by_mask(spec.messages(), mask_from_ids(spec.messages(), behavior.chosen));
  const std::set<ParamId> used = message_param_ids(msgs);
  const bool strict = used.size() < mismatched.size() &&
                      std::includes(mismatched.begin(), mismatched.end(), used.begin(), used.end());
  detail << "behavior explanation covers " << used.size() << " of " << mismatched.size()
         << " mismatched params";
  return {ok && behavior.found && strict, detail.str()};
}

Verdict training_curves() {
  bool ok = true;
  std::ostringstream detail;
  for (const char* name : kDomains) {
    const DomainSpec spec = load_named_layout(name);
    ExperimentConfig config = default_config(name, 2024);
    config.instances = 20;
    config.k = 3;
    const Fig3Result r = run_fig3(spec, config);
    const auto& curve = r.mean_curve;
    bool monotone = true;
    for (std::size_t i = 0; i < curve.size(); ++i) {
      for (std::size_t j = i + 1; j < curve.size(); ++j) {
        monotone = monotone && curve[j].test_accuracy >= curve[i].test_accuracy - 0.05;
      }
    }
    const double last = curve.back().test_accuracy;
    ok = ok && monotone && last >= 0.85 && r.completed == config.instances;
    detail << name << " " << fmt("%.3f", curve.front().test_accuracy) << "@" << curve.front().train_size
           << " -> " << fmt("%.3f", last) << "@" << curve.back().train_size
           << (monotone ? "" : " (not monotone)") << "; ";
  }
  return {ok, detail.str()};
}

Verdict end_to_end_selection() {
  const DomainSpec spec = load_named_layout("warehouse");
  const Scenario sc = load_scenario(spec, kScenario);
  const Trajectory trace = detour_trace(spec, sc);
  ExperimentConfig config = default_config("warehouse", 2024);
  const auto rows = generate_rows(spec, sc.robot, sc.human, config, derive_seed(2024, 6));
  const FeatureEncoder encoder(spec);
  const DecisionTree tree = train_tree(encoder.schema(), encoder.encode(rows), {}, 2024);
  const ExplanationResult pick =
      select_messages(encoder, tree, spec.messages(), trace, 1.0, SearchMode::exhaustive);
  SimulatedUser user(spec, sc.robot, sc.human);
  const bool explicable = oracle_explicable(user, {trace}, pick.mask);

  ExplanationQuery q;
  q.traces = {trace};
  const MinimalExplanation minimal = minimal_complete_explanation(spec, sc.human, sc.robot, spec.messages(), q);
  std::string ids;
  for (const auto& id : pick.chosen) ids += (ids.empty() ? "" : ",") + id;
  return {explicable && minimal.found && pick.cost <= minimal.cost,
          std::to_string(rows.size()) + " training rows; selected {" + ids + "} cost " +
              fmt("%g", pick.cost) + ", oracle minimal cost " + fmt("%g", minimal.cost) +
              (explicable ? ", oracle relabels all explicable" : ", oracle still finds inexplicable steps")};
}

// Shared between criteria 7 and 8.
Dataset g_export;

Dataset study_shaped_export(const fs::path& dir) {
  const DomainSpec spec = load_named_layout("warehouse");
  const Scenario sc = load_scenario(spec, kScenario);
  StudyConfig config;
  config.journal_dir = dir;
  config.traces = 8;
  StudyService service(config);
  SimulatedUser user(spec, sc.robot, sc.human);
  const std::map<std::string, bool> pretest{{"a", true}, {"b", true}, {"c", true}, {"d", true}};
  for (int p = 0; p < 38; ++p) {
    const SessionInfo info = service.create_session("warehouse", "p" + std::to_string(p),
                                                    derive_seed(2024, static_cast<std::uint64_t>(p)), pretest);
    while (const auto v = service.next(info.id)) {
      std::vector<std::string> ids;
      for (const Message& m : v->messages) ids.push_back(m.id);
      const MessageMask mask = mask_from_ids(spec.messages(), ids);
      service.post_label(info.id, v->transition_index, static_cast<int>(user.label(v->transition, mask)));
    }
  }
  return service.export_study("warehouse", false);
}

Verdict cv_protocol() {
  const fs::path dir = fs::temp_directory_path() / ("recon_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  g_export = study_shaped_export(dir);
  fs::remove_all(dir);
  const DomainSpec spec = load_named_layout("warehouse");
  const FeatureEncoder encoder(spec);
  const auto rows = encoder.encode(g_export.rows);

  const CrossValidation a = cross_validate(encoder.schema(), rows, 10, 2024);
  const CrossValidation b = cross_validate(encoder.schema(), rows, 10, 2024);
  const bool deterministic = a.fold_accuracy == b.fold_accuracy && a.mean_accuracy == b.mean_accuracy;

  // Separable fixture: same rows, labels from a fixed rule over two features.
  const std::size_t action_col = spec.feature_names().size();
  const std::size_t msg_col = action_col + 1;
  auto fixture = rows;
  for (auto& r : fixture) {
    r.label = r.values[action_col] == 1 && r.values[msg_col] == 0 ? Label::inexplicable : Label::explicable;
  }
  const CrossValidation sep = cross_validate(encoder.schema(), fixture, 10, 2024);
  const CrossValidation sep2 = cross_validate(encoder.schema(), fixture, 10, 99);
  const bool perfect = sep.mean_accuracy == 1.0 && sep2.mean_accuracy == 1.0;
  return {deterministic && perfect,
          std::to_string(rows.size()) + " rows from 38x8 traces; simulated-label 10-fold accuracy " +
              fmt("%.3f", a.mean_accuracy) + (deterministic ? " (repeatable)" : " (NOT repeatable)") +
              "; separable fixture " + fmt("%.3f", sep.mean_accuracy) + "/" + fmt("%.3f", sep2.mean_accuracy)};
}

Verdict round_trips() {
  const fs::path dir = fs::temp_directory_path() / ("recon_roundtrip_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const DomainSpec spec = load_named_layout("warehouse");
  bool ok = true;
  std::ostringstream detail;

  Dataset data = g_export;
  if (data.rows.empty()) {
    ExperimentConfig c = default_config("warehouse", 5);
    data = make_dataset(spec, generate_instance(spec, c, 0).rows);
  }
  save_dataset(dir / "d.jsonl", data);
  const Dataset d2 = load_dataset(dir / "d.jsonl");
  save_dataset(dir / "d2.jsonl", d2);
  const bool dataset_ok = d2 == data && read_text_file(dir / "d.jsonl") == read_text_file(dir / "d2.jsonl");
  detail << "dataset " << data.rows.size() << " rows " << (dataset_ok ? "exact" : "DIFFERS") << "; ";

  const FeatureEncoder enc(spec);
  const DecisionTree tree = train_tree(enc.schema(), enc.encode(data.rows), {}, 3);
  save_tree(dir / "t.json", tree);
  const DecisionTree t2 = load_tree(dir / "t.json");
  save_tree(dir / "t2.json", t2);
  const bool tree_ok = t2 == tree && t2.structure_hash() == tree.structure_hash() &&
                       read_text_file(dir / "t.json") == read_text_file(dir / "t2.json");
  detail << "tree " << tree.nodes.size() << " nodes " << (tree_ok ? "exact" : "DIFFERS") << "; ";

  ExperimentConfig c = default_config("four_rooms", 11);
  c.instances = 3;
  const Fig3Result fr = run_fig3(load_named_layout("four_rooms"), c);
  save_results(dir / "r.csv", fr.results);
  const ResultsFile r2 = load_results(dir / "r.csv");
  save_results(dir / "r2.csv", r2);
  const bool csv_ok = r2 == fr.results && read_text_file(dir / "r.csv") == read_text_file(dir / "r2.csv");
  detail << "results " << fr.results.rows.size() << " rows " << (csv_ok ? "exact" : "DIFFERS");
  bool layout_ok = true;
  for (const char* name : kDomains) {
    const DomainSpec a = load_named_layout(name);
    save_layout(dir / "l.json", a);
    const DomainSpec b = load_layout(dir / "l.json");
    layout_ok = layout_ok && layout_to_json(b) == read_text_file(dir / "l.json") &&
                b.build(b.schema().defaults()) == a.build(a.schema().defaults()) && b.messages() == a.messages();
  }
  detail << "; layouts " << (layout_ok ? "exact" : "DIFFER");
  ok = dataset_ok && tree_ok && csv_ok && layout_ok;
  fs::remove_all(dir);
  return {ok, detail.str()};
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "solver matches policy enumeration", 10, solver_oracle},
      {2, "trajectory probabilities normalize", 30, trajectory_mass},
      {3, "reconciliation algebra", 5, reconciliation_algebra},
      {4, "minimal explanation matches brute force", 120, minimality_oracle},
      {5, "training curves", 1800, training_curves},
      {6, "end-to-end explanation selection", 300, end_to_end_selection},
      {7, "cross-validation protocol", 600, cv_protocol},
      {8, "file round-trips", 120, round_trips},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && !only.contains(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.limit_seconds;
    const bool pass = out.pass && in_time;
    failed += pass ? 0 : 1;
    std::printf("[%s] %d. %s (%.1fs, limit %.0fs%s): %s\n", pass ? "PASS" : "FAIL", c.id, c.name, secs,
                c.limit_seconds, in_time ? "" : ", too slow", out.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}

#include "oracles.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "recon/random.hpp"

namespace oracle {

using recon::ActionId;
using recon::Label;
using recon::Mdp;
using recon::StateId;

Mdp random_mdp(std::uint64_t seed, int max_states, int max_actions) {
  recon::Rng rng(seed);
  const int ns = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(max_states)));
  const int na = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(max_actions)));
  std::vector<bool> terminal(static_cast<std::size_t>(ns), false);
  for (int s = 1; s < ns; ++s) terminal[static_cast<std::size_t>(s)] = rng.bernoulli(0.25);

  Mdp::Builder b(ns, na);
  for (int s = 0; s < ns; ++s) {
    if (terminal[static_cast<std::size_t>(s)]) {
      b.set_terminal(s);
      continue;
    }
    for (int a = 0; a < na; ++a) {
      std::vector<double> w(static_cast<std::size_t>(ns), 0.0);
      double total = 0.0;
      for (int n = 0; n < ns; ++n) {
        if (rng.bernoulli(0.6)) {
          w[static_cast<std::size_t>(n)] = 0.05 + rng.uniform();
          total += w[static_cast<std::size_t>(n)];
        }
      }
      if (total == 0.0) {
        const std::size_t n = rng.index(static_cast<std::size_t>(ns));
        w[n] = 1.0;
        total = 1.0;
      }
      for (int n = 0; n < ns; ++n) {
        if (w[static_cast<std::size_t>(n)] > 0.0) {
          b.add_transition(s, a, n, w[static_cast<std::size_t>(n)] / total,
                           2.0 * rng.uniform() - 1.0);
        }
      }
    }
  }
  b.set_discount(0.5 + 0.45 * rng.uniform());
  int live = 0;
  for (int s = 0; s < ns; ++s) live += terminal[static_cast<std::size_t>(s)] ? 0 : 1;
  for (int s = 0; s < ns; ++s) {
    if (!terminal[static_cast<std::size_t>(s)]) b.set_initial(s, 1.0 / live);
  }
  return b.build();
}

namespace {

// Fills a categorical group: entries in keep copy like's value, the rest get
// random (sometimes zero) weights scaled to the remaining mass.
void fill_group(const std::vector<recon::ParamId>& members, recon::Rng& rng,
                const recon::ParamAssignment* like, double keep, recon::ParamAssignment& out) {
  double kept = 0.0;
  std::vector<recon::ParamId> rest;
  for (const auto& id : members) {
    if (like != nullptr && rng.bernoulli(keep)) {
      out[id] = like->at(id);
      kept += like->at(id);
    } else {
      rest.push_back(id);
    }
  }
  if (rest.empty()) return;
  std::vector<double> w;
  double total = 0.0;
  for (std::size_t i = 0; i < rest.size(); ++i) {
    w.push_back(rng.bernoulli(0.25) ? 0.0 : rng.uniform());
    total += w.back();
  }
  const double remaining = std::max(0.0, 1.0 - kept);
  for (std::size_t i = 0; i < rest.size(); ++i) {
    out[rest[i]] = total > 0.0 ? w[i] / total * remaining
                               : remaining / static_cast<double>(rest.size());
  }
}

recon::ParamAssignment random_assignment(const recon::TabularFamily& fam, recon::Rng& rng,
                                         const recon::ParamAssignment* like, double keep) {
  const recon::ParamSchema& schema = fam.schema();
  recon::ParamAssignment out;
  for (const std::string& g : schema.groups()) fill_group(schema.group_members(g), rng, like, keep, out);
  for (const recon::ParamSpec& spec : schema.specs()) {
    if (!spec.group.empty()) continue;
    if (like != nullptr && rng.bernoulli(keep)) {
      out[spec.id] = like->at(spec.id);
    } else if (spec.kind == recon::ParamKind::discount) {
      out[spec.id] = 0.5 + 0.45 * rng.uniform();
    } else {
      out[spec.id] = 4.0 * rng.uniform() - 2.0;
    }
  }
  return out;
}

}  // namespace

std::set<recon::ParamId> random_subset(const recon::ParamSchema& schema, recon::Rng& rng,
                                       double p) {
  std::set<recon::ParamId> out;
  for (const recon::ParamSpec& spec : schema.specs()) {
    if (rng.bernoulli(p)) out.insert(spec.id);
  }
  return out;
}

ReconcileCase random_reconcile_case(std::uint64_t seed) {
  recon::Rng rng(seed);
  const int ns = 1 + static_cast<int>(rng.index(3));
  const int na = 1 + static_cast<int>(rng.index(2));
  ReconcileCase c{recon::TabularFamily(ns, na), {}, {}, {}};
  c.robot = random_assignment(c.family, rng, nullptr, 0.0);
  c.human = random_assignment(c.family, rng, &c.robot, 0.3);
  c.subset = random_subset(c.family.schema(), rng, rng.uniform());
  return c;
}

std::vector<double> evaluate_policy(const Mdp& mdp, const std::vector<int>& policy) {
  const int n = mdp.num_states();
  std::vector<Eigen::Triplet<double>> entries;
  Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
  for (StateId s = 0; s < n; ++s) {
    entries.emplace_back(s, s, 1.0);
    for (const auto& o : mdp.outcomes(s, policy[static_cast<std::size_t>(s)])) {
      entries.emplace_back(s, o.next, -mdp.discount() * o.probability);
      r(s) += o.probability * o.reward;
    }
  }
  Eigen::SparseMatrix<double> a(n, n);
  a.setFromTriplets(entries.begin(), entries.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(a);
  const Eigen::VectorXd v = lu.solve(r);
  return {v.data(), v.data() + n};
}

namespace {

Optimum with_q(const Mdp& mdp, std::vector<double> values) {
  Optimum out;
  out.num_actions = mdp.num_actions();
  out.q.assign(static_cast<std::size_t>(mdp.num_states() * mdp.num_actions()), 0.0);
  for (StateId s = 0; s < mdp.num_states(); ++s) {
    for (ActionId a = 0; a < mdp.num_actions(); ++a) {
      double q = 0.0;
      for (const auto& o : mdp.outcomes(s, a)) {
        q += o.probability * (o.reward + mdp.discount() * values[static_cast<std::size_t>(o.next)]);
      }
      out.q[static_cast<std::size_t>(s * mdp.num_actions() + a)] = q;
    }
  }
  out.values = std::move(values);
  return out;
}

}  // namespace

Optimum enumerate_policies(const Mdp& mdp) {
  const int n = mdp.num_states();
  const int na = mdp.num_actions();
  std::vector<int> policy(static_cast<std::size_t>(n), 0);
  std::vector<double> best(static_cast<std::size_t>(n), -std::numeric_limits<double>::infinity());
  std::size_t checked = 0;
  while (true) {
    const std::vector<double> v = evaluate_policy(mdp, policy);
    ++checked;
    for (int s = 0; s < n; ++s) best[static_cast<std::size_t>(s)] = std::max(best[static_cast<std::size_t>(s)], v[static_cast<std::size_t>(s)]);
    // odometer increment
    int pos = 0;
    while (pos < n && ++policy[static_cast<std::size_t>(pos)] == na) {
      policy[static_cast<std::size_t>(pos)] = 0;
      ++pos;
    }
    if (pos == n) break;
  }
  Optimum out = with_q(mdp, best);
  out.policies_checked = checked;
  return out;
}

Optimum policy_iteration(const Mdp& mdp) {
  const int n = mdp.num_states();
  std::vector<int> policy(static_cast<std::size_t>(n), 0);
  for (int round = 0; round < 10000; ++round) {
    Optimum cur = with_q(mdp, evaluate_policy(mdp, policy));
    bool changed = false;
    for (StateId s = 0; s < n; ++s) {
      int arg = policy[static_cast<std::size_t>(s)];
      for (ActionId a = 0; a < mdp.num_actions(); ++a) {
        if (cur.qsa(s, a) > cur.qsa(s, arg) + 1e-12) arg = a;
      }
      if (arg != policy[static_cast<std::size_t>(s)]) {
        policy[static_cast<std::size_t>(s)] = arg;
        changed = true;
      }
    }
    if (!changed) return cur;
  }
  return with_q(mdp, evaluate_policy(mdp, policy));
}

namespace {

bool near_max(const Optimum& opt, StateId s, ActionId a, double eps) {
  double best = -std::numeric_limits<double>::infinity();
  for (ActionId b = 0; b < opt.num_actions; ++b) best = std::max(best, opt.qsa(s, b));
  return opt.qsa(s, a) >= best - eps;
}

}  // namespace

namespace {

bool policy_complete(const Mdp& robot, const Optimum& r, const Mdp& reconciled, double eps) {
  const Optimum h = policy_iteration(reconciled);
  for (StateId s = 0; s < robot.num_states(); ++s) {
    if (robot.is_terminal(s)) continue;
    // robot's greedy action, lowest index among maxima
    ActionId pick = 0;
    for (ActionId a = 1; a < robot.num_actions(); ++a) {
      if (r.qsa(s, a) > r.qsa(s, pick) + 1e-9) pick = a;
    }
    if (!near_max(h, s, pick, eps)) return false;
  }
  return true;
}

}  // namespace

bool policy_complete(const Mdp& robot, const Mdp& reconciled, double eps) {
  return policy_complete(robot, policy_iteration(robot), reconciled, eps);
}

bool behavior_complete(const Mdp& reconciled, const std::vector<recon::Trajectory>& traces,
                       double eps, double delta) {
  const Optimum h = policy_iteration(reconciled);
  for (const recon::Trajectory& tr : traces) {
    std::map<StateId, ActionId> seen;
    double p = 1.0;
    for (const recon::Transition& t : tr.steps) {
      const auto [it, fresh] = seen.emplace(t.state, t.action);
      if (!fresh && it->second != t.action) return false;
      if (!near_max(h, t.state, t.action, eps)) return false;
      p *= reconciled.transition(t.state, t.action, t.next);
    }
    if (!(p > delta)) return false;
  }
  return true;
}

BruteForceResult brute_force_explanation(const recon::ModelFamily& family,
                                         const recon::ParamAssignment& human,
                                         const recon::ParamAssignment& robot,
                                         const std::vector<recon::Message>& catalog,
                                         recon::ExplanationMode mode,
                                         const std::vector<recon::Trajectory>& traces, double eps,
                                         double delta) {
  const Mdp robot_mdp = family.build(robot);
  const Optimum robot_opt = policy_iteration(robot_mdp);
  BruteForceResult out;
  std::pair<double, std::vector<std::string>> best{std::numeric_limits<double>::infinity(), {}};
  const std::size_t n = catalog.size();
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    std::set<recon::ParamId> ids;
    std::vector<std::string> names;
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (((mask >> i) & 1U) == 0) continue;
      names.push_back(catalog[i].id);
      cost += catalog[i].cost;
      for (const auto& [id, v] : catalog[i].params) ids.insert(id);
    }
    std::sort(names.begin(), names.end());
    const Mdp m = family.build(recon::reconcile(family.schema(), human, robot, ids));
    const bool ok = mode == recon::ExplanationMode::policy ? policy_complete(robot_mdp, robot_opt, m, eps)
                                                          : behavior_complete(m, traces, eps, delta);
    if (!ok) continue;
    ++out.complete_subsets;
    std::pair<double, std::vector<std::string>> key{cost, names};
    if (!out.found || key < best) best = key;
    out.found = true;
  }
  out.cost = out.found ? best.first : 0.0;
  out.chosen = best.second;
  return out;
}

ReferenceTree::ReferenceTree(const recon::FeatureSchema& schema,
                             const std::vector<recon::FeatureRow>& rows, std::size_t min_leaf,
                             std::size_t max_depth)
    : schema_(schema), min_leaf_(min_leaf), max_depth_(max_depth) {
  std::vector<std::size_t> all(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) all[i] = i;
  grow(rows, all, 0);
}

namespace {

double impurity(double bad, double good) {
  const double n = bad + good;
  if (n == 0.0) return 0.0;
  return 1.0 - (bad / n) * (bad / n) - (good / n) * (good / n);
}

}  // namespace

int ReferenceTree::grow(const std::vector<recon::FeatureRow>& rows,
                        std::vector<std::size_t> members, std::size_t depth) {
  double bad = 0;
  double good = 0;
  for (std::size_t i : members) (rows[i].label == Label::explicable ? good : bad) += 1;
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{});
  nodes_.back().label = bad > good ? Label::inexplicable : Label::explicable;
  if (bad == 0 || good == 0 || depth >= max_depth_ || members.size() < 2 * min_leaf_) return id;

  const double total = bad + good;
  const double parent = impurity(bad, good);
  double best_gain = -1.0;
  int best_feature = -1;
  bool best_cat = false;
  double best_cut = 0.0;
  for (std::size_t f = 0; f < schema_.size(); ++f) {
    std::set<int> values;
    for (std::size_t i : members) values.insert(rows[i].values[f]);
    if (values.size() < 2) continue;
    const bool cat = schema_.kinds[f] == recon::FeatureKind::categorical;
    std::vector<double> cuts;
    if (cat) {
      for (int v : values) cuts.push_back(v);
    } else {
      for (auto it = values.begin(); std::next(it) != values.end(); ++it) {
        cuts.push_back((static_cast<double>(*it) + static_cast<double>(*std::next(it))) / 2.0);
      }
    }
    for (double cut : cuts) {
      double lb = 0, lg = 0, rb = 0, rg = 0;
      for (std::size_t i : members) {
        const int v = rows[i].values[f];
        const bool left = cat ? v == static_cast<int>(cut) : v <= cut;
        const bool ok = rows[i].label == Label::explicable;
        if (left) {
          (ok ? lg : lb) += 1;
        } else {
          (ok ? rg : rb) += 1;
        }
      }
      const double nl = lb + lg;
      const double nr = rb + rg;
      if (nl < static_cast<double>(min_leaf_) || nr < static_cast<double>(min_leaf_) || nl == 0 || nr == 0) continue;
      const double gain = parent - nl / total * impurity(lb, lg) - nr / total * impurity(rb, rg);
      if (gain > best_gain + 1e-12) {
        best_gain = gain;
        best_feature = static_cast<int>(f);
        best_cat = cat;
        best_cut = cut;
      }
    }
  }
  if (best_feature < 0) return id;

  std::vector<std::size_t> left;
  std::vector<std::size_t> right;
  for (std::size_t i : members) {
    const int v = rows[i].values[static_cast<std::size_t>(best_feature)];
    const bool l = best_cat ? v == static_cast<int>(best_cut) : v <= best_cut;
    (l ? left : right).push_back(i);
  }
  const int l = grow(rows, std::move(left), depth + 1);
  const int r = grow(rows, std::move(right), depth + 1);
  Node& node = nodes_[static_cast<std::size_t>(id)];
  node.feature = best_feature;
  node.categorical = best_cat;
  node.cut = best_cut;
  node.left = l;
  node.right = r;
  return id;
}

Label ReferenceTree::predict(const std::vector<int>& values) const {
  std::size_t id = 0;
  while (nodes_[id].feature >= 0) {
    const Node& n = nodes_[id];
    const int v = values[static_cast<std::size_t>(n.feature)];
    const bool left = n.categorical ? v == static_cast<int>(n.cut) : v <= n.cut;
    id = static_cast<std::size_t>(left ? n.left : n.right);
  }
  return nodes_[id].label;
}

}  // namespace oracle

#include "recon/sim_user.hpp"

#include <set>

#include "recon/error.hpp"

namespace recon {

SimulatedUser::SimulatedUser(const DomainSpec& spec, ParamAssignment robot, ParamAssignment hidden,
                             CheckOptions check)
    : spec_(&spec), robot_(std::move(robot)), hidden_(std::move(hidden)), check_(check) {
  spec.schema().validate(robot_);
  spec.schema().validate(hidden_);
}

std::vector<ParamId> SimulatedUser::mismatched() const {
  std::vector<ParamId> out;
  for (const auto& [id, value] : hidden_) {
    if (robot_.at(id) != value) out.push_back(id);
  }
  return out;
}

void SimulatedUser::set_messages(MessageMask mask) {
  if (mask != mask_) current_ = nullptr;
  mask_ = mask;
}

const SolvedModel& SimulatedUser::model() {
  if (current_ != nullptr) return *current_;
  auto it = solved_.find(mask_);
  if (it == solved_.end()) {
    const std::vector<Message> picked = select_messages_by_mask(spec_->messages(), mask_);
    const ParamAssignment params =
        reconcile(spec_->schema(), hidden_, robot_, message_param_ids(picked));
    it = solved_.emplace(mask_, std::make_unique<SolvedModel>(solve_model(spec_->build(params))))
             .first;
  }
  current_ = it->second.get();
  return *current_;
}

Label SimulatedUser::label(const Transition& t) {
  const SolvedModel& m = model();
  if (!is_optimal_action(m.solution.q, t.state, t.action, check_.eps_opt)) {
    return Label::inexplicable;
  }
  if (!(m.mdp.transition(t.state, t.action, t.next) > check_.delta)) return Label::inexplicable;
  return Label::explicable;
}

Label SimulatedUser::label(const Transition& t, MessageMask mask) {
  set_messages(mask);
  return label(t);
}

SimulatedUser make_user(const DomainSpec& spec, const ParamAssignment& robot, std::size_t k,
                        std::uint64_t seed, CheckOptions check) {
  std::vector<std::pair<ParamId, std::vector<double>>> eligible;
  for (auto& [id, values] : spec.param_space()) {
    if (!spec.schema().at(id).group.empty()) continue;
    std::vector<double> others;
    for (double v : values) {
      if (v != robot.at(id)) others.push_back(v);
    }
    if (!others.empty()) eligible.emplace_back(id, std::move(others));
  }
  if (k > eligible.size()) {
    throw ConfigError("cannot mismatch " + std::to_string(k) + " parameters; only " +
                      std::to_string(eligible.size()) + " have alternative values");
  }
  Rng rng(seed);
  rng.shuffle(std::span(eligible));
  ParamAssignment hidden = robot;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& [id, others] = eligible[i];
    hidden[id] = others[rng.index(others.size())];
  }
  return SimulatedUser(spec, robot, std::move(hidden), check);
}

MessageMask MessageSampler::draw(Rng& rng, std::size_t catalog_size) const {
  if (catalog_size > kMaxCatalogSize) throw ConfigError("catalog larger than 32 messages");
  if (kind == Kind::uniform) {
    MessageMask mask = 0;
    for (std::size_t i = 0; i < catalog_size; ++i) {
      if (rng.bernoulli(0.5)) mask |= MessageMask{1} << i;
    }
    return mask;
  }
  if (size > catalog_size) throw ConfigError("fixed message subset larger than the catalog");
  std::vector<std::size_t> order(catalog_size);
  for (std::size_t i = 0; i < catalog_size; ++i) order[i] = i;
  rng.shuffle(std::span(order));
  MessageMask mask = 0;
  for (std::size_t i = 0; i < size; ++i) mask |= MessageMask{1} << order[i];
  return mask;
}

std::vector<LabeledTransition> simulate_session(SimulatedUser& user, const SolvedModel& robot,
                                                const SessionOptions& options, Rng& rng) {
  std::vector<LabeledTransition> rows;
  const std::size_t catalog = user.spec().messages().size();
  for (std::size_t i = 0; i < options.n_traces; ++i) {
    const StateId start = sample_state(robot.mdp.initial_distribution(), rng);
    const Trajectory traj =
        sample_trajectory(robot.mdp, robot.policy, start, options.trace_len_limit, rng);
    const MessageMask mask = options.sampler.draw(rng, catalog);
    user.set_messages(mask);
    for (const Transition& t : traj.steps) rows.push_back({t, mask, user.label(t)});
  }
  return rows;
}

std::vector<LabeledTransition> simulate_session(SimulatedUser& user, const SolvedModel& robot,
                                                const SessionOptions& options,
                                                std::uint64_t seed) {
  Rng rng(seed);
  return simulate_session(user, robot, options, rng);
}

std::vector<LabeledTransition> dedupe(const std::vector<LabeledTransition>& rows) {
  std::set<std::pair<Transition, MessageMask>> seen;
  std::vector<LabeledTransition> out;
  for (const LabeledTransition& row : rows) {
    if (seen.emplace(row.transition, row.messages).second) out.push_back(row);
  }
  return out;
}

}  // namespace recon

#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <vector>

#include "recon/domain.hpp"
#include "recon/reconciliation.hpp"

namespace recon {

enum class Label : int { inexplicable = 0, explicable = 1 };

struct LabeledTransition {
  Transition transition;
  MessageMask messages = 0;
  Label label = Label::explicable;

  auto operator<=>(const LabeledTransition&) const = default;
};

/// A user whose model differs from the robot's in hidden parameter values.
/// Messages move the user towards the robot model; labels follow the
/// optimality-and-support rule against the reconciled model.
class SimulatedUser {
 public:
  SimulatedUser(const DomainSpec& spec, ParamAssignment robot, ParamAssignment hidden,
                CheckOptions check = {});

  const DomainSpec& spec() const noexcept { return *spec_; }
  const ParamAssignment& hidden() const noexcept { return hidden_; }
  const ParamAssignment& robot() const noexcept { return robot_; }
  /// Parameters where hidden and robot values differ.
  std::vector<ParamId> mismatched() const;

  void set_messages(MessageMask mask);
  MessageMask messages() const noexcept { return mask_; }

  /// The reconciled model under the current message set.
  const SolvedModel& model();

  /// Inexplicable iff a is outside the reconciled optimal set at s, or the
  /// reconciled T(s, a, s') <= delta.
  Label label(const Transition& t);
  Label label(const Transition& t, MessageMask mask);

 private:
  const DomainSpec* spec_;
  ParamAssignment robot_;
  ParamAssignment hidden_;
  CheckOptions check_;
  MessageMask mask_ = 0;
  const SolvedModel* current_ = nullptr;
  std::map<MessageMask, std::unique_ptr<SolvedModel>> solved_;
};

/// Samples k parameters (never grouped ones, never ones whose only candidate
/// is the robot value) and gives each a random non-robot candidate value.
/// Throws ConfigError when fewer than k parameters qualify.
SimulatedUser make_user(const DomainSpec& spec, const ParamAssignment& robot, std::size_t k,
                        std::uint64_t seed, CheckOptions check = {});

/// How each trace's message subset is drawn.
struct MessageSampler {
  enum class Kind { uniform, fixed_size };
  Kind kind = Kind::uniform;
  std::size_t size = 0;  // fixed_size only

  MessageMask draw(Rng& rng, std::size_t catalog_size) const;
};

struct SessionOptions {
  std::size_t n_traces = 0;
  MessageSampler sampler;
  std::size_t trace_len_limit = 40;
};

/// Samples traces from the robot policy (starts drawn from the robot's initial
/// distribution), draws a message subset per trace, labels every transition.
std::vector<LabeledTransition> simulate_session(SimulatedUser& user, const SolvedModel& robot,
                                                const SessionOptions& options, Rng& rng);
std::vector<LabeledTransition> simulate_session(SimulatedUser& user, const SolvedModel& robot,
                                                const SessionOptions& options,
                                                std::uint64_t seed);

/// Keeps the first row for every (transition, message mask) pair, preserving
/// order.
std::vector<LabeledTransition> dedupe(const std::vector<LabeledTransition>& rows);

}  // namespace recon

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "recon/domain.hpp"
#include "recon/error.hpp"
#include "recon/io.hpp"
#include "recon/reconciliation.hpp"
#include "recon/sim_user.hpp"

namespace recon {

class SessionNotFound : public Error {
 public:
  using Error::Error;
};

/// A label was posted for a transition other than the current one.
class CursorConflict : public Error {
 public:
  using Error::Error;
};

class InvalidLabel : public Error {
 public:
  using Error::Error;
};

class PretestFailed : public Error {
 public:
  using Error::Error;
};

struct PretestFact {
  std::string id;
  std::string text;
  bool answer = true;
};

/// The instruction facts a participant must confirm before labeling.
const std::vector<PretestFact>& pretest_facts();

struct StudyConfig {
  std::filesystem::path journal_dir;
  std::size_t traces = 8;
  std::size_t trace_len = 40;
  std::string robot_overrides = "{}";
};

struct SessionInfo {
  std::string id;
  std::string domain;
  std::string participant;
  std::uint64_t seed = 0;
  std::size_t traces = 0;
  std::size_t total_transitions = 0;
  std::size_t cursor = 0;
  bool finished = false;
  /// Catalog ids in the order they are disclosed.
  std::vector<std::string> message_order;
};

struct CellView {
  int x = 0;
  int y = 0;
  std::string kind;
  std::string label;
};

/// Everything the UI needs to render the current transition.
struct NextView {
  SessionInfo session;
  std::size_t transition_index = 0;
  std::size_t trace_index = 0;
  std::size_t step_index = 0;
  std::size_t trace_length = 0;
  Transition transition;
  std::string action;
  GridPos from;
  GridPos to;
  std::vector<int> from_features;
  std::vector<int> to_features;
  bool slipped = false;
  /// Robot positions of the current trace up to and including `from`.
  std::vector<GridPos> path;
  std::vector<Message> messages;  // display order
  int width = 0;
  int height = 0;
  std::vector<CellView> cells;
};

struct LabelAck {
  std::size_t transition_index = 0;
  bool replay = false;
  std::size_t cursor = 0;
  bool finished = false;
};

/// Hosts labeling sessions. Every session has an append-only JSONL journal
/// (header line, then one line per label, fsync'd before acknowledging) in
/// journal_dir; existing journals are replayed on construction.
///
/// Trace 0 shows no messages. Trace t >= 1 shows the first t messages of a
/// per-session random permutation of the catalog, so disclosure is cumulative.
/// All operations are thread-safe; operations on one session are serialized.
class StudyService {
 public:
  explicit StudyService(StudyConfig config);
  ~StudyService();

  /// Creating the same (domain, participant, seed) again returns the existing
  /// session. Throws PretestFailed when any answer is missing or wrong, and
  /// ConfigError for an unknown domain.
  SessionInfo create_session(const std::string& domain, const std::string& participant,
                             std::uint64_t seed, const std::map<std::string, bool>& pretest);

  SessionInfo info(const std::string& id) const;
  /// nullopt once every transition is labeled.
  std::optional<NextView> next(const std::string& id) const;
  /// Throws CursorConflict when index is ahead of the cursor or re-labels a
  /// past transition differently, and InvalidLabel for values other than 0/1.
  /// Re-posting an identical past label is acknowledged as a replay.
  LabelAck post_label(const std::string& id, std::size_t index, int label);

  std::vector<SessionInfo> sessions() const;

  /// Labeled rows of every session, ordered by session id. With
  /// drop_no_first_trace_inexplicable, sessions whose first trace has no
  /// inexplicable label are left out.
  Dataset export_study(const std::string& domain, bool drop_no_first_trace_inexplicable) const;

 private:
  struct Session;
  struct DomainEntry;

  const DomainEntry& domain(const std::string& name) const;
  std::shared_ptr<Session> find(const std::string& id) const;
  std::shared_ptr<Session> build_session(const std::string& domain, const std::string& participant,
                                         std::uint64_t seed) const;
  void load_journals();

  StudyConfig config_;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::unique_ptr<DomainEntry>> domains_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

std::string to_json(const SessionInfo& info);
std::string to_json(const NextView& view);
std::string to_json(const LabelAck& ack);
std::string pretest_json();

}  // namespace recon

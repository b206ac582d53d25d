#include "recon/study.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace recon {

using nlohmann::json;

const std::vector<PretestFact>& pretest_facts() {
  static const std::vector<PretestFact> facts = {
      {"a", "The robot cannot pass through racks.", true},
      {"b", "The robot starts every task with a full battery.", true},
      {"c", "Visiting station #1 does not recharge or slow down the robot.", true},
      {"d", "The robot tries to finish its task along the shortest route it knows.", true},
  };
  return facts;
}

struct StudyService::DomainEntry {
  DomainSpec spec;
  ParamAssignment robot;
  SolvedModel robot_model;
};

struct StudyService::Session {
  std::mutex mutex;
  SessionInfo info;
  const DomainEntry* domain = nullptr;
  std::vector<Trajectory> traces;
  std::vector<MessageMask> masks;
  std::vector<std::size_t> order;
  std::vector<std::pair<std::size_t, std::size_t>> flat;  // (trace, step)
  std::vector<Label> labels;
  std::filesystem::path journal;
  int fd = -1;

  ~Session() {
    if (fd >= 0) ::close(fd);
  }

  void append(const std::string& line) {
    if (fd < 0) {
      fd = ::open(journal.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
      if (fd < 0) throw Error("cannot open journal " + journal.string() + ": " + std::strerror(errno));
    }
    const std::string data = line + "\n";
    std::size_t done = 0;
    while (done < data.size()) {
      const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error("journal write failed: " + std::string(std::strerror(errno)));
      }
      done += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0) throw Error("journal fsync failed: " + std::string(std::strerror(errno)));
  }
};

namespace {

std::string sanitize(const std::string& text) {
  std::string out;
  for (char c : text) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-';
    out.push_back(ok ? c : '_');
  }
  return out.empty() ? "anon" : out;
}

json bits_json(MessageMask mask, std::size_t width) {
  json bits = json::array();
  for (std::size_t i = 0; i < width; ++i) bits.push_back(mask_has(mask, i) ? 1 : 0);
  return bits;
}

}  // namespace

StudyService::StudyService(StudyConfig config) : config_(std::move(config)) {
  if (config_.traces == 0) throw ConfigError("a session needs at least one trace");
  std::filesystem::create_directories(config_.journal_dir);
  load_journals();
}

StudyService::~StudyService() = default;

const StudyService::DomainEntry& StudyService::domain(const std::string& name) const {
  std::lock_guard lock(mutex_);
  auto it = domains_.find(name);
  if (it != domains_.end()) return *it->second;
  if (name.empty() || name.find('/') != std::string::npos || name.find('.') != std::string::npos) {
    throw ConfigError("unknown domain '" + name + "'");
  }
  DomainSpec spec = [&] {
    try {
      return load_named_layout(name);
    } catch (const ConfigError&) {
      throw ConfigError("unknown domain '" + name + "'");
    }
  }();
  ParamAssignment robot = params_from_json(spec, config_.robot_overrides, spec.schema().defaults());
  SolvedModel model = solve_model(spec.build(robot));
  auto entry = std::make_unique<DomainEntry>(
      DomainEntry{std::move(spec), std::move(robot), std::move(model)});
  return *domains_.emplace(name, std::move(entry)).first->second;
}

std::shared_ptr<StudyService::Session> StudyService::build_session(const std::string& domain_name,
                                                                   const std::string& participant,
                                                                   std::uint64_t seed) const {
  const DomainEntry& d = domain(domain_name);
  auto s = std::make_shared<Session>();
  s->domain = &d;
  s->info.id = sanitize(domain_name) + "-" + sanitize(participant) + "-" + std::to_string(seed);
  s->info.domain = domain_name;
  s->info.participant = participant;
  s->info.seed = seed;
  s->info.traces = config_.traces;

  Rng rng(seed);
  const std::size_t catalog = d.spec.messages().size();
  s->order.resize(catalog);
  for (std::size_t i = 0; i < catalog; ++i) s->order[i] = i;
  rng.shuffle(std::span(s->order));
  for (std::size_t i : s->order) s->info.message_order.push_back(d.spec.messages()[i].id);

  for (std::size_t t = 0; t < config_.traces; ++t) {
    Trajectory traj;
    for (int attempt = 0; attempt < 100 && traj.steps.empty(); ++attempt) {
      const StateId start = sample_state(d.robot_model.mdp.initial_distribution(), rng);
      traj = sample_trajectory(d.robot_model.mdp, d.robot_model.policy, start, config_.trace_len, rng);
    }
    if (traj.steps.empty()) throw Error("could not sample a nonempty trace");
    MessageMask mask = 0;
    for (std::size_t i = 0; i < std::min(t, catalog); ++i) mask |= MessageMask{1} << s->order[i];
    for (std::size_t k = 0; k < traj.steps.size(); ++k) s->flat.emplace_back(t, k);
    s->traces.push_back(std::move(traj));
    s->masks.push_back(mask);
  }
  s->info.total_transitions = s->flat.size();
  s->journal = config_.journal_dir / (s->info.id + ".jsonl");
  return s;
}

SessionInfo StudyService::create_session(const std::string& domain_name,
                                          const std::string& participant, std::uint64_t seed,
                                          const std::map<std::string, bool>& pretest) {
  bool passed = true;
  for (const PretestFact& fact : pretest_facts()) {
    auto it = pretest.find(fact.id);
    if (it == pretest.end() || it->second != fact.answer) passed = false;
  }
  {
    json record = {{"kind", "pretest"}, {"participant", participant}, {"passed", passed},
                   {"answers", pretest}};
    std::ofstream out(config_.journal_dir / "pretest.log", std::ios::app);
    out << record.dump() << '\n';
  }
  if (!passed) throw PretestFailed("pretest not passed by participant '" + participant + "'");

  std::shared_ptr<Session> fresh = build_session(domain_name, participant, seed);
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(fresh->info.id);
  if (it != sessions_.end()) {
    std::lock_guard session_lock(it->second->mutex);
    return it->second->info;
  }
  json header = {{"schema_version", kFileSchemaVersion},
                 {"kind", "session"},
                 {"id", fresh->info.id},
                 {"domain", domain_name},
                 {"participant", participant},
                 {"seed", seed},
                 {"traces", config_.traces},
                 {"trace_len", config_.trace_len}};
  fresh->append(header.dump());
  sessions_.emplace(fresh->info.id, fresh);
  return fresh->info;
}

std::shared_ptr<StudyService::Session> StudyService::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw SessionNotFound("no session '" + id + "'");
  return it->second;
}

SessionInfo StudyService::info(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  return s->info;
}

std::optional<NextView> StudyService::next(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  if (s->info.finished) return std::nullopt;
  const DomainSpec& spec = s->domain->spec;
  NextView v;
  v.session = s->info;
  v.transition_index = s->info.cursor;
  const auto [trace, step] = s->flat[s->info.cursor];
  v.trace_index = trace;
  v.step_index = step;
  const Trajectory& traj = s->traces[trace];
  v.trace_length = traj.steps.size();
  v.transition = traj.steps[step];
  v.action = spec.actions()[static_cast<std::size_t>(v.transition.action)];
  v.from = spec.position(v.transition.state);
  v.to = spec.position(v.transition.next);
  v.from_features = spec.features(v.transition.state).values;
  v.to_features = spec.features(v.transition.next).values;
  const Mdp& mdp = s->domain->robot_model.mdp;
  v.slipped = v.transition.next == v.transition.state && v.transition.action < 4 &&
              mdp.transition(v.transition.state, v.transition.action, v.transition.state) < 1.0;
  for (std::size_t k = 0; k <= step; ++k) v.path.push_back(spec.position(traj.steps[k].state));
  for (std::size_t i : s->order) {
    if (mask_has(s->masks[trace], i)) v.messages.push_back(spec.messages()[i]);
  }
  v.width = spec.width();
  v.height = spec.height();
  for (const CellAnnotation& c : spec.rendered_cells(s->domain->robot)) {
    v.cells.push_back({c.pos.x, c.pos.y, std::string(to_string(c.kind)), c.label});
  }
  return v;
}

LabelAck StudyService::post_label(const std::string& id, std::size_t index, int label) {
  if (label != 0 && label != 1) throw InvalidLabel("label must be 0 or 1");
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  LabelAck ack;
  ack.transition_index = index;
  if (index < s->info.cursor) {
    if (s->labels[index] != static_cast<Label>(label)) {
      throw CursorConflict("transition " + std::to_string(index) + " already has a different label");
    }
    ack.replay = true;
    ack.cursor = s->info.cursor;
    ack.finished = s->info.finished;
    return ack;
  }
  if (index > s->info.cursor || s->info.finished) {
    throw CursorConflict("expected a label for transition " + std::to_string(s->info.cursor) +
                         ", got " + std::to_string(index));
  }
  const auto [trace, step] = s->flat[index];
  const Transition& t = s->traces[trace].steps[step];
  json line = {{"index", index},
               {"trace", trace},
               {"s", t.state},
               {"a", t.action},
               {"next", t.next},
               {"messages", bits_json(s->masks[trace], s->domain->spec.messages().size())},
               {"label", label}};
  s->append(line.dump());
  s->labels.push_back(static_cast<Label>(label));
  ++s->info.cursor;
  s->info.finished = s->info.cursor == s->info.total_transitions;
  ack.cursor = s->info.cursor;
  ack.finished = s->info.finished;
  return ack;
}

std::vector<SessionInfo> StudyService::sessions() const {
  std::vector<std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(mutex_);
    for (const auto& entry : sessions_) all.push_back(entry.second);
  }
  std::vector<SessionInfo> out;
  for (const auto& s : all) {
    std::lock_guard lock(s->mutex);
    out.push_back(s->info);
  }
  return out;
}

Dataset StudyService::export_study(const std::string& domain_name,
                                   bool drop_no_first_trace_inexplicable) const {
  const DomainEntry& d = domain(domain_name);
  Dataset data = make_dataset(d.spec, {});
  std::vector<std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(mutex_);
    for (const auto& entry : sessions_) all.push_back(entry.second);
  }
  for (const auto& s : all) {
    std::lock_guard lock(s->mutex);
    if (s->info.domain != domain_name) continue;
    if (drop_no_first_trace_inexplicable) {
      bool flagged = false;
      for (std::size_t i = 0; i < s->labels.size(); ++i) {
        if (s->flat[i].first == 0 && s->labels[i] == Label::inexplicable) flagged = true;
      }
      if (!flagged) continue;
    }
    for (std::size_t i = 0; i < s->labels.size(); ++i) {
      const auto [trace, step] = s->flat[i];
      data.rows.push_back({s->traces[trace].steps[step], s->masks[trace], s->labels[i]});
    }
  }
  return data;
}

void StudyService::load_journals() {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(config_.journal_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    std::ifstream in(path);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
      if (!line.empty()) lines.push_back(line);
    }
    if (lines.empty()) continue;
    json header;
    try {
      header = json::parse(lines[0]);
    } catch (const json::parse_error&) {
      throw ParseError("corrupt journal header in " + path.string(), 1);
    }
    if (header.value("kind", "") != "session") continue;
    if (header.value("schema_version", 0) != kFileSchemaVersion) {
      throw VersionMismatch("journal " + path.string() + " has an unsupported schema_version");
    }
    StudyConfig saved = config_;
    config_.traces = header.at("traces").get<std::size_t>();
    config_.trace_len = header.at("trace_len").get<std::size_t>();
    auto s = build_session(header.at("domain").get<std::string>(),
                           header.at("participant").get<std::string>(),
                           header.at("seed").get<std::uint64_t>());
    config_ = saved;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      json row;
      try {
        row = json::parse(lines[i]);
      } catch (const json::parse_error&) {
        if (i + 1 == lines.size()) break;  // torn final write
        throw ParseError("corrupt journal line in " + path.string(), i + 1);
      }
      if (row.at("index").get<std::size_t>() != s->labels.size()) {
        throw ParseError("journal labels out of order in " + path.string(), i + 1);
      }
      s->labels.push_back(static_cast<Label>(row.at("label").get<int>()));
    }
    s->info.cursor = s->labels.size();
    s->info.finished = s->info.cursor == s->info.total_transitions;
    sessions_.emplace(s->info.id, s);
  }
}

std::string to_json(const SessionInfo& info) {
  return json{{"schema_version", kFileSchemaVersion},
              {"session_id", info.id},
              {"domain", info.domain},
              {"participant", info.participant},
              {"seed", info.seed},
              {"traces", info.traces},
              {"total_transitions", info.total_transitions},
              {"cursor", info.cursor},
              {"finished", info.finished}}
      .dump();
}

std::string to_json(const NextView& v) {
  auto pos = [](GridPos p) { return json::array({p.x, p.y}); };
  json path = json::array();
  for (GridPos p : v.path) path.push_back(pos(p));
  json messages = json::array();
  for (const Message& m : v.messages) messages.push_back({{"id", m.id}, {"text", m.text}});
  json cells = json::array();
  for (const CellView& c : v.cells) {
    cells.push_back({{"x", c.x}, {"y", c.y}, {"kind", c.kind}, {"label", c.label}});
  }
  return json{{"schema_version", kFileSchemaVersion},
              {"status", "active"},
              {"session_id", v.session.id},
              {"transition_index", v.transition_index},
              {"total_transitions", v.session.total_transitions},
              {"trace_index", v.trace_index},
              {"trace_count", v.session.traces},
              {"step_index", v.step_index},
              {"trace_length", v.trace_length},
              {"transition",
               {{"s", v.transition.state},
                {"a", v.transition.action},
                {"next", v.transition.next},
                {"action", v.action},
                {"from", pos(v.from)},
                {"to", pos(v.to)},
                {"from_features", v.from_features},
                {"to_features", v.to_features},
                {"slipped", v.slipped}}},
              {"path", std::move(path)},
              {"messages", std::move(messages)},
              {"grid", {{"width", v.width}, {"height", v.height}, {"cells", std::move(cells)}}}}
      .dump();
}

std::string to_json(const LabelAck& ack) {
  return json{{"transition_index", ack.transition_index},
              {"replay", ack.replay},
              {"cursor", ack.cursor},
              {"finished", ack.finished}}
      .dump();
}

std::string pretest_json() {
  json facts = json::array();
  for (const PretestFact& f : pretest_facts()) facts.push_back({{"id", f.id}, {"text", f.text}});
  return json{{"schema_version", kFileSchemaVersion}, {"facts", std::move(facts)}}.dump();
}

}  // namespace recon

#include "recon/domain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "recon/error.hpp"

namespace recon {

using nlohmann::json;

namespace {

constexpr int kUp = 0;
constexpr int kDown = 1;
constexpr int kLeft = 2;
constexpr int kRight = 3;
constexpr int kPickup = 4;
constexpr int kDropoff = 5;

const std::vector<std::string> kMoveActions = {"up", "down", "left", "right"};
const std::vector<std::string> kTaxiActions = {"up", "down", "left", "right", "pickup", "dropoff"};

struct RoleInfo {
  std::string_view role;
  ParamKind kind;
  bool position;
  bool repeatable;
};

// Every role the dynamics understand, and the theta component it edits.
constexpr RoleInfo kRoles[] = {
    {"step_cost", ParamKind::reward, false, false},
    {"discount", ParamKind::discount, false, false},
    {"slip_prob", ParamKind::transition, false, true},
    {"outcome_stay", ParamKind::transition, false, true},
    {"outcome_move", ParamKind::transition, false, true},
    {"box_position", ParamKind::transition, true, false},
    {"station_position", ParamKind::transition, true, false},
    {"delivery_reward", ParamKind::reward, false, false},
    {"inspection_penalty", ParamKind::reward, false, false},
    {"goal_position", ParamKind::reward, true, false},
    {"goal_reward", ParamKind::reward, false, false},
    {"penalty_position", ParamKind::reward, true, false},
    {"penalty_reward", ParamKind::reward, false, true},
    {"passenger_start", ParamKind::transition, false, false},
    {"destination", ParamKind::transition, false, false},
    {"dropoff_reward", ParamKind::reward, false, false},
    {"illegal_action_penalty", ParamKind::reward, false, false},
};

const RoleInfo* find_role(std::string_view role) {
  for (const RoleInfo& info : kRoles) {
    if (info.role == role) return &info;
  }
  return nullptr;
}

CellKind parse_cell_kind(const std::string& text, const std::string& field) {
  static const std::map<std::string, CellKind> kinds = {
      {"floor", CellKind::floor}, {"wall", CellKind::wall},       {"rack", CellKind::rack},
      {"slip", CellKind::slip},   {"chute", CellKind::chute},     {"goal", CellKind::goal},
      {"penalty", CellKind::penalty}, {"depot", CellKind::depot}, {"station", CellKind::station},
  };
  auto it = kinds.find(text);
  if (it == kinds.end()) throw ParseError("unknown cell annotation '" + text + "'", 0, field);
  return it->second;
}

std::size_t line_of(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

template <typename T>
T required(const json& obj, const char* key, const std::string& field) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw ParseError("missing required field", 0, field.empty() ? key : field + "." + key);
  }
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("wrong type: ") + e.what(), 0,
                     field.empty() ? key : field + "." + key);
  }
}

std::string pos_text(GridPos p) {
  return "(" + std::to_string(p.x) + "," + std::to_string(p.y) + ")";
}

}  // namespace

std::string_view to_string(Dynamics dynamics) noexcept {
  switch (dynamics) {
    case Dynamics::warehouse: return "warehouse";
    case Dynamics::four_rooms: return "four_rooms";
    case Dynamics::taxi: return "taxi";
  }
  return "unknown";
}

std::string_view to_string(CellKind kind) noexcept {
  switch (kind) {
    case CellKind::floor: return "floor";
    case CellKind::wall: return "wall";
    case CellKind::rack: return "rack";
    case CellKind::slip: return "slip";
    case CellKind::chute: return "chute";
    case CellKind::goal: return "goal";
    case CellKind::penalty: return "penalty";
    case CellKind::depot: return "depot";
    case CellKind::station: return "station";
  }
  return "unknown";
}

CellKind DomainSpec::cell_kind(GridPos pos) const {
  if (pos.x < 0 || pos.y < 0 || pos.x >= width_ || pos.y >= height_) return CellKind::wall;
  return static_cast<CellKind>(kind_grid_[static_cast<std::size_t>(pos.y * width_ + pos.x)]);
}

bool DomainSpec::blocked(GridPos pos) const {
  const CellKind kind = cell_kind(pos);
  return kind == CellKind::wall || kind == CellKind::rack;
}

int DomainSpec::cell_index(GridPos pos) const {
  if (pos.x < 0 || pos.y < 0 || pos.x >= width_ || pos.y >= height_) return -1;
  return cell_to_free_[static_cast<std::size_t>(pos.y * width_ + pos.x)];
}

int DomainSpec::num_states() const noexcept {
  const int cells = static_cast<int>(free_cells_.size());
  switch (dynamics_) {
    case Dynamics::warehouse: return cells * 4;
    case Dynamics::four_rooms: return cells;
    case Dynamics::taxi: return cells * 3;
  }
  return 0;
}

GridPos DomainSpec::position(StateId s) const {
  if (s < 0 || s >= num_states()) throw InvalidModel("state out of range: " + std::to_string(s));
  int cell = s;
  if (dynamics_ == Dynamics::warehouse) cell = s / 4;
  if (dynamics_ == Dynamics::taxi) cell = s / 3;
  return free_cells_[static_cast<std::size_t>(cell)];
}

FeatureVector DomainSpec::features(StateId s) const {
  const GridPos p = position(s);
  switch (dynamics_) {
    case Dynamics::warehouse: return {{p.x, p.y, (s / 2) % 2, s % 2}};
    case Dynamics::four_rooms: return {{p.x, p.y}};
    case Dynamics::taxi: {
      const int stage = s % 3;
      const int passenger = stage == 0 ? taxi_pickup_code() : stage == 1 ? static_cast<int>(depots_.size())
                                                                         : taxi_destination_code();
      return {{p.x, p.y, passenger, taxi_destination_code()}};
    }
  }
  return {};
}

std::optional<StateId> DomainSpec::state_from_features(const FeatureVector& f) const {
  if (f.values.size() != features_.size()) return std::nullopt;
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    if (f.values[i] < feature_ranges_[i].min || f.values[i] > feature_ranges_[i].max) {
      return std::nullopt;
    }
  }
  const int cell = cell_index({f.values[0], f.values[1]});
  if (cell < 0) return std::nullopt;
  switch (dynamics_) {
    case Dynamics::warehouse: return cell * 4 + f.values[2] * 2 + f.values[3];
    case Dynamics::four_rooms: return cell;
    case Dynamics::taxi: {
      if (f.values[3] != taxi_destination_code()) return std::nullopt;
      if (f.values[2] == static_cast<int>(depots_.size())) return cell * 3 + 1;
      if (f.values[2] == taxi_pickup_code()) return cell * 3;
      if (f.values[2] == taxi_destination_code()) return cell * 3 + 2;
      return std::nullopt;
    }
  }
  return std::nullopt;
}

std::string DomainSpec::describe(StateId s) const {
  const FeatureVector f = features(s);
  std::ostringstream out;
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    if (i) out << ' ';
    out << features_[i] << '=' << f.values[i];
  }
  return out.str();
}

std::optional<ParamId> DomainSpec::role_param(std::string_view role) const {
  for (const ParamSpec& spec : schema_.specs()) {
    if (spec.role == role) return spec.id;
  }
  return std::nullopt;
}

double DomainSpec::role_value(const ParamAssignment& params, std::string_view role,
                              double fallback) const {
  const auto id = role_param(role);
  return id ? params.at(*id) : fallback;
}

bool DomainSpec::is_position_param(const ParamId& id) const {
  const ParamSpec* spec = schema_.find(id);
  if (spec == nullptr) return false;
  const RoleInfo* info = find_role(spec->role);
  return info != nullptr && info->position;
}

GridPos DomainSpec::decode_position(double value) const {
  const long index = std::lround(value);
  if (index < 0 || index >= static_cast<long>(width_) * height_ ||
      static_cast<double>(index) != value) {
    throw InvalidModel("not a cell index: " + std::to_string(value));
  }
  return {static_cast<int>(index % width_), static_cast<int>(index / width_)};
}

std::string DomainSpec::format_value(const ParamId& id, double value) const {
  if (is_position_param(id)) return pos_text(decode_position(value));
  std::ostringstream out;
  out << value;
  return out.str();
}

double DomainSpec::slip_probability(const ParamAssignment& params, GridPos pos) const {
  for (const CellAnnotation& cell : cells_) {
    if (cell.pos == pos && cell.kind == CellKind::slip) {
      // param_refs[0] is the slip_prob or outcome_stay parameter.
      return params.at(cell.param_refs.front());
    }
  }
  return 0.0;
}

std::vector<CellAnnotation> DomainSpec::rendered_cells(const ParamAssignment& params) const {
  std::vector<CellAnnotation> out(cells_.begin(), cells_.end());
  for (const ParamSpec& spec : schema_.specs()) {
    CellKind kind;
    if (spec.role == "box_position") {
      kind = CellKind::floor;
    } else if (spec.role == "station_position") {
      kind = CellKind::station;
    } else if (spec.role == "goal_position") {
      kind = CellKind::goal;
    } else if (spec.role == "penalty_position") {
      kind = CellKind::penalty;
    } else {
      continue;
    }
    CellAnnotation cell;
    cell.pos = decode_position(params.at(spec.id));
    cell.kind = kind;
    cell.param_refs = {spec.id};
    cell.label = spec.role == "box_position" ? "box" : std::string(to_string(kind));
    out.push_back(std::move(cell));
  }
  return out;
}

std::vector<std::pair<ParamId, std::vector<double>>> DomainSpec::param_space() const {
  std::vector<std::pair<ParamId, std::vector<double>>> out;
  for (const ParamSpec& spec : schema_.specs()) {
    std::vector<double> values = spec.candidates;
    if (std::find(values.begin(), values.end(), spec.default_value) == values.end()) {
      values.insert(values.begin(), spec.default_value);
    }
    out.emplace_back(spec.id, std::move(values));
  }
  return out;
}

Mdp DomainSpec::build(const ParamAssignment& params) const {
  try {
    schema_.validate(params);
  } catch (const UnknownParam& e) {
    throw InvalidModel(e.what());
  }
  switch (dynamics_) {
    case Dynamics::warehouse: return build_warehouse(params);
    case Dynamics::four_rooms: return build_four_rooms(params);
    case Dynamics::taxi: return build_taxi(params);
  }
  throw InvalidModel("unknown dynamics");
}

namespace {

GridPos step_towards(GridPos p, int action) {
  switch (action) {
    case kUp: return {p.x, p.y - 1};
    case kDown: return {p.x, p.y + 1};
    case kLeft: return {p.x - 1, p.y};
    case kRight: return {p.x + 1, p.y};
    default: return p;
  }
}

}  // namespace

Mdp DomainSpec::build_warehouse(const ParamAssignment& params) const {
  const double step = role_value(params, "step_cost", 0.0);
  const double delivery = role_value(params, "delivery_reward", 0.0);
  const double inspection = role_value(params, "inspection_penalty", 0.0);
  const GridPos box = decode_position(params.at(*role_param("box_position")));
  const GridPos station = decode_position(params.at(*role_param("station_position")));

  const int cells = static_cast<int>(free_cells_.size());
  Mdp::Builder builder(num_states(), static_cast<int>(actions_.size()));
  builder.set_discount(role_value(params, "discount", 0.0));
  auto state_of = [](int cell, int carrying, int visited) {
    return static_cast<StateId>(cell * 4 + carrying * 2 + visited);
  };

  std::vector<StateId> starts;
  for (int cell = 0; cell < cells; ++cell) {
    const GridPos here = free_cells_[static_cast<std::size_t>(cell)];
    const bool on_chute = cell_kind(here) == CellKind::chute;
    if (!on_chute && here != box && here != station) starts.push_back(state_of(cell, 0, 0));
    const double slip = slip_probability(params, here);
    for (int carrying = 0; carrying < 2; ++carrying) {
      for (int visited = 0; visited < 2; ++visited) {
        const StateId s = state_of(cell, carrying, visited);
        if (carrying == 1 && on_chute) {
          builder.set_terminal(s);
          continue;
        }
        for (int a = 0; a < static_cast<int>(actions_.size()); ++a) {
          const GridPos target = step_towards(here, a);
          if (slip > 0.0) builder.add_transition(s, a, s, slip, step);
          if (blocked(target)) {
            builder.add_transition(s, a, s, 1.0 - slip, step);
            continue;
          }
          const int next_cell = cell_index(target);
          const int next_carrying = (carrying == 1 || target == box) ? 1 : 0;
          const int next_visited = (visited == 1 || (target == station && next_carrying == 1)) ? 1 : 0;
          double reward = step;
          if (next_carrying == 1 && cell_kind(target) == CellKind::chute) {
            reward += delivery + (next_visited == 1 ? 0.0 : inspection);
          }
          builder.add_transition(s, a, state_of(next_cell, next_carrying, next_visited),
                                 1.0 - slip, reward);
        }
      }
    }
  }
  if (starts.empty()) starts.push_back(state_of(0, 0, 0));
  for (StateId s : starts) builder.set_initial(s, 1.0 / static_cast<double>(starts.size()));
  return builder.build();
}

Mdp DomainSpec::build_four_rooms(const ParamAssignment& params) const {
  const double step = role_value(params, "step_cost", 0.0);
  const double goal_reward = role_value(params, "goal_reward", 0.0);

  std::set<GridPos> goals;
  std::map<GridPos, double> penalties;
  for (const CellAnnotation& cell : cells_) {
    if (cell.kind == CellKind::goal) goals.insert(cell.pos);
    if (cell.kind == CellKind::penalty) penalties[cell.pos] += params.at(cell.param_refs.front());
  }
  if (const auto goal = role_param("goal_position")) goals.insert(decode_position(params.at(*goal)));
  if (const auto pen = role_param("penalty_position")) {
    penalties[decode_position(params.at(*pen))] += role_value(params, "penalty_reward", 0.0);
  }

  const int cells = static_cast<int>(free_cells_.size());
  Mdp::Builder builder(num_states(), static_cast<int>(actions_.size()));
  builder.set_discount(role_value(params, "discount", 0.0));
  std::vector<StateId> starts;
  for (int cell = 0; cell < cells; ++cell) {
    const GridPos here = free_cells_[static_cast<std::size_t>(cell)];
    const StateId s = cell;
    if (goals.contains(here)) {
      builder.set_terminal(s);
      continue;
    }
    if (!penalties.contains(here)) starts.push_back(s);
    const double slip = slip_probability(params, here);
    for (int a = 0; a < static_cast<int>(actions_.size()); ++a) {
      const GridPos target = step_towards(here, a);
      if (slip > 0.0) builder.add_transition(s, a, s, slip, step);
      if (blocked(target)) {
        builder.add_transition(s, a, s, 1.0 - slip, step);
        continue;
      }
      double reward = step;
      if (goals.contains(target)) reward += goal_reward;
      if (auto it = penalties.find(target); it != penalties.end()) reward += it->second;
      builder.add_transition(s, a, cell_index(target), 1.0 - slip, reward);
    }
  }
  if (starts.empty()) {
    for (int cell = 0; cell < cells; ++cell) starts.push_back(cell);
  }
  for (StateId s : starts) builder.set_initial(s, 1.0 / static_cast<double>(starts.size()));
  return builder.build();
}

Mdp DomainSpec::build_taxi(const ParamAssignment& params) const {
  const double step = role_value(params, "step_cost", 0.0);
  const double dropoff_reward = role_value(params, "dropoff_reward", 0.0);
  const double illegal = role_value(params, "illegal_action_penalty", 0.0);
  const int depots = static_cast<int>(depots_.size());
  const int pickup = static_cast<int>(role_value(params, "passenger_start", 0.0));
  const int destination = static_cast<int>(role_value(params, "destination", 0.0));
  if (pickup < 0 || pickup >= depots || destination < 0 || destination >= depots) {
    throw InvalidModel("taxi passenger/destination must index a depot");
  }
  const GridPos pickup_at = depots_[static_cast<std::size_t>(pickup)];
  const GridPos dropoff_at = depots_[static_cast<std::size_t>(destination)];

  const int cells = static_cast<int>(free_cells_.size());
  Mdp::Builder builder(num_states(), static_cast<int>(actions_.size()));
  builder.set_discount(role_value(params, "discount", 0.0));
  // stage 0: passenger waiting, 1: in the taxi, 2: delivered (terminal)
  auto state_of = [](int cell, int stage) { return static_cast<StateId>(cell * 3 + stage); };

  for (int cell = 0; cell < cells; ++cell) {
    const GridPos here = free_cells_[static_cast<std::size_t>(cell)];
    const double slip = slip_probability(params, here);
    builder.set_terminal(state_of(cell, 2));
    for (int stage = 0; stage < 2; ++stage) {
      const StateId s = state_of(cell, stage);
      for (int a = 0; a < static_cast<int>(actions_.size()); ++a) {
        if (a == kPickup) {
          if (stage == 0 && here == pickup_at) {
            builder.add_transition(s, a, state_of(cell, 1), 1.0, step);
          } else {
            builder.add_transition(s, a, s, 1.0, step + illegal);
          }
          continue;
        }
        if (a == kDropoff) {
          if (stage == 1 && here == dropoff_at) {
            builder.add_transition(s, a, state_of(cell, 2), 1.0, step + dropoff_reward);
          } else {
            builder.add_transition(s, a, s, 1.0, step + illegal);
          }
          continue;
        }
        const GridPos target = step_towards(here, a);
        if (slip > 0.0) builder.add_transition(s, a, s, slip, step);
        if (blocked(target)) {
          builder.add_transition(s, a, s, 1.0 - slip, step);
          continue;
        }
        builder.add_transition(s, a, state_of(cell_index(target), stage), 1.0 - slip, step);
      }
    }
    builder.set_initial(state_of(cell, 0), 1.0 / static_cast<double>(cells));
  }
  return builder.build();
}

int DomainSpec::taxi_pickup_code() const {
  return static_cast<int>(schema_.at(*role_param("passenger_start")).default_value);
}

int DomainSpec::taxi_destination_code() const {
  return static_cast<int>(schema_.at(*role_param("destination")).default_value);
}

void DomainSpec::finalize() {
  kind_grid_.assign(static_cast<std::size_t>(width_ * height_), static_cast<int>(CellKind::floor));
  for (const CellAnnotation& cell : cells_) {
    kind_grid_[static_cast<std::size_t>(cell.pos.y * width_ + cell.pos.x)] = static_cast<int>(cell.kind);
    if (cell.kind == CellKind::depot) depots_.push_back(cell.pos);
  }
  cell_to_free_.assign(kind_grid_.size(), -1);
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      if (blocked({x, y})) continue;
      cell_to_free_[static_cast<std::size_t>(y * width_ + x)] = static_cast<int>(free_cells_.size());
      free_cells_.push_back({x, y});
    }
  }
  switch (dynamics_) {
    case Dynamics::warehouse:
      actions_ = kMoveActions;
      features_ = {"x", "y", "carrying_box", "visited_station"};
      feature_ranges_ = {{0, width_ - 1}, {0, height_ - 1}, {0, 1}, {0, 1}};
      break;
    case Dynamics::four_rooms:
      actions_ = kMoveActions;
      features_ = {"x", "y"};
      feature_ranges_ = {{0, width_ - 1}, {0, height_ - 1}};
      break;
    case Dynamics::taxi: {
      const int depots = static_cast<int>(depots_.size());
      actions_ = kTaxiActions;
      features_ = {"taxi_x", "taxi_y", "passenger", "destination"};
      feature_ranges_ = {{0, width_ - 1}, {0, height_ - 1}, {0, depots}, {0, depots - 1}};
      break;
    }
  }
}

DomainSpec parse_layout(std::string_view text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(source + ": malformed JSON: " + e.what(), line_of(text, e.byte));
  }
  if (!doc.is_object()) throw ParseError(source + ": layout must be a JSON object", 1);

  const int version = required<int>(doc, "schema_version", "");
  if (version != DomainSpec::kSchemaVersion) {
    throw VersionMismatch(source + ": unsupported layout schema_version " + std::to_string(version));
  }

  DomainSpec spec;
  spec.name_ = required<std::string>(doc, "name", "");
  const std::string dynamics = required<std::string>(doc, "dynamics", "");
  if (dynamics == "warehouse") {
    spec.dynamics_ = Dynamics::warehouse;
  } else if (dynamics == "four_rooms") {
    spec.dynamics_ = Dynamics::four_rooms;
  } else if (dynamics == "taxi") {
    spec.dynamics_ = Dynamics::taxi;
  } else {
    throw ParseError("unknown dynamics '" + dynamics + "'", 0, "dynamics");
  }
  spec.width_ = required<int>(doc, "width", "");
  spec.height_ = required<int>(doc, "height", "");
  if (spec.width_ < 1 || spec.height_ < 1 || spec.width_ * spec.height_ > 1'000'000) {
    throw ConfigError(source + ": grid dimensions out of range");
  }

  // Parameters first so cell references can be checked.
  std::vector<ParamSpec> params;
  std::set<std::string> singleton_roles;
  const json param_list = doc.value("params", json::array());
  if (!param_list.is_array()) throw ParseError("params must be an array", 0, "params");
  auto read_value = [&](const json& v, bool position, const std::string& field) -> double {
    if (position) {
      if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer()) {
        throw ParseError("position values are [x, y] integer pairs", 0, field);
      }
      const GridPos p{v[0].get<int>(), v[1].get<int>()};
      if (p.x < 0 || p.y < 0 || p.x >= spec.width_ || p.y >= spec.height_) {
        throw ConfigError(source + ": position " + pos_text(p) + " outside the grid (" + field + ")");
      }
      return spec.encode_position(p);
    }
    if (!v.is_number()) throw ParseError("expected a number", 0, field);
    return v.get<double>();
  };
  for (std::size_t i = 0; i < param_list.size(); ++i) {
    const json& p = param_list[i];
    const std::string field = "params[" + std::to_string(i) + "]";
    ParamSpec ps;
    ps.id = ParamId{required<std::string>(p, "id", field)};
    ps.role = required<std::string>(p, "role", field);
    const RoleInfo* role = find_role(ps.role);
    if (role == nullptr) throw ParseError("unknown parameter role '" + ps.role + "'", 0, field + ".role");
    ps.kind = p.contains("kind") ? parse_param_kind(required<std::string>(p, "kind", field)) : role->kind;
    if (ps.kind != role->kind) {
      throw ParseError("role '" + ps.role + "' edits " + std::string(to_string(role->kind)) +
                           " parameters", 0, field + ".kind");
    }
    if (!role->repeatable && !singleton_roles.insert(ps.role).second) {
      throw ConfigError(source + ": role '" + ps.role + "' declared twice");
    }
    if (p.contains("range")) {
      const json& r = p.at("range");
      if (!r.is_array() || r.size() != 2 || role->position) {
        throw ParseError("range must be [lo, hi] on a scalar parameter", 0, field + ".range");
      }
      ps.range = std::make_pair(r[0].get<double>(), r[1].get<double>());
    }
    if (p.contains("candidates")) {
      const json& c = p.at("candidates");
      if (!c.is_array()) throw ParseError("candidates must be an array", 0, field + ".candidates");
      for (std::size_t k = 0; k < c.size(); ++k) {
        ps.candidates.push_back(read_value(c[k], role->position,
                                           field + ".candidates[" + std::to_string(k) + "]"));
      }
    }
    if (!p.contains("default")) throw ParseError("missing required field", 0, field + ".default");
    ps.default_value = read_value(p.at("default"), role->position, field + ".default");
    ps.group = p.value("group", std::string{});
    params.push_back(std::move(ps));
  }
  try {
    spec.schema_ = ParamSchema(std::move(params));
  } catch (const InvalidModel& e) {
    throw ConfigError(source + ": " + e.what());
  }

  const json cell_list = doc.value("cells", json::array());
  if (!cell_list.is_array()) throw ParseError("cells must be an array", 0, "cells");
  std::set<GridPos> seen;
  for (std::size_t i = 0; i < cell_list.size(); ++i) {
    const json& c = cell_list[i];
    const std::string field = "cells[" + std::to_string(i) + "]";
    CellAnnotation cell;
    cell.pos = {required<int>(c, "x", field), required<int>(c, "y", field)};
    cell.kind = parse_cell_kind(required<std::string>(c, "kind", field), field + ".kind");
    cell.label = c.value("label", std::string{});
    if (cell.pos.x < 0 || cell.pos.y < 0 || cell.pos.x >= spec.width_ || cell.pos.y >= spec.height_) {
      throw ConfigError(source + ": cell " + pos_text(cell.pos) + " lies outside the grid");
    }
    if (!seen.insert(cell.pos).second) {
      throw ConfigError(source + ": cell " + pos_text(cell.pos) + " is annotated twice");
    }
    for (const auto& ref : c.value("param_refs", json::array())) {
      cell.param_refs.push_back(ParamId{ref.get<std::string>()});
    }
    for (const ParamId& ref : cell.param_refs) {
      if (!spec.schema_.contains(ref)) {
        throw ConfigError(source + ": cell " + pos_text(cell.pos) + " references unknown parameter '" +
                          ref.key + "'");
      }
    }
    if (cell.kind == CellKind::slip) {
      const bool scalar = cell.param_refs.size() == 1 &&
                          spec.schema_.at(cell.param_refs[0]).role == "slip_prob";
      const bool categorical =
          cell.param_refs.size() == 2 && spec.schema_.at(cell.param_refs[0]).role == "outcome_stay" &&
          spec.schema_.at(cell.param_refs[1]).role == "outcome_move" &&
          !spec.schema_.at(cell.param_refs[0]).group.empty() &&
          spec.schema_.at(cell.param_refs[0]).group == spec.schema_.at(cell.param_refs[1]).group;
      if (!scalar && !categorical) {
        throw ConfigError(source + ": slip cell " + pos_text(cell.pos) +
                          " must reference one slip_prob parameter or a grouped "
                          "[outcome_stay, outcome_move] pair");
      }
    }
    if (cell.kind == CellKind::penalty &&
        (cell.param_refs.size() != 1 || spec.schema_.at(cell.param_refs[0]).role != "penalty_reward")) {
      throw ConfigError(source + ": penalty cell " + pos_text(cell.pos) +
                        " must reference one penalty_reward parameter");
    }
    spec.cells_.push_back(std::move(cell));
  }
  spec.finalize();

  if (spec.free_cells_.empty()) throw ConfigError(source + ": layout has no free cells");
  if (!spec.role_param("discount")) throw ConfigError(source + ": a discount parameter is required");
  for (const ParamSpec& ps : spec.schema_.specs()) {
    if (!find_role(ps.role)->position) continue;
    std::vector<double> values = ps.candidates;
    values.push_back(ps.default_value);
    for (double v : values) {
      const GridPos pos = spec.decode_position(v);
      if (spec.blocked(pos)) {
        throw ConfigError(source + ": parameter '" + ps.id.key + "' places a cell on blocked " +
                          pos_text(pos));
      }
    }
  }
  switch (spec.dynamics_) {
    case Dynamics::warehouse:
      if (!spec.role_param("box_position") || !spec.role_param("station_position")) {
        throw ConfigError(source + ": warehouse layouts need box_position and station_position");
      }
      break;
    case Dynamics::taxi: {
      if (spec.depots_.empty()) throw ConfigError(source + ": taxi layouts need depot cells");
      if (!spec.role_param("passenger_start") || !spec.role_param("destination")) {
        throw ConfigError(source + ": taxi layouts need passenger_start and destination");
      }
      for (std::string_view role : {"passenger_start", "destination"}) {
        const ParamSpec& ps = spec.schema_.at(*spec.role_param(role));
        std::vector<double> values = ps.candidates;
        values.push_back(ps.default_value);
        for (double v : values) {
          if (v != std::floor(v) || v < 0 || v >= static_cast<double>(spec.depots_.size())) {
            throw ConfigError(source + ": '" + ps.id.key + "' must index a depot");
          }
        }
      }
      if (spec.taxi_pickup_code() == spec.taxi_destination_code()) {
        throw ConfigError(source + ": default passenger_start and destination must differ");
      }
      break;
    }
    case Dynamics::four_rooms: break;
  }

  if (doc.contains("actions") && doc.at("actions").get<std::vector<std::string>>() != spec.actions_) {
    throw ConfigError(source + ": actions do not match the " + dynamics + " dynamics");
  }
  if (doc.contains("features") &&
      doc.at("features").get<std::vector<std::string>>() != spec.features_) {
    throw ConfigError(source + ": features do not match the " + dynamics + " feature schema");
  }

  const json message_list = doc.value("messages", json::array());
  if (message_list.size() > kMaxCatalogSize) {
    throw ConfigError(source + ": message catalogs hold at most 32 messages");
  }
  std::set<std::string> message_ids;
  for (std::size_t i = 0; i < message_list.size(); ++i) {
    const json& m = message_list[i];
    const std::string field = "messages[" + std::to_string(i) + "]";
    Message msg;
    msg.id = required<std::string>(m, "id", field);
    msg.text = required<std::string>(m, "text", field);
    msg.cost = m.value("cost", 1.0);
    if (!(msg.cost >= 0.0)) throw ConfigError(source + ": message '" + msg.id + "' has negative cost");
    if (!message_ids.insert(msg.id).second) {
      throw ConfigError(source + ": duplicate message id '" + msg.id + "'");
    }
    const json plist = m.value("params", json::array());
    if (plist.empty()) throw ConfigError(source + ": message '" + msg.id + "' communicates nothing");
    for (std::size_t k = 0; k < plist.size(); ++k) {
      const std::string pfield = field + ".params[" + std::to_string(k) + "]";
      const ParamId id{required<std::string>(plist[k], "param_id", pfield)};
      const ParamSpec* ps = spec.schema_.find(id);
      if (ps == nullptr) {
        throw ConfigError(source + ": message '" + msg.id + "' names unknown parameter '" + id.key + "'");
      }
      if (!plist[k].contains("value")) throw ParseError("missing required field", 0, pfield + ".value");
      const double value = read_value(plist[k].at("value"), find_role(ps->role)->position, pfield);
      if (!ps->is_legal(value)) {
        throw ConfigError(source + ": message '" + msg.id + "' gives an illegal value for '" + id.key + "'");
      }
      msg.params.emplace_back(id, value);
    }
    spec.messages_.push_back(std::move(msg));
  }
  return spec;
}

std::string layout_to_json(const DomainSpec& spec) {
  using ojson = nlohmann::ordered_json;
  auto value_json = [&](const ParamId& id, double v) -> ojson {
    const std::string& role = spec.schema().at(id).role;
    if (role == "passenger_start" || role == "destination") return static_cast<int>(v);
    if (!spec.is_position_param(id)) return v;
    const GridPos p = spec.decode_position(v);
    return ojson::array({p.x, p.y});
  };
  ojson doc;
  doc["schema_version"] = DomainSpec::kSchemaVersion;
  doc["name"] = spec.name();
  doc["dynamics"] = std::string(to_string(spec.dynamics()));
  doc["width"] = spec.width();
  doc["height"] = spec.height();
  ojson cells = ojson::array();
  for (const CellAnnotation& c : spec.cells()) {
    ojson cell;
    cell["x"] = c.pos.x;
    cell["y"] = c.pos.y;
    cell["kind"] = std::string(to_string(c.kind));
    if (!c.label.empty()) cell["label"] = c.label;
    if (!c.param_refs.empty()) {
      ojson refs = ojson::array();
      for (const ParamId& id : c.param_refs) refs.push_back(id.key);
      cell["param_refs"] = refs;
    }
    cells.push_back(cell);
  }
  doc["cells"] = cells;
  doc["actions"] = spec.actions();
  doc["features"] = spec.feature_names();
  ojson params = ojson::array();
  for (const ParamSpec& ps : spec.schema().specs()) {
    ojson p;
    p["id"] = ps.id.key;
    p["kind"] = std::string(to_string(ps.kind));
    p["role"] = ps.role;
    if (ps.range) p["range"] = ojson::array({ps.range->first, ps.range->second});
    if (!ps.candidates.empty()) {
      ojson cands = ojson::array();
      for (double v : ps.candidates) cands.push_back(value_json(ps.id, v));
      p["candidates"] = cands;
    }
    p["default"] = value_json(ps.id, ps.default_value);
    if (!ps.group.empty()) p["group"] = ps.group;
    params.push_back(p);
  }
  doc["params"] = params;
  ojson messages = ojson::array();
  for (const Message& m : spec.messages()) {
    ojson msg;
    msg["id"] = m.id;
    msg["text"] = m.text;
    ojson mp = ojson::array();
    for (const auto& [id, v] : m.params) mp.push_back(ojson{{"param_id", id.key}, {"value", value_json(id, v)}});
    msg["params"] = mp;
    msg["cost"] = m.cost;
    messages.push_back(msg);
  }
  doc["messages"] = messages;
  return doc.dump(2) + "\n";
}

void save_layout(const std::filesystem::path& path, const DomainSpec& spec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write layout " + path.string());
  out << layout_to_json(spec);
  if (!out) throw Error("failed writing layout " + path.string());
}

DomainSpec load_layout(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open layout " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_layout(buffer.str(), path.string());
}

Mdp build_mdp(const DomainSpec& spec, const ParamAssignment& params) { return spec.build(params); }

FeatureVector state_features(const DomainSpec& spec, StateId s) { return spec.features(s); }

std::vector<std::pair<ParamId, std::vector<double>>> param_space(const DomainSpec& spec) {
  return spec.param_space();
}

std::filesystem::path default_layout_dir() {
  if (const char* env = std::getenv("RECON_LAYOUT_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
#ifdef RECON_SOURCE_LAYOUT_DIR
  return RECON_SOURCE_LAYOUT_DIR;
#else
  return "data/layouts";
#endif
}

DomainSpec load_named_layout(const std::string& name_or_path) {
  const std::filesystem::path direct(name_or_path);
  if (std::filesystem::is_regular_file(direct)) return load_layout(direct);
  return load_layout(default_layout_dir() / (name_or_path + ".layout.json"));
}

}  // namespace recon

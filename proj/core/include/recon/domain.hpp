#pragma once

#include <compare>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "recon/mdp.hpp"
#include "recon/message.hpp"
#include "recon/params.hpp"

namespace recon {

/// Rule set a layout compiles under.
enum class Dynamics { warehouse, four_rooms, taxi };

std::string_view to_string(Dynamics dynamics) noexcept;

enum class CellKind { floor, wall, rack, slip, chute, goal, penalty, depot, station };

std::string_view to_string(CellKind kind) noexcept;

struct GridPos {
  int x = 0;
  int y = 0;

  auto operator<=>(const GridPos&) const = default;
};

struct CellAnnotation {
  GridPos pos;
  CellKind kind = CellKind::floor;
  std::vector<ParamId> param_refs;
  std::string label;

  bool operator==(const CellAnnotation&) const = default;
};

struct FeatureVector {
  std::vector<int> values;

  bool operator==(const FeatureVector&) const = default;
};

struct FeatureRange {
  int min = 0;
  int max = 0;
};

/// A gridworld domain loaded from a layout file. Compiles to an Mdp under any
/// legal parameter assignment; owns the feature schema and message catalog.
///
/// State layouts:
///   warehouse   (free cell, carrying_box, visited_station); states with the
///               robot on a chute while carrying are terminal (box delivered).
///   four_rooms  free cell; goal cells are terminal.
///   taxi        (free cell, stage) with stage waiting / in taxi / delivered;
///               delivered states are terminal. Pickup depot and destination
///               are parameters, so the passenger and destination features
///               report the layout's declared (default) depots, and the
///               number of depots while the passenger rides.
class DomainSpec final : public ModelFamily {
 public:
  static constexpr int kSchemaVersion = 1;

  const std::string& name() const noexcept { return name_; }
  Dynamics dynamics() const noexcept { return dynamics_; }
  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  /// Static annotation at pos (floor when unannotated).
  CellKind cell_kind(GridPos pos) const;
  bool blocked(GridPos pos) const;
  std::span<const CellAnnotation> cells() const noexcept { return cells_; }
  /// Static cells plus the cells placed by position parameters under params.
  std::vector<CellAnnotation> rendered_cells(const ParamAssignment& params) const;

  const std::vector<std::string>& actions() const noexcept { return actions_; }
  const std::vector<std::string>& feature_names() const noexcept { return features_; }
  const std::vector<FeatureRange>& feature_ranges() const noexcept { return feature_ranges_; }
  const std::vector<Message>& messages() const noexcept { return messages_; }
  const ParamSchema& schema() const override { return schema_; }

  /// Validates params and compiles the MDP.
  Mdp build(const ParamAssignment& params) const override;

  int num_states() const noexcept;
  std::span<const GridPos> free_cells() const noexcept { return free_cells_; }
  GridPos position(StateId s) const;
  FeatureVector features(StateId s) const;
  std::optional<StateId> state_from_features(const FeatureVector& features) const;
  std::string describe(StateId s) const;

  /// Candidate values per parameter; the default is always included.
  std::vector<std::pair<ParamId, std::vector<double>>> param_space() const;

  /// Position-valued parameters store y * width + x.
  bool is_position_param(const ParamId& id) const;
  double encode_position(GridPos pos) const noexcept {
    return static_cast<double>(pos.y * width_ + pos.x);
  }
  GridPos decode_position(double value) const;

  /// Human-readable parameter value ("(3,1)" for positions).
  std::string format_value(const ParamId& id, double value) const;

  friend DomainSpec parse_layout(std::string_view json_text, const std::string& source);

 private:
  DomainSpec() = default;

  int cell_index(GridPos pos) const;
  double role_value(const ParamAssignment& params, std::string_view role, double fallback) const;
  std::optional<ParamId> role_param(std::string_view role) const;
  double slip_probability(const ParamAssignment& params, GridPos pos) const;
  void finalize();

  Mdp build_warehouse(const ParamAssignment& params) const;
  Mdp build_four_rooms(const ParamAssignment& params) const;
  Mdp build_taxi(const ParamAssignment& params) const;
  int taxi_pickup_code() const;
  int taxi_destination_code() const;

  std::string name_;
  Dynamics dynamics_ = Dynamics::four_rooms;
  int width_ = 0;
  int height_ = 0;
  std::vector<CellAnnotation> cells_;
  std::vector<int> kind_grid_;  // CellKind per position
  std::vector<int> cell_to_free_;
  std::vector<GridPos> free_cells_;
  std::vector<GridPos> depots_;
  std::vector<std::string> actions_;
  std::vector<std::string> features_;
  std::vector<FeatureRange> feature_ranges_;
  ParamSchema schema_;
  std::vector<Message> messages_;
};

/// Parses and validates a layout. Throws ParseError (with line or field) on
/// malformed input, ConfigError on invariant violations, VersionMismatch on an
/// unsupported schema_version.
DomainSpec parse_layout(std::string_view json_text, const std::string& source = "<memory>");
DomainSpec load_layout(const std::filesystem::path& path);
/// Inverse of parse_layout; keys follow the shipped layout files.
std::string layout_to_json(const DomainSpec& spec);
void save_layout(const std::filesystem::path& path, const DomainSpec& spec);

Mdp build_mdp(const DomainSpec& spec, const ParamAssignment& params);
FeatureVector state_features(const DomainSpec& spec, StateId s);
std::vector<std::pair<ParamId, std::vector<double>>> param_space(const DomainSpec& spec);

/// Directory holding the shipped layouts: $RECON_LAYOUT_DIR when set, else the
/// compiled-in source location.
std::filesystem::path default_layout_dir();
/// Loads "<dir>/<name>.layout.json", or path itself when it names a file.
DomainSpec load_named_layout(const std::string& name_or_path);

}  // namespace recon

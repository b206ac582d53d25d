#include <gtest/gtest.h>

#include <json.hpp>

#include "recon/domain.hpp"
#include "recon/error.hpp"
#include "recon/io.hpp"

using namespace recon;

namespace {

const char* const kDomains[] = {"warehouse", "four_rooms", "taxi"};

std::string layout_text(const std::string& name) {
  return read_text_file(default_layout_dir() / (name + ".layout.json"));
}

}  // namespace

TEST(Layouts, ShippedLayoutsBuildAndSolve) {
  for (const char* name : kDomains) {
    const DomainSpec spec = load_named_layout(name);
    EXPECT_EQ(spec.name(), name);
    const Mdp m = spec.build(spec.schema().defaults());
    EXPECT_EQ(m.num_states(), spec.num_states());
    EXPECT_EQ(m.num_actions(), static_cast<int>(spec.actions().size()));
    EXPECT_NO_THROW(value_iteration(m)) << name;
    EXPECT_FALSE(spec.messages().empty());
    EXPECT_LE(spec.messages().size(), kMaxCatalogSize);
    EXPECT_EQ(build_mdp(spec, spec.schema().defaults()), m);
  }
}

TEST(Layouts, FeaturesIdentifyStates) {
  for (const char* name : kDomains) {
    const DomainSpec spec = load_named_layout(name);
    const auto& ranges = spec.feature_ranges();
    for (StateId s = 0; s < spec.num_states(); ++s) {
      const FeatureVector f = spec.features(s);
      ASSERT_EQ(f.values.size(), spec.feature_names().size());
      for (std::size_t i = 0; i < f.values.size(); ++i) {
        EXPECT_GE(f.values[i], ranges[i].min);
        EXPECT_LE(f.values[i], ranges[i].max);
      }
      const auto back = spec.state_from_features(f);
      ASSERT_TRUE(back.has_value()) << name << " state " << s;
      EXPECT_EQ(*back, s) << name;
      EXPECT_EQ(state_features(spec, s), f);
    }
  }
}

TEST(Layouts, EveryCandidateValueBuilds) {
  for (const char* name : kDomains) {
    const DomainSpec spec = load_named_layout(name);
    for (const auto& [id, values] : param_space(spec)) {
      const double def = spec.schema().at(id).default_value;
      EXPECT_NE(std::find(values.begin(), values.end(), def), values.end()) << id.key;
      for (double v : values) {
        ParamAssignment p = spec.schema().defaults();
        p[id] = v;
        EXPECT_NO_THROW(spec.build(p)) << name << " " << id.key << "=" << v;
      }
    }
  }
}

TEST(Layouts, IllegalValuesAreRejected) {
  const DomainSpec spec = load_named_layout("warehouse");
  ParamAssignment p = spec.schema().defaults();
  p[ParamId{"discount"}] = 1.5;
  EXPECT_THROW(spec.build(p), InvalidModel);
  p = spec.schema().defaults();
  p.erase(p.begin());
  EXPECT_THROW(spec.build(p), InvalidModel);
}

TEST(Layouts, PositionParamsRoundTrip) {
  const DomainSpec spec = load_named_layout("warehouse");
  const GridPos pos{3, 7};
  EXPECT_EQ(spec.decode_position(spec.encode_position(pos)), pos);
  bool any = false;
  for (const ParamSpec& ps : spec.schema().specs()) {
    if (spec.is_position_param(ps.id)) {
      any = true;
      EXPECT_EQ(spec.format_value(ps.id, spec.encode_position(pos)), "(3,7)");
    }
  }
  EXPECT_TRUE(any);
}

TEST(LayoutParsing, MalformedJsonReportsLine) {
  const std::string text = "{\n  \"schema_version\": 1,\n  \"name\": oops\n}";
  try {
    parse_layout(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(LayoutParsing, VersionMismatch) {
  auto doc = nlohmann::json::parse(layout_text("warehouse"));
  doc["schema_version"] = 99;
  EXPECT_THROW(parse_layout(doc.dump()), VersionMismatch);
}

TEST(LayoutParsing, MissingAndWrongFieldsNameTheField) {
  auto doc = nlohmann::json::parse(layout_text("four_rooms"));
  doc.erase("width");
  try {
    parse_layout(doc.dump());
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.field(), "width");
  }
  doc = nlohmann::json::parse(layout_text("four_rooms"));
  doc["dynamics"] = "hovercraft";
  EXPECT_THROW(parse_layout(doc.dump()), ParseError);
}

TEST(LayoutParsing, ReparseIsStable) {
  for (const char* name : kDomains) {
    const DomainSpec a = parse_layout(layout_text(name));
    const DomainSpec b = load_named_layout(name);
    EXPECT_EQ(a.build(a.schema().defaults()), b.build(b.schema().defaults()));
    EXPECT_EQ(a.messages(), b.messages());
  }
}

TEST(LayoutParsing, WriterRoundTrip) {
  for (const char* name : kDomains) {
    const DomainSpec a = load_named_layout(name);
    const std::string text = layout_to_json(a);
    EXPECT_EQ(text, layout_text(name)) << name;
    const DomainSpec b = parse_layout(text);
    EXPECT_EQ(layout_to_json(b), text);
    EXPECT_EQ(b.build(b.schema().defaults()), a.build(a.schema().defaults()));
    EXPECT_EQ(b.param_space(), a.param_space());
    EXPECT_EQ(b.schema().defaults(), a.schema().defaults());
    EXPECT_EQ(b.messages(), a.messages());
    EXPECT_EQ(std::vector<CellAnnotation>(b.cells().begin(), b.cells().end()),
              std::vector<CellAnnotation>(a.cells().begin(), a.cells().end()));
  }
}

TEST(LayoutParsing, UnknownLayoutIsConfigError) {
  EXPECT_THROW(load_named_layout("no_such_layout"), ConfigError);
}

TEST(Taxi, PickupDependsOnPassengerParam) {
  const DomainSpec spec = load_named_layout("taxi");
  const ParamId passenger{"passenger_start"};
  ASSERT_TRUE(spec.schema().contains(passenger));
  const auto& values = spec.schema().at(passenger).candidates;
  ASSERT_GE(values.size(), 2u);
  const Mdp a = spec.build(spec.schema().defaults());
  ParamAssignment moved = spec.schema().defaults();
  for (double v : values) {
    if (v != moved.at(passenger)) {
      moved[passenger] = v;
      break;
    }
  }
  const Mdp b = spec.build(moved);
  EXPECT_NE(a, b);
  const Solution sa = value_iteration(a);
  const Solution sb = value_iteration(b);
  EXPECT_NE(greedy_policy(sa.q), greedy_policy(sb.q));
}

TEST(Taxi, DeliveredStatesAreTerminal) {
  const DomainSpec spec = load_named_layout("taxi");
  const Mdp m = spec.build(spec.schema().defaults());
  int terminals = 0;
  for (StateId s = 0; s < m.num_states(); ++s) terminals += m.is_terminal(s) ? 1 : 0;
  EXPECT_EQ(terminals, m.num_states() / 3);
}

TEST(Warehouse, DeliveryEndsEpisode) {
  const DomainSpec spec = load_named_layout("warehouse");
  const Mdp m = spec.build(spec.schema().defaults());
  const Solution sol = value_iteration(m);
  const Policy pi = greedy_policy(sol.q);
  const auto mu = m.initial_distribution();
  for (StateId s = 0; s < m.num_states(); ++s) {
    if (mu[static_cast<std::size_t>(s)] == 0.0) continue;
    const Trajectory t = most_likely_trajectory(m, pi, s, 200);
    EXPECT_TRUE(m.is_terminal(t.final_state())) << spec.describe(s);
  }
}

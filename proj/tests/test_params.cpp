#include <gtest/gtest.h>

#include "recon/error.hpp"
#include "recon/params.hpp"

using namespace recon;

namespace {

ParamSpec scalar(const std::string& key, double lo, double hi, double def) {
  ParamSpec s;
  s.id = {key};
  s.range = {lo, hi};
  s.default_value = def;
  return s;
}

ParamSpec member(const std::string& key, const std::string& group, double def) {
  ParamSpec s = scalar(key, 0.0, 1.0, def);
  s.kind = ParamKind::transition;
  s.group = group;
  return s;
}

}  // namespace

TEST(ParamSchema, RejectsDuplicatesAndIllegalDefaults) {
  EXPECT_THROW(ParamSchema({scalar("a", 0, 1, 0), scalar("a", 0, 1, 0)}), InvalidModel);
  EXPECT_THROW(ParamSchema({scalar("a", 0, 1, 2)}), InvalidModel);
  EXPECT_THROW(ParamSchema({member("p", "g", 0.5), member("q", "g", 0.4)}), InvalidModel);
}

TEST(ParamSchema, CandidateSets) {
  ParamSpec s;
  s.id = {"c"};
  s.candidates = {-1.0, 0.0, 2.0};
  s.default_value = 0.0;
  EXPECT_TRUE(s.is_legal(2.0));
  EXPECT_FALSE(s.is_legal(1.0));
  EXPECT_NO_THROW(ParamSchema({s}));
}

TEST(ParamSchema, ValidateCoversMissingUnknownAndGroups) {
  const ParamSchema schema({scalar("a", 0, 1, 0.5), member("p", "g", 0.25), member("q", "g", 0.75)});
  ParamAssignment ok = schema.defaults();
  EXPECT_NO_THROW(schema.validate(ok));

  ParamAssignment missing = ok;
  missing.erase(ParamId{"a"});
  EXPECT_THROW(schema.validate(missing), InvalidModel);

  ParamAssignment extra = ok;
  extra[ParamId{"zzz"}] = 0.0;
  EXPECT_THROW(schema.validate(extra), InvalidModel);

  ParamAssignment unnormalized = ok;
  unnormalized[ParamId{"p"}] = 0.5;
  EXPECT_THROW(schema.validate(unnormalized), InvalidModel);

  EXPECT_EQ(schema.group_members("g"), (std::vector<ParamId>{{"p"}, {"q"}}));
  EXPECT_THROW(schema.at(ParamId{"nope"}), UnknownParam);
}

TEST(ParamKind, RoundTripsNames) {
  for (ParamKind k : {ParamKind::transition, ParamKind::reward, ParamKind::discount, ParamKind::initial}) {
    EXPECT_EQ(parse_param_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_param_kind("bogus"), ConfigError);
}

TEST(TabularFamily, AssignmentRoundTrip) {
  Mdp::Builder b(2, 2);
  b.add_transition(0, 0, 0, 0.25, 1.0).add_transition(0, 0, 1, 0.75, -2.0);
  b.add_transition(0, 1, 1, 1.0, 3.0);
  b.set_terminal(1);
  b.set_discount(0.8);
  b.set_initial(0, 1.0);
  const Mdp m = b.build();
  const TabularFamily fam(2, 2, {1});
  EXPECT_EQ(fam.build(fam.assignment_of(m)), m);
}

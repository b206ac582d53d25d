#include <gtest/gtest.h>

#include <algorithm>
#include <bit>

#include "recon/error.hpp"
#include "recon/experiment.hpp"
#include "recon/explainer.hpp"

using namespace recon;

namespace {

const std::string kScenario = std::string(RECON_DATA_DIR) + "/scenarios/warehouse_study.json";

class ExplainerFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    spec = new DomainSpec(load_named_layout("warehouse"));
    scenario = new Scenario(load_scenario(*spec, kScenario));
    ExperimentConfig config = default_config("warehouse", 1);
    config.target_rows = 600;
    const auto rows = generate_rows(*spec, scenario->robot, scenario->human, config, 11);
    encoder = new FeatureEncoder(*spec);
    tree = new DecisionTree(train_tree(encoder->schema(), encoder->encode(rows), {}, 11));
    trace = new Trajectory(detour_trace(*spec, *scenario));
  }
  static void TearDownTestSuite() {
    delete trace;
    delete tree;
    delete encoder;
    delete scenario;
    delete spec;
  }

  static double count_bad(const std::vector<Trajectory>& traces, MessageMask mask) {
    double bad = 0.0;
    for (const Trajectory& t : traces) {
      for (const Transition& step : t.steps) {
        bad += predict(*tree, encoder->encode(step, mask)) == Label::inexplicable ? 1.0 : 0.0;
      }
    }
    return bad;
  }

  static inline DomainSpec* spec = nullptr;
  static inline Scenario* scenario = nullptr;
  static inline FeatureEncoder* encoder = nullptr;
  static inline DecisionTree* tree = nullptr;
  static inline Trajectory* trace = nullptr;
};

}  // namespace

TEST_F(ExplainerFixture, ObjectiveIsCostPlusWeightedCount) {
  const Explainer ex(*encoder, *tree, spec->messages());
  const std::vector<Trajectory> traces{*trace};
  for (MessageMask m : {0u, 1u, 5u, 0x7fu}) {
    const auto msgs = select_messages_by_mask(spec->messages(), m);
    EXPECT_DOUBLE_EQ(ex.objective(m, traces, 2.5), cost(msgs) + 2.5 * count_bad(traces, m));
    EXPECT_DOUBLE_EQ(objective(*encoder, *tree, spec->messages(), m, *trace, 2.5),
                     ex.objective(m, traces, 2.5));
  }
}

TEST_F(ExplainerFixture, ExhaustiveMatchesEnumeration) {
  const std::vector<Trajectory> traces{*trace};
  for (double alpha : {0.0, 0.3, 1.0, 4.0}) {
    const std::size_t n = spec->messages().size();
    MessageMask best = 0;
    double best_obj = 1e300;
    auto ids_of = [&](MessageMask m) {
      std::vector<std::string> ids;
      for (const Message& msg : select_messages_by_mask(spec->messages(), m)) ids.push_back(msg.id);
      std::sort(ids.begin(), ids.end());
      return ids;
    };
    for (MessageMask m = 0; m < (MessageMask{1} << n); ++m) {
      const double obj = cost(select_messages_by_mask(spec->messages(), m)) + alpha * count_bad(traces, m);
      const bool better =
          obj < best_obj ||
          (obj == best_obj && (std::popcount(m) < std::popcount(best) ||
                               (std::popcount(m) == std::popcount(best) && ids_of(m) < ids_of(best))));
      if (better) {
        best = m;
        best_obj = obj;
      }
    }
    const ExplanationResult r = select_messages(*encoder, *tree, spec->messages(), *trace, alpha,
                                                SearchMode::exhaustive);
    EXPECT_EQ(r.mask, best) << "alpha " << alpha;
    EXPECT_DOUBLE_EQ(r.objective, best_obj);
    EXPECT_EQ(r.evaluated, std::size_t{1} << n);
    EXPECT_EQ(r.predicted.size(), 1u);
    EXPECT_EQ(r.predicted[0].size(), trace->size());
  }
}

TEST_F(ExplainerFixture, ZeroWeightSaysNothing) {
  const ExplanationResult r = select_messages(*encoder, *tree, spec->messages(), *trace, 0.0,
                                              SearchMode::exhaustive);
  EXPECT_EQ(r.mask, 0u);
  EXPECT_TRUE(r.chosen.empty());
}

TEST_F(ExplainerFixture, GreedyNeverBeatsExhaustive) {
  for (double alpha : {0.5, 1.0, 3.0}) {
    const auto ex = select_messages(*encoder, *tree, spec->messages(), *trace, alpha, SearchMode::exhaustive);
    const auto gr = select_messages(*encoder, *tree, spec->messages(), *trace, alpha, SearchMode::greedy);
    EXPECT_GE(gr.objective, ex.objective);
    EXPECT_LE(gr.evaluated, ex.evaluated);
  }
}

TEST_F(ExplainerFixture, RejectsForeignTreesAndNegativeWeight) {
  const FeatureEncoder with_next(*spec, true);
  EXPECT_THROW(Explainer(with_next, *tree, spec->messages()), SchemaMismatch);
  const Explainer ex(*encoder, *tree, spec->messages());
  EXPECT_THROW(ex.select({*trace}, -1.0, SearchMode::exhaustive), ConfigError);
}

TEST_F(ExplainerFixture, PredictTraceUsesMask) {
  const Explainer ex(*encoder, *tree, spec->messages());
  for (MessageMask m : {0u, 3u}) {
    const auto labels = ex.predict_trace(*trace, m);
    ASSERT_EQ(labels.size(), trace->size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      EXPECT_EQ(labels[i], predict(*tree, encoder->encode(trace->steps[i], m)));
    }
  }
}

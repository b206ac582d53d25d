#include "recon/learner.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>

#include "recon/error.hpp"

namespace recon {

namespace {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

void fnv_u64(std::uint64_t& h, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  fnv_bytes(h, bytes, 8);
}

void fnv_string(std::uint64_t& h, const std::string& s) {
  fnv_u64(h, s.size());
  fnv_bytes(h, s.data(), s.size());
}

double gini(std::size_t neg, std::size_t pos) {
  const double n = static_cast<double>(neg + pos);
  if (n == 0.0) return 0.0;
  const double p = static_cast<double>(pos) / n;
  return 2.0 * p * (1.0 - p);
}

Label majority(std::size_t neg, std::size_t pos) {
  return neg > pos ? Label::inexplicable : Label::explicable;
}

struct Split {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  int category = 0;
  double gain = 0.0;
};

class Builder {
 public:
  Builder(const FeatureSchema& schema, const std::vector<FeatureRow>& rows, const TreeHyper& hyper,
          std::vector<TreeNode>& nodes)
      : schema_(schema), rows_(rows), hyper_(hyper), nodes_(nodes) {}

  int build(std::vector<std::size_t>& idx, std::size_t depth) {
    std::size_t pos = 0;
    for (std::size_t i : idx) pos += rows_[i].label == Label::explicable ? 1 : 0;
    const std::size_t neg = idx.size() - pos;

    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(TreeNode{});
    nodes_[static_cast<std::size_t>(id)].count_inexplicable = neg;
    nodes_[static_cast<std::size_t>(id)].count_explicable = pos;
    nodes_[static_cast<std::size_t>(id)].label = majority(neg, pos);

    if (neg == 0 || pos == 0 || depth >= hyper_.max_depth || idx.size() < 2 * hyper_.min_leaf) {
      return id;
    }
    const Split split = best_split(idx, neg, pos);
    if (!split.found) return id;

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (std::size_t i : idx) {
      (goes_left(split, rows_[i].values) ? left : right).push_back(i);
    }
    idx.clear();
    idx.shrink_to_fit();
    const int l = build(left, depth + 1);
    const int r = build(right, depth + 1);
    TreeNode& node = nodes_[static_cast<std::size_t>(id)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.category = split.category;
    node.left = l;
    node.right = r;
    return id;
  }

  bool goes_left(const Split& s, const std::vector<int>& values) const {
    const int v = values[static_cast<std::size_t>(s.feature)];
    if (schema_.kinds[static_cast<std::size_t>(s.feature)] == FeatureKind::categorical) {
      return v == s.category;
    }
    return static_cast<double>(v) <= s.threshold;
  }

 private:
  Split best_split(const std::vector<std::size_t>& idx, std::size_t neg, std::size_t pos) const {
    const double n = static_cast<double>(idx.size());
    const double parent = gini(neg, pos);
    Split best;
    best.gain = -1.0;
    auto consider = [&](int feature, double threshold, int category, std::size_t ln,
                        std::size_t lp) {
      const std::size_t left = ln + lp;
      const std::size_t right = idx.size() - left;
      if (left < hyper_.min_leaf || right < hyper_.min_leaf || left == 0 || right == 0) return;
      const double gain = parent - (static_cast<double>(left) / n) * gini(ln, lp) -
                          (static_cast<double>(right) / n) * gini(neg - ln, pos - lp);
      if (gain > best.gain + 1e-12) {
        best = Split{true, feature, threshold, category, gain};
      }
    };

    for (std::size_t f = 0; f < schema_.size(); ++f) {
      // value -> (inexplicable, explicable) counts, ascending by value
      std::map<int, std::pair<std::size_t, std::size_t>> counts;
      for (std::size_t i : idx) {
        auto& c = counts[rows_[i].values[f]];
        (rows_[i].label == Label::explicable ? c.second : c.first) += 1;
      }
      if (counts.size() < 2) continue;
      const int feature = static_cast<int>(f);
      if (schema_.kinds[f] == FeatureKind::categorical) {
        for (const auto& [value, c] : counts) consider(feature, 0.0, value, c.first, c.second);
        continue;
      }
      std::size_t ln = 0;
      std::size_t lp = 0;
      auto it = counts.begin();
      auto next = std::next(it);
      for (; next != counts.end(); ++it, ++next) {
        ln += it->second.first;
        lp += it->second.second;
        const double threshold =
            (static_cast<double>(it->first) + static_cast<double>(next->first)) / 2.0;
        consider(feature, threshold, 0, ln, lp);
      }
    }
    return best;
  }

  const FeatureSchema& schema_;
  const std::vector<FeatureRow>& rows_;
  const TreeHyper& hyper_;
  std::vector<TreeNode>& nodes_;
};

void check_width(const FeatureSchema& schema, const std::vector<int>& values) {
  if (values.size() != schema.size()) {
    throw SchemaMismatch("row has " + std::to_string(values.size()) + " features, schema has " +
                         std::to_string(schema.size()));
  }
}

}  // namespace

std::string_view to_string(FeatureKind kind) noexcept {
  switch (kind) {
    case FeatureKind::numeric: return "numeric";
    case FeatureKind::categorical: return "categorical";
    case FeatureKind::binary: return "binary";
  }
  return "?";
}

FeatureKind parse_feature_kind(std::string_view text) {
  if (text == "numeric") return FeatureKind::numeric;
  if (text == "categorical") return FeatureKind::categorical;
  if (text == "binary") return FeatureKind::binary;
  throw SchemaMismatch("unknown feature kind '" + std::string(text) + "'");
}

std::uint64_t FeatureSchema::hash() const noexcept {
  std::uint64_t h = kFnvOffset;
  fnv_u64(h, names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    fnv_string(h, names[i]);
    fnv_u64(h, i < kinds.size() ? static_cast<std::uint64_t>(kinds[i]) : 99U);
  }
  return h;
}

FeatureEncoder::FeatureEncoder(const DomainSpec& spec, bool include_next_state)
    : spec_(&spec), include_next_(include_next_state) {
  for (const std::string& name : spec.feature_names()) {
    schema_.names.push_back(name);
    schema_.kinds.push_back(FeatureKind::numeric);
  }
  schema_.names.push_back("action");
  schema_.kinds.push_back(FeatureKind::categorical);
  for (const Message& m : spec.messages()) {
    schema_.names.push_back("msg:" + m.id);
    schema_.kinds.push_back(FeatureKind::binary);
  }
  if (include_next_) {
    for (const std::string& name : spec.feature_names()) {
      schema_.names.push_back("next_" + name);
      schema_.kinds.push_back(FeatureKind::numeric);
    }
  }
}

FeatureRow FeatureEncoder::encode(const Transition& t, MessageMask mask) const {
  const int n = spec_->num_states();
  if (t.state < 0 || t.state >= n || t.next < 0 || t.next >= n) {
    throw SchemaMismatch("transition state out of range for domain '" + spec_->name() + "'");
  }
  if (t.action < 0 || t.action >= static_cast<int>(spec_->actions().size())) {
    throw SchemaMismatch("action out of range for domain '" + spec_->name() + "'");
  }
  const std::size_t catalog = spec_->messages().size();
  if (catalog < kMaxCatalogSize && (mask >> catalog) != 0) {
    throw SchemaMismatch("message mask wider than the catalog");
  }
  FeatureRow row;
  row.values.reserve(schema_.size());
  for (int v : spec_->features(t.state).values) row.values.push_back(v);
  row.values.push_back(t.action);
  for (std::size_t i = 0; i < catalog; ++i) row.values.push_back(mask_has(mask, i) ? 1 : 0);
  if (include_next_) {
    for (int v : spec_->features(t.next).values) row.values.push_back(v);
  }
  return row;
}

FeatureRow FeatureEncoder::encode(const LabeledTransition& t) const {
  FeatureRow row = encode(t.transition, t.messages);
  row.label = t.label;
  return row;
}

std::vector<FeatureRow> FeatureEncoder::encode(const std::vector<LabeledTransition>& rows) const {
  std::vector<FeatureRow> out;
  out.reserve(rows.size());
  for (const LabeledTransition& t : rows) out.push_back(encode(t));
  return out;
}

std::size_t DecisionTree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<std::pair<int, std::size_t>> stack = {{0, 0}};
  std::size_t best = 0;
  while (!stack.empty()) {
    auto [id, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    const TreeNode& node = nodes[static_cast<std::size_t>(id)];
    if (!node.is_leaf()) {
      stack.emplace_back(node.left, d + 1);
      stack.emplace_back(node.right, d + 1);
    }
  }
  return best;
}

std::size_t DecisionTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

std::uint64_t DecisionTree::structure_hash() const {
  std::uint64_t h = kFnvOffset;
  fnv_u64(h, schema.hash());
  fnv_string(h, hyper.criterion);
  fnv_u64(h, hyper.min_leaf);
  fnv_u64(h, hyper.max_depth);
  fnv_u64(h, seed);
  fnv_u64(h, nodes.size());
  for (const TreeNode& n : nodes) {
    fnv_u64(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(n.feature)));
    fnv_u64(h, std::bit_cast<std::uint64_t>(n.threshold));
    fnv_u64(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(n.category)));
    fnv_u64(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(n.left)));
    fnv_u64(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(n.right)));
    fnv_u64(h, static_cast<std::uint64_t>(n.label));
    fnv_u64(h, n.count_inexplicable);
    fnv_u64(h, n.count_explicable);
  }
  return h;
}

DecisionTree train_tree(const FeatureSchema& schema, const std::vector<FeatureRow>& rows,
                        const TreeHyper& hyper, std::uint64_t seed) {
  if (rows.empty()) throw ConfigError("cannot train a tree on an empty dataset");
  if (hyper.criterion != "gini") throw ConfigError("unsupported criterion '" + hyper.criterion + "'");
  if (hyper.min_leaf == 0) throw ConfigError("min_leaf must be at least 1");
  if (schema.kinds.size() != schema.names.size()) throw SchemaMismatch("malformed feature schema");
  for (const FeatureRow& row : rows) check_width(schema, row.values);

  DecisionTree tree;
  tree.schema = schema;
  tree.hyper = hyper;
  tree.seed = seed;
  std::vector<std::size_t> idx(rows.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Builder(schema, rows, tree.hyper, tree.nodes).build(idx, 0);
  return tree;
}

Label predict(const DecisionTree& tree, const std::vector<int>& values) {
  check_width(tree.schema, values);
  if (tree.nodes.empty()) throw SchemaMismatch("empty tree");
  std::size_t id = 0;
  while (!tree.nodes[id].is_leaf()) {
    const TreeNode& node = tree.nodes[id];
    const int v = values[static_cast<std::size_t>(node.feature)];
    const bool left = tree.schema.kinds[static_cast<std::size_t>(node.feature)] ==
                              FeatureKind::categorical
                          ? v == node.category
                          : static_cast<double>(v) <= node.threshold;
    id = static_cast<std::size_t>(left ? node.left : node.right);
  }
  return tree.nodes[id].label;
}

Label predict(const DecisionTree& tree, const FeatureRow& row) { return predict(tree, row.values); }

double accuracy(const DecisionTree& tree, const std::vector<FeatureRow>& rows) {
  if (rows.empty()) return 0.0;
  std::size_t hit = 0;
  for (const FeatureRow& row : rows) hit += predict(tree, row) == row.label ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(rows.size());
}

double conflict_rate(const std::vector<FeatureRow>& rows) {
  if (rows.empty()) return 0.0;
  std::map<std::vector<int>, int> seen;  // bit 0: inexplicable seen, bit 1: explicable seen
  for (const FeatureRow& row : rows) {
    seen[row.values] |= row.label == Label::explicable ? 2 : 1;
  }
  std::size_t conflicted = 0;
  for (const FeatureRow& row : rows) conflicted += seen[row.values] == 3 ? 1 : 0;
  return static_cast<double>(conflicted) / static_cast<double>(rows.size());
}

CrossValidation cross_validate(const FeatureSchema& schema, const std::vector<FeatureRow>& rows,
                               std::size_t k, std::uint64_t seed, const TreeHyper& hyper) {
  if (k < 2) throw ConfigError("cross-validation needs k >= 2");
  if (k > rows.size()) {
    throw ConfigError("k = " + std::to_string(k) + " exceeds " + std::to_string(rows.size()) +
                      " rows");
  }
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    by_class[rows[i].label == Label::explicable ? 1 : 0].push_back(i);
  }
  Rng rng(seed);
  std::vector<std::size_t> fold_of(rows.size());
  std::size_t dealt = 0;
  for (auto& members : by_class) {
    rng.shuffle(std::span(members));
    for (std::size_t i : members) fold_of[i] = dealt++ % k;
  }

  CrossValidation out;
  for (std::size_t fold = 0; fold < k; ++fold) {
    std::vector<FeatureRow> train;
    std::vector<FeatureRow> test;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      (fold_of[i] == fold ? test : train).push_back(rows[i]);
    }
    const DecisionTree tree = train_tree(schema, train, hyper, derive_seed(seed, fold));
    out.fold_accuracy.push_back(accuracy(tree, test));
  }
  out.mean_accuracy = std::accumulate(out.fold_accuracy.begin(), out.fold_accuracy.end(), 0.0) /
                      static_cast<double>(k);
  return out;
}

std::vector<CurvePoint> training_curve(const FeatureSchema& schema,
                                       const std::vector<FeatureRow>& rows,
                                       const std::vector<std::size_t>& sizes,
                                       std::size_t test_count, std::uint64_t seed,
                                       const TreeHyper& hyper) {
  if (sizes.empty()) return {};
  const std::size_t largest = *std::max_element(sizes.begin(), sizes.end());
  if (test_count == 0) throw ConfigError("training curve needs a nonempty test set");
  if (largest + test_count > rows.size()) {
    throw ConfigError("training curve needs " + std::to_string(largest + test_count) +
                      " rows, have " + std::to_string(rows.size()));
  }
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span(order));

  std::vector<FeatureRow> test;
  for (std::size_t i = 0; i < test_count; ++i) test.push_back(rows[order[i]]);
  std::vector<CurvePoint> out;
  for (std::size_t size : sizes) {
    if (size == 0) throw ConfigError("training size must be positive");
    std::vector<FeatureRow> train;
    train.reserve(size);
    for (std::size_t i = 0; i < size; ++i) train.push_back(rows[order[test_count + i]]);
    const DecisionTree tree = train_tree(schema, train, hyper, seed);
    out.push_back({size, accuracy(tree, test)});
  }
  return out;
}

std::vector<CurvePoint> training_curve_by_fraction(const FeatureSchema& schema,
                                                   const std::vector<FeatureRow>& rows,
                                                   const std::vector<std::size_t>& sizes,
                                                   double test_fraction, std::uint64_t seed,
                                                   const TreeHyper& hyper) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test fraction must lie in (0, 1)");
  }
  const auto test_count =
      static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(rows.size())));
  return training_curve(schema, rows, sizes, std::max<std::size_t>(test_count, 1), seed, hyper);
}

}  // namespace recon

#include "recon/io.hpp"

#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "recon/error.hpp"

namespace recon {

using nlohmann::json;

namespace {

json parse_json(const std::string& text, std::size_t line, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(what + ": " + e.what(), line);
  }
}

template <typename T>
T field(const json& obj, const char* key, std::size_t line) {
  if (!obj.is_object() || !obj.contains(key)) throw ParseError("missing field", line, key);
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError("wrong type", line, key);
  }
}

void check_header(const json& header, const char* kind, std::size_t line) {
  const int version = field<int>(header, "schema_version", line);
  if (version != kFileSchemaVersion) {
    throw VersionMismatch("unsupported schema_version " + std::to_string(version) + " (expected " +
                          std::to_string(kFileSchemaVersion) + ")");
  }
  if (field<std::string>(header, "kind", line) != kind) {
    throw ParseError(std::string("expected a ") + kind + " file", line, "kind");
  }
}

json row_json(const LabeledTransition& row, std::size_t width) {
  json bits = json::array();
  for (std::size_t i = 0; i < width; ++i) bits.push_back(mask_has(row.messages, i) ? 1 : 0);
  return json{{"s", row.transition.state},
              {"a", row.transition.action},
              {"next", row.transition.next},
              {"messages", std::move(bits)},
              {"label", static_cast<int>(row.label)}};
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

Dataset make_dataset(const DomainSpec& spec, std::vector<LabeledTransition> rows) {
  Dataset data;
  data.domain = spec.name();
  for (const Message& m : spec.messages()) data.messages.push_back(m.id);
  data.rows = std::move(rows);
  return data;
}

void write_dataset(std::ostream& out, const Dataset& data) {
  json header = {{"schema_version", kFileSchemaVersion},
                 {"kind", "dataset"},
                 {"domain", data.domain},
                 {"messages", data.messages}};
  out << header.dump() << '\n';
  for (const LabeledTransition& row : data.rows) {
    out << row_json(row, data.messages.size()).dump() << '\n';
  }
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  std::size_t number = 0;
  Dataset data;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const json obj = parse_json(line, number, "malformed dataset line");
    if (!have_header) {
      check_header(obj, "dataset", number);
      data.domain = field<std::string>(obj, "domain", number);
      data.messages = field<std::vector<std::string>>(obj, "messages", number);
      if (data.messages.size() > kMaxCatalogSize) {
        throw ParseError("more than 32 messages", number, "messages");
      }
      have_header = true;
      continue;
    }
    LabeledTransition row;
    row.transition.state = field<StateId>(obj, "s", number);
    row.transition.action = field<ActionId>(obj, "a", number);
    row.transition.next = field<StateId>(obj, "next", number);
    const auto bits = field<std::vector<int>>(obj, "messages", number);
    if (bits.size() != data.messages.size()) {
      throw ParseError("message bit count does not match header", number, "messages");
    }
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (bits[i] != 0 && bits[i] != 1) throw ParseError("message bit not 0/1", number, "messages");
      if (bits[i] == 1) row.messages |= MessageMask{1} << i;
    }
    const int label = field<int>(obj, "label", number);
    if (label != 0 && label != 1) throw ParseError("label must be 0 or 1", number, "label");
    row.label = static_cast<Label>(label);
    data.rows.push_back(row);
  }
  if (!have_header) throw ParseError("dataset has no header line", number);
  return data;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out = open_out(path);
  write_dataset(out, data);
  if (!out) throw Error("write failed: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  return read_dataset(in);
}

DatasetWriter::DatasetWriter(const std::filesystem::path& path, const std::string& domain,
                             const std::vector<std::string>& messages)
    : out_(open_out(path)), width_(messages.size()) {
  out_ << json{{"schema_version", kFileSchemaVersion},
               {"kind", "dataset"},
               {"domain", domain},
               {"messages", messages}}
              .dump()
       << '\n';
  out_.flush();
}

void DatasetWriter::append(const LabeledTransition& row) {
  out_ << row_json(row, width_).dump() << '\n';
  out_.flush();
}

void DatasetWriter::flush() { out_.flush(); }

std::string tree_to_json(const DecisionTree& tree) {
  json schema = json::array();
  for (std::size_t i = 0; i < tree.schema.size(); ++i) {
    schema.push_back({{"name", tree.schema.names[i]},
                      {"kind", std::string(to_string(tree.schema.kinds[i]))}});
  }
  json hyper = {{"criterion", tree.hyper.criterion}, {"min_leaf", tree.hyper.min_leaf}};
  hyper["max_depth"] = tree.hyper.max_depth == TreeHyper{}.max_depth
                           ? json(nullptr)
                           : json(tree.hyper.max_depth);
  json nodes = json::array();
  for (const TreeNode& n : tree.nodes) {
    json node = {{"counts", {n.count_inexplicable, n.count_explicable}},
                 {"label", static_cast<int>(n.label)}};
    if (!n.is_leaf()) {
      node["feature"] = n.feature;
      if (tree.schema.kinds[static_cast<std::size_t>(n.feature)] == FeatureKind::categorical) {
        node["category"] = n.category;
      } else {
        node["threshold"] = n.threshold;
      }
      node["left"] = n.left;
      node["right"] = n.right;
    }
    nodes.push_back(std::move(node));
  }
  json out = {{"schema_version", kFileSchemaVersion},
              {"kind", "tree"},
              {"schema_hash", hex64(tree.schema.hash())},
              {"features", std::move(schema)},
              {"hyper", std::move(hyper)},
              {"seed", tree.seed},
              {"nodes", std::move(nodes)}};
  return out.dump(1) + "\n";
}

DecisionTree tree_from_json(const std::string& text) {
  const json obj = parse_json(text, 0, "malformed tree file");
  check_header(obj, "tree", 0);
  DecisionTree tree;
  try {
    for (const json& f : obj.at("features")) {
      tree.schema.names.push_back(f.at("name").get<std::string>());
      tree.schema.kinds.push_back(parse_feature_kind(f.at("kind").get<std::string>()));
    }
    if (hex64(tree.schema.hash()) != obj.at("schema_hash").get<std::string>()) {
      throw SchemaMismatch("tree schema_hash does not match its feature list");
    }
    const json& hyper = obj.at("hyper");
    tree.hyper.criterion = hyper.at("criterion").get<std::string>();
    tree.hyper.min_leaf = hyper.at("min_leaf").get<std::size_t>();
    if (!hyper.at("max_depth").is_null()) tree.hyper.max_depth = hyper.at("max_depth").get<std::size_t>();
    tree.seed = obj.at("seed").get<std::uint64_t>();
    const int count = static_cast<int>(obj.at("nodes").size());
    for (const json& n : obj.at("nodes")) {
      TreeNode node;
      node.count_inexplicable = n.at("counts").at(0).get<std::size_t>();
      node.count_explicable = n.at("counts").at(1).get<std::size_t>();
      const int label = n.at("label").get<int>();
      if (label != 0 && label != 1) throw ParseError("label must be 0 or 1", 0, "nodes.label");
      node.label = static_cast<Label>(label);
      if (n.contains("feature")) {
        node.feature = n.at("feature").get<int>();
        if (node.feature < 0 || node.feature >= static_cast<int>(tree.schema.size())) {
          throw SchemaMismatch("tree node splits on an unknown feature");
        }
        if (n.contains("category")) node.category = n.at("category").get<int>();
        if (n.contains("threshold")) node.threshold = n.at("threshold").get<double>();
        node.left = n.at("left").get<int>();
        node.right = n.at("right").get<int>();
        if (node.left <= 0 || node.left >= count || node.right <= 0 || node.right >= count) {
          throw ParseError("tree child index out of range", 0, "nodes");
        }
      }
      tree.nodes.push_back(node);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed tree file: ") + e.what());
  }
  if (tree.nodes.empty()) throw ParseError("tree has no nodes", 0, "nodes");
  return tree;
}

void save_tree(const std::filesystem::path& path, const DecisionTree& tree) {
  write_text_file(path, tree_to_json(tree));
}

DecisionTree load_tree(const std::filesystem::path& path) {
  return tree_from_json(read_text_file(path));
}

void write_results(std::ostream& out, const ResultsFile& results) {
  std::string config = results.config_json.empty() ? "{}" : results.config_json;
  if (config.find('\n') != std::string::npos) config = json::parse(config).dump();
  out << "# config: " << config << '\n';
  out << "instance,train_size,test_accuracy,seed\n";
  char buf[64];
  for (const ResultRow& row : results.rows) {
    std::snprintf(buf, sizeof buf, "%.17g", row.test_accuracy);
    out << row.instance << ',' << row.train_size << ',' << buf << ',' << row.seed << '\n';
  }
}

ResultsFile read_results(std::istream& in) {
  ResultsFile results;
  std::string line;
  std::size_t number = 0;
  bool have_columns = false;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("# config: ", 0) == 0) {
      results.config_json = line.substr(10);
      continue;
    }
    if (line[0] == '#') continue;
    if (!have_columns) {
      if (line != "instance,train_size,test_accuracy,seed") {
        throw ParseError("unexpected results header", number);
      }
      have_columns = true;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 4) throw ParseError("expected 4 columns", number);
    ResultRow row;
    auto parse_uint = [&](const std::string& s, auto& value, const char* name) {
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
      if (ec != std::errc{} || ptr != s.data() + s.size()) throw ParseError("bad integer", number, name);
    };
    parse_uint(cells[0], row.instance, "instance");
    parse_uint(cells[1], row.train_size, "train_size");
    parse_uint(cells[3], row.seed, "seed");
    char* end = nullptr;
    row.test_accuracy = std::strtod(cells[2].c_str(), &end);
    if (end != cells[2].c_str() + cells[2].size()) throw ParseError("bad number", number, "test_accuracy");
    results.rows.push_back(row);
  }
  if (!have_columns) throw ParseError("results file has no column header", number);
  return results;
}

void save_results(const std::filesystem::path& path, const ResultsFile& results) {
  std::ofstream out = open_out(path);
  write_results(out, results);
  if (!out) throw Error("write failed: " + path.string());
}

ResultsFile load_results(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  return read_results(in);
}

namespace {

json trace_json(const Trajectory& t) {
  json steps = json::array();
  for (const Transition& s : t.steps) steps.push_back({s.state, s.action, s.next});
  return json{{"start", t.start}, {"steps", std::move(steps)}};
}

Trajectory trace_from(const json& obj) {
  Trajectory t;
  t.start = obj.at("start").get<StateId>();
  for (const json& s : obj.at("steps")) {
    if (!s.is_array() || s.size() != 3) throw ParseError("trace step must be [s, a, next]", 0, "steps");
    t.steps.push_back({s[0].get<StateId>(), s[1].get<ActionId>(), s[2].get<StateId>()});
  }
  if (!t.chain_consistent()) throw ParseError("trace is not chain-consistent", 0, "steps");
  return t;
}

}  // namespace

std::string traces_to_json(const std::string& domain, const std::vector<Trajectory>& traces) {
  json list = json::array();
  for (const Trajectory& t : traces) list.push_back(trace_json(t));
  return json{{"schema_version", kFileSchemaVersion},
              {"kind", "traces"},
              {"domain", domain},
              {"traces", std::move(list)}}
             .dump(1) +
         "\n";
}

std::vector<Trajectory> traces_from_json(const std::string& text) {
  const json obj = parse_json(text, 0, "malformed trace file");
  try {
    if (obj.contains("traces")) {
      check_header(obj, "traces", 0);
      std::vector<Trajectory> out;
      for (const json& t : obj.at("traces")) out.push_back(trace_from(t));
      return out;
    }
    return {trace_from(obj)};
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed trace file: ") + e.what());
  }
}

void save_traces(const std::filesystem::path& path, const std::string& domain,
                 const std::vector<Trajectory>& traces) {
  write_text_file(path, traces_to_json(domain, traces));
}

std::vector<Trajectory> load_traces(const std::filesystem::path& path) {
  return traces_from_json(read_text_file(path));
}

ParamAssignment params_from_json(const DomainSpec& spec, const std::string& text,
                                 ParamAssignment base) {
  const json obj = parse_json(text, 0, "malformed parameter file");
  if (!obj.is_object()) throw ParseError("parameters must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    const ParamId id{key};
    if (!spec.schema().contains(id)) throw ConfigError("unknown parameter '" + key + "'");
    if (spec.is_position_param(id)) {
      if (!value.is_array() || value.size() != 2 || !value[0].is_number_integer() ||
          !value[1].is_number_integer()) {
        throw ParseError("position must be [x, y]", 0, key);
      }
      const GridPos pos{value[0].get<int>(), value[1].get<int>()};
      if (pos.x < 0 || pos.y < 0 || pos.x >= spec.width() || pos.y >= spec.height()) {
        throw ConfigError("position for '" + key + "' is outside the grid");
      }
      base[id] = spec.encode_position(pos);
    } else {
      if (!value.is_number()) throw ParseError("expected a number", 0, key);
      base[id] = value.get<double>();
    }
    if (!spec.schema().at(id).is_legal(base[id])) {
      throw ConfigError("illegal value for '" + key + "'");
    }
  }
  return base;
}

std::string params_to_json(const DomainSpec& spec, const ParamAssignment& params) {
  json obj = json::object();
  for (const auto& [id, value] : params) {
    if (spec.is_position_param(id)) {
      const GridPos p = spec.decode_position(value);
      obj[id.key] = {p.x, p.y};
    } else {
      obj[id.key] = value;
    }
  }
  return obj.dump();
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out = open_out(path);
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace recon

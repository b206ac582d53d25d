#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <string>
#include <vector>

#include "recon/domain.hpp"
#include "recon/learner.hpp"
#include "recon/sim_user.hpp"

namespace recon {

inline constexpr int kFileSchemaVersion = 1;

/// Labeled transitions for one domain and message catalog.
struct Dataset {
  std::string domain;
  std::vector<std::string> messages;  // catalog ids, bit order
  std::vector<LabeledTransition> rows;

  bool operator==(const Dataset&) const = default;
};

Dataset make_dataset(const DomainSpec& spec, std::vector<LabeledTransition> rows);

/// JSONL: a header object on the first line, then one row per line:
///   {"schema_version":1,"kind":"dataset","domain":...,"messages":[ids]}
///   {"s":12,"a":3,"next":13,"messages":[0,1,0,...],"label":1}
void write_dataset(std::ostream& out, const Dataset& data);
/// Throws ParseError (with line) on malformed input and VersionMismatch on an
/// unknown schema_version.
Dataset read_dataset(std::istream& in);
void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path);

/// Append-only dataset file: the header is written on open, rows are flushed
/// as they are appended.
class DatasetWriter {
 public:
  DatasetWriter(const std::filesystem::path& path, const std::string& domain,
                const std::vector<std::string>& messages);
  void append(const LabeledTransition& row);
  void flush();

 private:
  std::ofstream out_;
  std::size_t width_;
};

std::string tree_to_json(const DecisionTree& tree);
DecisionTree tree_from_json(const std::string& text);
void save_tree(const std::filesystem::path& path, const DecisionTree& tree);
DecisionTree load_tree(const std::filesystem::path& path);

struct ResultRow {
  std::size_t instance = 0;
  std::size_t train_size = 0;
  double test_accuracy = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const ResultRow&) const = default;
};

/// CSV with the run configuration embedded as a "# config: {json}" comment
/// line ahead of the column header. Accuracies use 17 significant digits.
struct ResultsFile {
  std::string config_json;
  std::vector<ResultRow> rows;

  bool operator==(const ResultsFile&) const = default;
};

void write_results(std::ostream& out, const ResultsFile& results);
ResultsFile read_results(std::istream& in);
void save_results(const std::filesystem::path& path, const ResultsFile& results);
ResultsFile load_results(const std::filesystem::path& path);

/// {"schema_version":1,"kind":"traces","domain":...,"traces":[{"start":s,"steps":[[s,a,n],...]}]}
std::string traces_to_json(const std::string& domain, const std::vector<Trajectory>& traces);
/// Also accepts a single {"start":...,"steps":...} object.
std::vector<Trajectory> traces_from_json(const std::string& text);
void save_traces(const std::filesystem::path& path, const std::string& domain,
                 const std::vector<Trajectory>& traces);
std::vector<Trajectory> load_traces(const std::filesystem::path& path);

/// Parameter overrides as {"name": value, "box_position": [x, y]}. Unknown
/// names raise ConfigError.
ParamAssignment params_from_json(const DomainSpec& spec, const std::string& text,
                                 ParamAssignment base);
std::string params_to_json(const DomainSpec& spec, const ParamAssignment& params);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace recon

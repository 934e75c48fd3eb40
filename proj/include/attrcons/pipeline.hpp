#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "attrcons/alignment.hpp"
#include "attrcons/analysis.hpp"
#include "attrcons/attribution.hpp"
#include "attrcons/corpus.hpp"
#include "attrcons/toy_model.hpp"
#include "attrcons/transport.hpp"

namespace attrcons {

struct RunConfig {
  std::filesystem::path corpus;
  /// Toy-model checkpoint. For `score`, exactly one of `model` and `attributions` is set.
  std::filesystem::path model;
  std::filesystem::path attributions;
  std::map<std::string, std::filesystem::path> embeddings;
  /// Per-pair consistency file (input of `report` and `correlate`).
  std::filesystem::path scores;
  std::filesystem::path performance;
  std::filesystem::path output_dir = "out";
  /// When set, `score` writes one transport dump per pair into this directory.
  std::filesystem::path debug_dump;

  TokenizerPolicy tokenizer = TokenizerPolicy::whitespace;
  int steps = 50;
  QuadratureRule rule = QuadratureRule::trapezoid;
  NormalizationMode normalization = NormalizationMode::abs_l1;
  /// Records whose completeness residual exceeds this are counted and reported.
  double completeness_threshold = 1e-3;
  Head head = Head::classification;
  OverallMode aggregation = OverallMode::pair_mean;
  bool include_source = false;
  std::vector<ReportFormat> formats{ReportFormat::markdown, ReportFormat::csv, ReportFormat::json};
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

enum class Stage { attribute, score, correlate, report };

std::string_view to_string(Stage stage);

/// Throws ConfigError for missing/conflicting settings or files that do not exist.
void validate_config(const RunConfig& config, Stage stage);

/// `key = value` lines (TOML subset) that the CLI can read back with --config.
std::string resolved_config_text(const RunConfig& config, Stage stage);

/// Runs fn(i) for i in [0, n) on `width` workers. If any call throws, the exception of the
/// lowest failing index is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t width, const std::function<void(std::size_t)>& fn);

/// Two records per pair (source, target), in corpus order.
std::vector<AttributionVector> compute_attributions(const std::vector<ParallelPair>& pairs,
                                                    const ToyModel& model,
                                                    const AttributionOptions& options,
                                                    std::size_t threads);

void write_attributions(std::ostream& out, const std::vector<AttributionVector>& records);
/// Schema-validated load; errors cite the line number.
std::vector<AttributionVector> load_attributions(const std::filesystem::path& path);
std::vector<AttributionVector> read_attributions(std::istream& in);

/// Loads one table per language; languages mapped to the same file share one table.
EmbeddingTables load_tables(const std::map<std::string, std::filesystem::path>& paths,
                            bool lowercase_keys);

/// Pairs source/target records of `head` by pair id and scores each pair. Output is sorted
/// by pair id. Throws DataError listing languages without a table. A non-empty `debug_dir`
/// receives one transport dump per pair.
std::vector<PairScore> score_attributions(const std::vector<AttributionVector>& records,
                                          Head head, const EmbeddingTables& tables,
                                          std::size_t threads,
                                          const std::filesystem::path& debug_dir = {});

/// File name used for a pair's transport dump: `<rank>-<id>.transport.txt`, with characters
/// outside [A-Za-z0-9._-] replaced by '_'. `rank` is the pair's position in id order.
std::string debug_dump_name(std::size_t rank, const std::string& pair_id);

void write_scores(std::ostream& out, const std::vector<PairScore>& scores);
std::vector<PairScore> load_scores(const std::filesystem::path& path);
std::vector<PairScore> read_scores(std::istream& in);

struct AttributeOutcome {
  std::filesystem::path attributions_file;
  std::size_t records = 0;
  double max_convergence_delta = 0.0;
  std::size_t above_threshold = 0;
};

struct ScoreOutcome {
  std::vector<PairScore> scores;
  ConsistencyReport report;
  std::filesystem::path scores_file;
  std::vector<std::filesystem::path> report_files;
};

struct CorrelateOutcome {
  CorrelationResult result;
  std::filesystem::path plot_file;
};

AttributeOutcome cmd_attribute(const RunConfig& config);
ScoreOutcome cmd_score(const RunConfig& config);
CorrelateOutcome cmd_correlate(const RunConfig& config);
/// Re-renders report files from a per-pair scores file.
std::vector<std::filesystem::path> cmd_report(const RunConfig& config);

enum class FileKind { corpus, attributions, embeddings, model, scores };

std::optional<FileKind> parse_file_kind(std::string_view text);

struct ValidationReport {
  std::size_t records = 0;
  std::vector<std::string> errors;
  bool ok() const { return errors.empty(); }
};

/// Collects every schema problem in the file instead of stopping at the first.
ValidationReport validate_file(FileKind kind, const std::filesystem::path& path);

}  // namespace attrcons

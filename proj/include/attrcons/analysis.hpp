#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace attrcons {

struct PairScore {
  std::string pair_id;
  std::string source_language;
  std::string target_language;
  double consistency = 0.0;
  std::size_t iterations = 0;

  friend bool operator==(const PairScore&, const PairScore&) = default;
};

enum class OverallMode { pair_mean, language_mean };

std::string_view to_string(OverallMode mode);
std::optional<OverallMode> parse_overall_mode(std::string_view text);

struct AggregateOptions {
  OverallMode overall = OverallMode::pair_mean;
  /// Count same-language (source) pairs in the overall figure.
  bool include_source = false;
};

/// Scores grouped by target language. Languages that appear as a source language are the
/// "source" columns; their consistency with themselves is 1 by construction.
struct ConsistencyReport {
  std::map<std::string, double> per_pair;
  std::map<std::string, double> per_language;
  std::map<std::string, std::size_t> counts;
  std::set<std::string> source_languages;
  double overall = 0.0;
  std::size_t overall_count = 0;
  AggregateOptions options;
};

/// Throws DataError on empty input or duplicate pair ids. Sums run in pair-id order so the
/// result does not depend on input order.
ConsistencyReport aggregate(std::span<const PairScore> scores, AggregateOptions options = {});

/// Language -> task metric in [0, 1].
using PerformanceTable = std::map<std::string, double>;

/// CSV ("language,metric" with an optional header row) or, for a .json extension, a JSON
/// object mapping language to metric.
PerformanceTable load_performance(const std::filesystem::path& path);
PerformanceTable parse_performance_csv(std::istream& in);

/// Pearson product-moment coefficient. Throws UndefinedCorrelation for fewer than two points
/// or a zero-variance series, DataError for a length mismatch.
double pearson(std::span<const double> x, std::span<const double> y);

struct CorrelationResult {
  std::vector<std::string> languages;
  std::vector<double> consistency;
  std::vector<double> performance;
  double coefficient = 0.0;
};

/// Pearson over the per-language (consistency, performance) pairs shared by both tables,
/// excluding source languages, in lexicographic language order.
CorrelationResult correlate(const ConsistencyReport& report, const PerformanceTable& perf);

enum class ReportFormat { csv, json, markdown };

std::string_view to_string(ReportFormat format);
std::optional<ReportFormat> parse_report_format(std::string_view text);
std::string_view file_extension(ReportFormat format);

/// Byte-deterministic rendering with three-decimal values.
std::string render_report(const ConsistencyReport& report, const PerformanceTable* perf,
                          ReportFormat format);

/// "language,consistency,performance" rows for external plotting.
std::string render_plot_data(const CorrelationResult& result);

}  // namespace attrcons

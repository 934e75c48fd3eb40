#include "attrcons/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "attrcons/corpus.hpp"
#include "attrcons/errors.hpp"

namespace attrcons {
namespace {

std::string fixed3(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  // Avoid "-0.000" so sign noise never changes bytes.
  if (std::string_view(buf) == "-0.000") return "0.000";
  return buf;
}

std::string json_string(std::string_view s) { return nlohmann::json(std::string(s)).dump(); }

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& text, double& out) {
  if (text.empty()) return false;
  char* end = nullptr;
  out = std::strtod(text.c_str(), &end);
  return end == text.c_str() + text.size() && std::isfinite(out);
}

void add_metric(PerformanceTable& table, const std::string& language, double metric,
                const std::string& where) {
  if (!is_language_code(language)) throw DataError(where + ": unknown language code \"" + language + "\"");
  if (metric < 0.0 || metric > 1.0) throw DataError(where + ": metric must lie in [0, 1]");
  if (!table.emplace(language, metric).second) {
    throw DataError(where + ": duplicate language \"" + language + "\"");
  }
}

}  // namespace

std::string_view to_string(OverallMode mode) {
  return mode == OverallMode::pair_mean ? "pair_mean" : "language_mean";
}

std::optional<OverallMode> parse_overall_mode(std::string_view text) {
  if (text == "pair_mean" || text == "pair-mean") return OverallMode::pair_mean;
  if (text == "language_mean" || text == "language-mean") return OverallMode::language_mean;
  return std::nullopt;
}

ConsistencyReport aggregate(std::span<const PairScore> scores, AggregateOptions options) {
  if (scores.empty()) throw DataError("cannot aggregate an empty set of scores");

  std::vector<const PairScore*> sorted;
  sorted.reserve(scores.size());
  for (const auto& s : scores) sorted.push_back(&s);
  std::sort(sorted.begin(), sorted.end(),
            [](const PairScore* a, const PairScore* b) { return a->pair_id < b->pair_id; });

  ConsistencyReport report;
  report.options = options;
  std::map<std::string, double> sums;
  // Per-language sums restricted to the pairs eligible for the overall figure.
  std::map<std::string, std::pair<double, std::size_t>> eligible_by_language;
  double eligible_sum = 0.0;
  std::size_t eligible_count = 0;
  double all_sum = 0.0;

  for (const PairScore* s : sorted) {
    if (!report.per_pair.emplace(s->pair_id, s->consistency).second) {
      throw DataError("duplicate pair id \"" + s->pair_id + "\"");
    }
    report.source_languages.insert(s->source_language);
    sums[s->target_language] += s->consistency;
    ++report.counts[s->target_language];
    all_sum += s->consistency;
    if (options.include_source || s->source_language != s->target_language) {
      eligible_sum += s->consistency;
      ++eligible_count;
      auto& acc = eligible_by_language[s->target_language];
      acc.first += s->consistency;
      ++acc.second;
    }
  }
  for (const auto& [lang, total] : sums) {
    report.per_language[lang] = total / static_cast<double>(report.counts[lang]);
  }

  if (eligible_count == 0) {
    // Only same-language pairs were scored; fall back to all of them.
    eligible_sum = all_sum;
    eligible_count = sorted.size();
    for (const auto& [lang, total] : sums) eligible_by_language[lang] = {total, report.counts[lang]};
  }
  report.overall_count = eligible_count;
  if (options.overall == OverallMode::pair_mean) {
    report.overall = eligible_sum / static_cast<double>(eligible_count);
  } else {
    double total = 0.0;
    for (const auto& [lang, acc] : eligible_by_language) {
      total += acc.first / static_cast<double>(acc.second);
    }
    report.overall = total / static_cast<double>(eligible_by_language.size());
  }
  return report;
}

PerformanceTable parse_performance_csv(std::istream& in) {
  PerformanceTable table;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    const std::string where = "line " + std::to_string(line_number);
    if (comma == std::string::npos) throw DataError(where + ": expected \"language,metric\"");
    const std::string lang = trim(line.substr(0, comma));
    const std::string value = trim(line.substr(comma + 1));
    double metric = 0.0;
    if (!parse_number(value, metric)) {
      if (table.empty() && line_number == 1) continue;  // header
      throw DataError(where + ": non-numeric metric \"" + value + "\"");
    }
    add_metric(table, lang, metric, where);
  }
  return table;
}

PerformanceTable load_performance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open performance table " + path.string());
  try {
    if (path.extension() == ".json") {
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(in);
      } catch (const nlohmann::json::parse_error& e) {
        throw DataError(std::string("invalid JSON: ") + e.what());
      }
      if (!doc.is_object()) throw DataError("performance JSON must be an object");
      PerformanceTable table;
      for (const auto& [lang, value] : doc.items()) {
        if (!value.is_number()) throw DataError("metric for \"" + lang + "\" is not a number");
        add_metric(table, lang, value.get<double>(), "entry \"" + lang + "\"");
      }
      return table;
    }
    return parse_performance_csv(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("pearson: series lengths differ");
  if (x.size() < 2) throw UndefinedCorrelation("pearson: need at least two points");
  auto constant = [](std::span<const double> s) {
    return std::all_of(s.begin(), s.end(), [&](double v) { return v == s.front(); });
  };
  if (constant(x) || constant(y)) throw UndefinedCorrelation("pearson: zero variance");

  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelation("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrelationResult correlate(const ConsistencyReport& report, const PerformanceTable& perf) {
  CorrelationResult result;
  for (const auto& [lang, c] : report.per_language) {
    if (report.source_languages.count(lang)) continue;
    auto it = perf.find(lang);
    if (it == perf.end()) continue;
    result.languages.push_back(lang);
    result.consistency.push_back(c);
    result.performance.push_back(it->second);
  }
  if (result.languages.size() < 2) {
    throw UndefinedCorrelation("correlation needs at least two shared non-source languages, found " +
                               std::to_string(result.languages.size()));
  }
  result.coefficient = pearson(result.consistency, result.performance);
  return result;
}

std::string_view to_string(ReportFormat format) {
  switch (format) {
    case ReportFormat::csv: return "csv";
    case ReportFormat::json: return "json";
    case ReportFormat::markdown: return "markdown";
  }
  return "markdown";
}

std::optional<ReportFormat> parse_report_format(std::string_view text) {
  if (text == "csv") return ReportFormat::csv;
  if (text == "json") return ReportFormat::json;
  if (text == "markdown" || text == "md") return ReportFormat::markdown;
  return std::nullopt;
}

std::string_view file_extension(ReportFormat format) {
  switch (format) {
    case ReportFormat::csv: return ".csv";
    case ReportFormat::json: return ".json";
    case ReportFormat::markdown: return ".md";
  }
  return ".md";
}

std::string render_report(const ConsistencyReport& report, const PerformanceTable* perf,
                          ReportFormat format) {
  auto metric_of = [&](const std::string& lang) -> std::optional<double> {
    if (!perf) return std::nullopt;
    auto it = perf->find(lang);
    return it == perf->end() ? std::nullopt : std::optional<double>(it->second);
  };
  std::ostringstream out;
  switch (format) {
    case ReportFormat::markdown: {
      out << "| language | C | n |" << (perf ? " metric |" : "") << '\n';
      out << "|---|---:|---:|" << (perf ? "---:|" : "") << '\n';
      for (const auto& [lang, c] : report.per_language) {
        out << "| " << lang << " | " << fixed3(c) << " | " << report.counts.at(lang) << " |";
        if (perf) {
          const auto m = metric_of(lang);
          out << ' ' << (m ? fixed3(*m) : "-") << " |";
        }
        out << '\n';
      }
      out << "| overall | " << fixed3(report.overall) << " | " << report.overall_count << " |";
      if (perf) out << " - |";
      out << '\n';
      break;
    }
    case ReportFormat::csv: {
      out << "language,C,n" << (perf ? ",metric" : "") << '\n';
      for (const auto& [lang, c] : report.per_language) {
        out << csv_field(lang) << ',' << fixed3(c) << ',' << report.counts.at(lang);
        if (perf) {
          const auto m = metric_of(lang);
          out << ',' << (m ? fixed3(*m) : "");
        }
        out << '\n';
      }
      out << "overall," << fixed3(report.overall) << ',' << report.overall_count
          << (perf ? "," : "") << '\n';
      break;
    }
    case ReportFormat::json: {
      out << "{\n  \"languages\": [";
      bool first = true;
      for (const auto& [lang, c] : report.per_language) {
        out << (first ? "\n" : ",\n");
        first = false;
        out << "    {\"language\": " << json_string(lang) << ", \"C\": " << fixed3(c)
            << ", \"n\": " << report.counts.at(lang)
            << ", \"source\": " << (report.source_languages.count(lang) ? "true" : "false");
        if (perf) {
          const auto m = metric_of(lang);
          out << ", \"metric\": " << (m ? fixed3(*m) : "null");
        }
        out << '}';
      }
      out << "\n  ],\n  \"overall\": {\"C\": " << fixed3(report.overall)
          << ", \"n\": " << report.overall_count << ", \"mode\": \""
          << to_string(report.options.overall) << "\", \"include_source\": "
          << (report.options.include_source ? "true" : "false") << "}\n}\n";
      break;
    }
  }
  return out.str();
}

std::string render_plot_data(const CorrelationResult& result) {
  std::ostringstream out;
  char buf[80];
  out << "language,consistency,performance\n";
  for (std::size_t i = 0; i < result.languages.size(); ++i) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", result.consistency[i], result.performance[i]);
    out << csv_field(result.languages[i]) << buf;
  }
  return out.str();
}

}  // namespace attrcons

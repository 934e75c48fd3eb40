#include "attrcons/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "attrcons/errors.hpp"

namespace attrcons {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void require_file(const fs::path& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("missing required setting: ") + what);
  if (!fs::exists(path)) throw ConfigError(std::string(what) + " does not exist: " + path.string());
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

std::string toml_string(const std::string& s) { return json(s).dump(); }

// Wraps a per-pair failure with the pair id and stage, keeping the exception category.
[[noreturn]] void rethrow_for_pair(const std::string& pair_id, Stage stage) {
  const std::string prefix = "pair \"" + pair_id + "\" [" + std::string(to_string(stage)) + "]: ";
  try {
    throw;
  } catch (const InvariantError& e) {
    throw InvariantError(prefix + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const std::exception& e) {
    throw DataError(prefix + e.what());
  }
}

template <class Parse>
void for_each_jsonl(std::istream& in, Parse&& parse) {
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      parse(json::parse(line), line_number);
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_number) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_number) + ": " + e.what());
    }
  }
}

PairScore score_from_json(const json& rec) {
  auto str = [&](const char* key) {
    if (!rec.contains(key) || !rec.at(key).is_string()) {
      throw DataError(std::string("missing string field \"") + key + "\"");
    }
    return rec.at(key).get<std::string>();
  };
  PairScore s;
  s.pair_id = str("pair_id");
  s.source_language = str("source_lang");
  s.target_language = str("target_lang");
  if (!rec.contains("consistency") || !rec.at("consistency").is_number()) {
    throw DataError("missing numeric field \"consistency\"");
  }
  s.consistency = rec.at("consistency").get<double>();
  if (!std::isfinite(s.consistency) || s.consistency > 1.0 + kTransportTolerance ||
      s.consistency < -1.0 - kTransportTolerance) {
    throw DataError("\"consistency\" outside [-1, 1]");
  }
  if (rec.contains("iterations")) s.iterations = rec.at("iterations").get<std::size_t>();
  return s;
}

AggregateOptions aggregate_options(const RunConfig& config) {
  return AggregateOptions{config.aggregation, config.include_source};
}

std::vector<fs::path> write_reports(const RunConfig& config, const ConsistencyReport& report,
                                    const PerformanceTable* perf) {
  std::vector<fs::path> files;
  for (ReportFormat f : config.formats) {
    const fs::path path = config.output_dir / ("report" + std::string(file_extension(f)));
    write_text(path, render_report(report, perf, f));
    files.push_back(path);
  }
  return files;
}

void write_resolved_config(const RunConfig& config, Stage stage) {
  write_text(config.output_dir / (std::string(to_string(stage)) + ".resolved.toml"),
             resolved_config_text(config, stage));
}

}  // namespace

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::attribute: return "attribute";
    case Stage::score: return "score";
    case Stage::correlate: return "correlate";
    case Stage::report: return "report";
  }
  return "score";
}

void validate_config(const RunConfig& config, Stage stage) {
  if (config.threads == 0) throw ConfigError("threads must be >= 1");
  if (config.steps < 1) throw ConfigError("steps must be >= 1");
  if (!(config.completeness_threshold >= 0.0)) throw ConfigError("completeness threshold must be >= 0");
  if (config.output_dir.empty()) throw ConfigError("missing required setting: output directory");
  switch (stage) {
    case Stage::attribute:
      require_file(config.corpus, "corpus");
      require_file(config.model, "model");
      break;
    case Stage::score:
      if (config.model.empty() == config.attributions.empty()) {
        throw ConfigError("score needs exactly one of --model (with --corpus) or --attributions");
      }
      if (!config.model.empty()) {
        require_file(config.model, "model");
        require_file(config.corpus, "corpus");
      } else {
        require_file(config.attributions, "attributions");
      }
      if (config.embeddings.empty()) throw ConfigError("score needs at least one --embeddings lang=path");
      for (const auto& [lang, path] : config.embeddings) {
        if (!is_language_code(lang)) throw ConfigError("unknown language code in --embeddings: " + lang);
        require_file(path, ("embedding table for " + lang).c_str());
      }
      if (config.formats.empty()) throw ConfigError("no report formats requested");
      break;
    case Stage::correlate:
      require_file(config.scores, "scores");
      require_file(config.performance, "performance");
      break;
    case Stage::report:
      require_file(config.scores, "scores");
      if (!config.performance.empty()) require_file(config.performance, "performance");
      if (config.formats.empty()) throw ConfigError("no report formats requested");
      break;
  }
}

std::string resolved_config_text(const RunConfig& config, Stage stage) {
  std::ostringstream out;
  out << "# resolved configuration for `" << to_string(stage) << "`\n";
  auto path = [&](const char* key, const fs::path& p) {
    if (!p.empty()) out << key << " = " << toml_string(fs::absolute(p).lexically_normal().string()) << '\n';
  };
  path("corpus", config.corpus);
  path("model", config.model);
  path("attributions", config.attributions);
  if (!config.embeddings.empty()) {
    out << "embeddings = [";
    bool first = true;
    for (const auto& [lang, p] : config.embeddings) {
      out << (first ? "" : ", ")
          << toml_string(lang + "=" + fs::absolute(p).lexically_normal().string());
      first = false;
    }
    out << "]\n";
  }
  path("scores", config.scores);
  path("performance", config.performance);
  path("out-dir", config.output_dir);
  path("debug-dump", config.debug_dump);
  out << "tokenizer = " << toml_string(std::string(to_string(config.tokenizer))) << '\n';
  out << "steps = " << config.steps << '\n';
  out << "rule = " << toml_string(std::string(to_string(config.rule))) << '\n';
  out << "normalization = " << toml_string(std::string(to_string(config.normalization))) << '\n';
  out << "completeness-threshold = " << json(config.completeness_threshold).dump() << '\n';
  out << "head = " << toml_string(std::string(to_string(config.head))) << '\n';
  out << "aggregation = " << toml_string(std::string(to_string(config.aggregation))) << '\n';
  out << "include-source = " << (config.include_source ? "true" : "false") << '\n';
  out << "format = [";
  for (std::size_t i = 0; i < config.formats.size(); ++i) {
    out << (i ? ", " : "") << toml_string(std::string(to_string(config.formats[i])));
  }
  out << "]\n";
  out << "seed = " << config.seed << '\n';
  return out.str();
}

void parallel_for(std::size_t n, std::size_t width, const std::function<void(std::size_t)>& fn) {
  width = std::max<std::size_t>(1, std::min(width, n));
  if (width == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex mu;
  std::size_t failed_index = n;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
        failed.store(true);
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(width);
  for (std::size_t t = 0; t < width; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<AttributionVector> compute_attributions(const std::vector<ParallelPair>& pairs,
                                                    const ToyModel& model,
                                                    const AttributionOptions& options,
                                                    std::size_t threads) {
  std::vector<AttributionVector> records(2 * pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    try {
      auto [src, tgt] = attribute_pair(pairs[i], model, options);
      records[2 * i] = std::move(src);
      records[2 * i + 1] = std::move(tgt);
    } catch (...) {
      rethrow_for_pair(pairs[i].id, Stage::attribute);
    }
  });
  return records;
}

void write_attributions(std::ostream& out, const std::vector<AttributionVector>& records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::vector<AttributionVector> read_attributions(std::istream& in) {
  std::vector<AttributionVector> records;
  for_each_jsonl(in, [&](const json& rec, std::size_t) { records.push_back(attribution_from_json(rec)); });
  return records;
}

std::vector<AttributionVector> load_attributions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open attributions " + path.string());
  try {
    return read_attributions(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

EmbeddingTables load_tables(const std::map<std::string, fs::path>& paths, bool lowercase_keys) {
  std::map<fs::path, std::shared_ptr<const EmbeddingTable>> by_path;
  EmbeddingTables tables;
  for (const auto& [lang, path] : paths) {
    const fs::path key = fs::weakly_canonical(path);
    auto it = by_path.find(key);
    if (it == by_path.end()) {
      auto table = std::make_shared<const EmbeddingTable>(
          load_embeddings(path, std::nullopt, lang, lowercase_keys));
      it = by_path.emplace(key, std::move(table)).first;
    }
    tables.emplace(lang, it->second);
  }
  return tables;
}

std::string debug_dump_name(std::size_t rank, const std::string& pair_id) {
  std::string safe = pair_id;
  for (char& c : safe) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-';
    if (!keep) c = '_';
  }
  char prefix[32];
  std::snprintf(prefix, sizeof prefix, "%05zu-", rank);
  return prefix + safe + ".transport.txt";
}

std::vector<PairScore> score_attributions(const std::vector<AttributionVector>& records, Head head,
                                          const EmbeddingTables& tables, std::size_t threads,
                                          const fs::path& debug_dir) {
  struct Sides {
    const AttributionVector* source = nullptr;
    const AttributionVector* target = nullptr;
  };
  std::map<std::string, Sides> by_id;
  for (const auto& r : records) {
    if (r.head != head) continue;
    Sides& sides = by_id[r.pair_id];
    const AttributionVector*& slot = r.side == Side::source ? sides.source : sides.target;
    if (slot) {
      throw DataError("pair \"" + r.pair_id + "\" has more than one " +
                      std::string(to_string(r.side)) + " record for head " +
                      std::string(to_string(head)));
    }
    slot = &r;
  }
  if (by_id.empty()) {
    throw DataError("no attribution records for head " + std::string(to_string(head)));
  }

  std::set<std::string> missing;
  std::vector<std::pair<std::string, Sides>> work;
  work.reserve(by_id.size());
  for (auto& [id, sides] : by_id) {
    if (!sides.source || !sides.target) {
      throw DataError("pair \"" + id + "\" is missing its " + (sides.source ? "target" : "source") +
                      " record");
    }
    for (const auto* r : {sides.source, sides.target}) {
      if (!tables.count(r->sentence.language)) missing.insert(r->sentence.language);
    }
    work.emplace_back(id, sides);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw DataError("missing embedding table for languages: " + list);
  }

  if (!debug_dir.empty()) fs::create_directories(debug_dir);
  std::vector<PairScore> scores(work.size());
  parallel_for(work.size(), threads, [&](std::size_t i) {
    const auto& [id, sides] = work[i];
    try {
      const SimilarityMatrix sim = similarity_matrix(sides.source->sentence, sides.target->sentence, tables);
      const TransportInstance instance = build_instance(*sides.source, *sides.target, sim);
      const TransportPlan plan = solve(instance);
      if (!debug_dir.empty()) {
        auto out = open_output(debug_dir / debug_dump_name(i, id));
        write_debug_dump(out, instance, plan);
      }
      scores[i] = PairScore{id, sides.source->sentence.language, sides.target->sentence.language,
                            plan.objective, plan.iterations};
    } catch (...) {
      rethrow_for_pair(id, Stage::score);
    }
  });
  return scores;
}

void write_scores(std::ostream& out, const std::vector<PairScore>& scores) {
  for (const auto& s : scores) {
    json rec{{"pair_id", s.pair_id},
             {"source_lang", s.source_language},
             {"target_lang", s.target_language},
             {"consistency", s.consistency},
             {"iterations", s.iterations}};
    out << rec.dump() << '\n';
  }
}

std::vector<PairScore> read_scores(std::istream& in) {
  std::vector<PairScore> scores;
  for_each_jsonl(in, [&](const json& rec, std::size_t) { scores.push_back(score_from_json(rec)); });
  return scores;
}

std::vector<PairScore> load_scores(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open scores " + path.string());
  try {
    return read_scores(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

AttributeOutcome cmd_attribute(const RunConfig& config) {
  validate_config(config, Stage::attribute);
  const auto pairs = load_corpus(config.corpus, config.tokenizer);
  const ToyModel model = load_model(config.model);
  const AttributionOptions options{config.steps, config.rule, config.normalization, std::nullopt};
  const auto records = compute_attributions(pairs, model, options, config.threads);

  fs::create_directories(config.output_dir);
  AttributeOutcome outcome;
  outcome.attributions_file = config.output_dir / "attributions.jsonl";
  {
    auto out = open_output(outcome.attributions_file);
    write_attributions(out, records);
  }
  outcome.records = records.size();
  for (const auto& r : records) {
    outcome.max_convergence_delta = std::max(outcome.max_convergence_delta, r.convergence_delta);
    if (r.convergence_delta > config.completeness_threshold) ++outcome.above_threshold;
  }
  write_resolved_config(config, Stage::attribute);
  return outcome;
}

ScoreOutcome cmd_score(const RunConfig& config) {
  validate_config(config, Stage::score);
  std::vector<AttributionVector> records;
  if (!config.model.empty()) {
    const auto pairs = load_corpus(config.corpus, config.tokenizer);
    const ToyModel model = load_model(config.model);
    const AttributionOptions options{config.steps, config.rule, config.normalization, std::nullopt};
    records = compute_attributions(pairs, model, options, config.threads);
  } else {
    records = load_attributions(config.attributions);
  }
  const EmbeddingTables tables =
      load_tables(config.embeddings, config.tokenizer == TokenizerPolicy::whitespace_lowercase);

  ScoreOutcome outcome;
  outcome.scores = score_attributions(records, config.head, tables, config.threads, config.debug_dump);
  outcome.report = aggregate(outcome.scores, aggregate_options(config));

  fs::create_directories(config.output_dir);
  outcome.scores_file = config.output_dir / "consistency.jsonl";
  {
    auto out = open_output(outcome.scores_file);
    write_scores(out, outcome.scores);
  }
  outcome.report_files = write_reports(config, outcome.report, nullptr);
  write_resolved_config(config, Stage::score);
  return outcome;
}

CorrelateOutcome cmd_correlate(const RunConfig& config) {
  validate_config(config, Stage::correlate);
  const auto scores = load_scores(config.scores);
  const auto report = aggregate(scores, aggregate_options(config));
  const auto perf = load_performance(config.performance);
  CorrelateOutcome outcome;
  outcome.result = correlate(report, perf);
  fs::create_directories(config.output_dir);
  outcome.plot_file = config.output_dir / "correlation.csv";
  write_text(outcome.plot_file, render_plot_data(outcome.result));
  write_resolved_config(config, Stage::correlate);
  return outcome;
}

std::vector<fs::path> cmd_report(const RunConfig& config) {
  validate_config(config, Stage::report);
  const auto scores = load_scores(config.scores);
  const auto report = aggregate(scores, aggregate_options(config));
  std::optional<PerformanceTable> perf;
  if (!config.performance.empty()) perf = load_performance(config.performance);
  fs::create_directories(config.output_dir);
  auto files = write_reports(config, report, perf ? &*perf : nullptr);
  write_resolved_config(config, Stage::report);
  return files;
}

std::optional<FileKind> parse_file_kind(std::string_view text) {
  if (text == "corpus") return FileKind::corpus;
  if (text == "attributions") return FileKind::attributions;
  if (text == "embeddings") return FileKind::embeddings;
  if (text == "model") return FileKind::model;
  if (text == "scores") return FileKind::scores;
  return std::nullopt;
}

ValidationReport validate_file(FileKind kind, const fs::path& path) {
  ValidationReport report;
  std::ifstream in(path);
  if (!in) {
    report.errors.push_back("cannot open " + path.string());
    return report;
  }
  auto per_line = [&](auto&& check) {
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
      ++line_number;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        check(json::parse(line), line_number);
        ++report.records;
      } catch (const std::exception& e) {
        const std::string msg = e.what();
        report.errors.push_back(msg.rfind("line ", 0) == 0 ? msg
                                                           : "line " + std::to_string(line_number) + ": " + msg);
      }
    }
  };

  switch (kind) {
    case FileKind::corpus:
      per_line([](const json& rec, std::size_t n) { parse_pair(rec, n, TokenizerPolicy::whitespace); });
      break;
    case FileKind::scores:
      per_line([](const json& rec, std::size_t) { score_from_json(rec); });
      break;
    case FileKind::attributions: {
      std::map<std::pair<std::string, std::string>, std::pair<int, int>> sides;
      per_line([&](const json& rec, std::size_t) {
        const auto attr = attribution_from_json(rec);
        auto& count = sides[{attr.pair_id, std::string(to_string(attr.head))}];
        (attr.side == Side::source ? count.first : count.second) += 1;
      });
      for (const auto& [key, count] : sides) {
        if (count.first != 1 || count.second != 1) {
          report.errors.push_back("pair \"" + key.first + "\" head " + key.second + " has " +
                                  std::to_string(count.first) + " source and " +
                                  std::to_string(count.second) + " target records, expected 1 and 1");
        }
      }
      break;
    }
    case FileKind::embeddings:
      try {
        report.records = load_embeddings(in).size();
      } catch (const std::exception& e) {
        report.errors.push_back(e.what());
      }
      break;
    case FileKind::model:
      try {
        report.records = load_model(path).vocab_size();
      } catch (const std::exception& e) {
        report.errors.push_back(e.what());
      }
      break;
  }
  return report;
}

}  // namespace attrcons

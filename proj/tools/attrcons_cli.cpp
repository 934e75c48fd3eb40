#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "attrcons/errors.hpp"
#include "attrcons/pipeline.hpp"

namespace fs = std::filesystem;
using namespace attrcons;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitInvariant = 3;

const std::set<std::string> kPathKeys = {"corpus",      "model",   "attributions", "scores",
                                         "performance", "out-dir", "out",    "debug-dump"};

// Top-level keys apply to the running subcommand; a [name] section applies only to that
// subcommand. Relative paths are taken relative to the config file.
class RunConfigFile : public CLI::ConfigTOML {
 public:
  RunConfigFile(std::string subcommand, fs::path base)
      : subcommand_(std::move(subcommand)), base_(std::move(base)) {}

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    std::vector<CLI::ConfigItem> top;
    std::vector<CLI::ConfigItem> section;
    for (auto& item : CLI::ConfigTOML::from_config(input)) {
      if (item.name == "--") continue;
      if (item.parents.empty()) {
        top.push_back(std::move(item));
      } else if (item.parents.size() == 1 && item.parents.front() == subcommand_) {
        section.push_back(std::move(item));
      }
    }
    // Section keys win over top-level ones.
    std::vector<CLI::ConfigItem> items;
    for (auto& item : top) {
      const bool overridden = std::any_of(section.begin(), section.end(),
                                          [&](const CLI::ConfigItem& s) { return s.name == item.name; });
      if (!overridden) items.push_back(std::move(item));
    }
    for (auto& item : section) items.push_back(std::move(item));
    for (auto& item : items) {
      if (kPathKeys.count(item.name)) {
        for (auto& value : item.inputs) value = resolve(value);
      } else if (item.name == "embeddings") {
        for (auto& value : item.inputs) {
          const auto eq = value.find('=');
          if (eq != std::string::npos) value = value.substr(0, eq + 1) + resolve(value.substr(eq + 1));
        }
      }
      item.parents.clear();
      if (!subcommand_.empty()) item.parents = {subcommand_};
    }
    return items;
  }

 private:
  std::string resolve(const std::string& value) const {
    const fs::path p(value);
    if (value.empty() || p.is_absolute()) return value;
    return (base_ / p).lexically_normal().string();
  }

  std::string subcommand_;
  fs::path base_;
};

// The config file's directory and the subcommand must be known before CLI11 reads the file.
void prescan(int argc, char** argv, const std::set<std::string>& subcommands, std::string& config,
             std::string& subcommand) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) {
      config = argv[++i];
    } else if (arg.rfind("--config=", 0) == 0) {
      config = arg.substr(std::strlen("--config="));
    } else if (subcommand.empty() && subcommands.count(arg)) {
      subcommand = arg;
    }
  }
}

template <class Enum, class Parse>
CLI::Option* add_enum(CLI::App* app, const std::string& name, Enum& target, Parse parse,
                      const std::string& description) {
  return app
      ->add_option_function<std::string>(
          name,
          [&target, parse, name](const std::string& text) {
            const auto value = parse(text);
            if (!value) throw CLI::ValidationError(name, "unknown value \"" + text + "\"");
            target = *value;
          },
          description)
      ->default_str(std::string(to_string(target)));
}

void add_threads(CLI::App* app, RunConfig& config) {
  app->add_option("-j,--threads", config.threads, "Worker pool width")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
}

void add_out_dir(CLI::App* app, RunConfig& config) {
  app->add_option("-o,--out-dir", config.output_dir, "Output directory")->capture_default_str();
}

void add_attribution_options(CLI::App* app, RunConfig& config) {
  app->add_option("--corpus", config.corpus, "Parallel corpus (JSONL)");
  app->add_option("--model", config.model, "Toy-model checkpoint (JSON)");
  add_enum(app, "--tokenizer", config.tokenizer, parse_tokenizer_policy,
           "whitespace | whitespace_lowercase");
  app->add_option("--steps", config.steps, "Quadrature steps")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  add_enum(app, "--rule", config.rule, parse_quadrature_rule, "left_riemann | trapezoid");
  add_enum(app, "--normalization", config.normalization, parse_normalization_mode, "abs_l1");
}

void add_aggregation_options(CLI::App* app, RunConfig& config) {
  add_enum(app, "--aggregation", config.aggregation, parse_overall_mode,
           "Overall figure: pair_mean | language_mean");
  app->add_flag("--include-source", config.include_source,
                "Count same-language pairs in the overall figure");
}

void add_format_option(CLI::App* app, RunConfig& config) {
  app->add_option_function<std::vector<std::string>>(
         "--format",
         [&config](const std::vector<std::string>& names) {
           config.formats.clear();
           for (const auto& name : names) {
             const auto f = parse_report_format(name);
             if (!f) throw CLI::ValidationError("--format", "unknown format \"" + name + "\"");
             if (std::find(config.formats.begin(), config.formats.end(), *f) == config.formats.end()) {
               config.formats.push_back(*f);
             }
           }
         },
         "Report formats: markdown, csv, json (repeatable)")
      ->default_str("markdown,csv,json")
      ->delimiter(',');
}

void report_files(const std::vector<fs::path>& files) {
  for (const auto& f : files) std::cout << "wrote " << f.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-lingual attribution consistency"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  RunConfig config;

  // init-model
  auto* init = app.add_subcommand("init-model", "Write a seeded toy-model checkpoint");
  std::vector<fs::path> vocab_corpora;
  fs::path model_out;
  std::size_t dim = 16;
  std::size_t classes = 2;
  Activation activation = Activation::identity;
  init->add_option("--corpus", vocab_corpora, "Corpora whose tokens form the vocabulary")->required();
  add_enum(init, "--tokenizer", config.tokenizer, parse_tokenizer_policy,
           "whitespace | whitespace_lowercase");
  init->add_option("--dim", dim, "Embedding width")->capture_default_str()->check(CLI::PositiveNumber);
  init->add_option("--classes", classes, "Number of output classes")
      ->capture_default_str()
      ->check(CLI::Range(std::size_t{2}, std::size_t{1} << 16));
  add_enum(init, "--activation", activation, parse_activation, "identity | tanh");
  init->add_option("--seed", config.seed, "Initialization seed")->capture_default_str();
  init->add_option("--out", model_out, "Checkpoint path")->required();

  // attribute
  auto* attribute = app.add_subcommand("attribute", "Integrated-gradients attributions for a corpus");
  add_attribution_options(attribute, config);
  attribute->add_option("--completeness-threshold", config.completeness_threshold,
                        "Warn about records whose completeness residual exceeds this")
      ->capture_default_str();
  add_out_dir(attribute, config);
  add_threads(attribute, config);

  // score
  auto* score = app.add_subcommand("score", "Per-pair consistency and aggregated report");
  add_attribution_options(score, config);
  score->add_option("--attributions", config.attributions, "Precomputed attribution records (JSONL)");
  std::vector<std::string> embedding_specs;
  score->add_option("--embeddings", embedding_specs, "lang=path word-vector table (repeatable)");
  add_enum(score, "--head", config.head, parse_head, "classification | span_start | span_end");
  add_aggregation_options(score, config);
  add_format_option(score, config);
  add_out_dir(score, config);
  score->add_option("--debug-dump", config.debug_dump, "Write one transport dump per pair into this directory");
  add_threads(score, config);

  // correlate
  auto* correl = app.add_subcommand("correlate", "Pearson correlation of consistency and performance");
  correl->add_option("--scores", config.scores, "Per-pair consistency file (JSONL)");
  correl->add_option("--performance", config.performance, "language,metric CSV or JSON object");
  add_aggregation_options(correl, config);
  add_out_dir(correl, config);

  // report
  auto* report = app.add_subcommand("report", "Re-render reports from a per-pair consistency file");
  report->add_option("--scores", config.scores, "Per-pair consistency file (JSONL)");
  report->add_option("--performance", config.performance, "Optional metric column");
  add_aggregation_options(report, config);
  add_format_option(report, config);
  add_out_dir(report, config);

  // validate
  auto* validate = app.add_subcommand("validate", "Schema-check interchange files");
  FileKind kind = FileKind::attributions;
  std::vector<fs::path> validate_paths;
  validate
      ->add_option_function<std::string>(
          "--kind",
          [&kind](const std::string& text) {
            const auto k = parse_file_kind(text);
            if (!k) throw CLI::ValidationError("--kind", "unknown file kind \"" + text + "\"");
            kind = *k;
          },
          "corpus | attributions | embeddings | model | scores")
      ->required();
  validate->add_option("files", validate_paths, "Files to check")->required()->check(CLI::ExistingFile);

  std::string config_path;
  std::string subcommand;
  std::set<std::string> names;
  for (const auto* sub : app.get_subcommands({})) names.insert(sub->get_name());
  prescan(argc, argv, names, config_path, subcommand);
  fs::path config_dir;
  if (!config_path.empty()) config_dir = fs::absolute(config_path).parent_path();
  app.set_config("--config", "", "Key-value config file; command-line flags override it")
      ->check(CLI::ExistingFile);
  app.config_formatter(std::make_shared<RunConfigFile>(subcommand, config_dir));
  app.allow_config_extras(CLI::config_extras_mode::ignore);
  for (auto* sub : app.get_subcommands({})) {
    sub->fallthrough();
    sub->allow_config_extras(CLI::config_extras_mode::ignore);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    for (const auto& spec : embedding_specs) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
        throw ConfigError("--embeddings expects lang=path, got \"" + spec + "\"");
      }
      config.embeddings[spec.substr(0, eq)] = spec.substr(eq + 1);
    }

    if (*init) {
      std::set<std::string> vocab;
      for (const auto& path : vocab_corpora) {
        if (!fs::exists(path)) throw ConfigError("corpus does not exist: " + path.string());
        for (const auto& pair : load_corpus(path, config.tokenizer)) {
          for (const Sentence* s : {&pair.source, &pair.target}) {
            for (const auto& t : s->tokens) {
              if (t.kind == TokenKind::content) vocab.insert(t.surface);
            }
          }
        }
      }
      const ToyModel model = ToyModel::random({vocab.begin(), vocab.end()}, dim, classes,
                                              config.seed, activation);
      save_model(model, model_out);
      std::cout << "wrote " << model_out.string() << " (" << model.vocab_size() << " rows)\n";
    } else if (*attribute) {
      const auto outcome = cmd_attribute(config);
      std::cout << "wrote " << outcome.attributions_file.string() << " (" << outcome.records
                << " records)\n";
      char line[160];
      std::snprintf(line, sizeof line, "max completeness residual %.3e; %zu record(s) above %.3e\n",
                    outcome.max_convergence_delta, outcome.above_threshold,
                    config.completeness_threshold);
      std::cerr << line;
    } else if (*score) {
      const auto outcome = cmd_score(config);
      std::cout << "wrote " << outcome.scores_file.string() << " (" << outcome.scores.size()
                << " pairs)\n";
      report_files(outcome.report_files);
      char line[80];
      std::snprintf(line, sizeof line, "overall C = %.3f over %zu pair(s)\n", outcome.report.overall,
                    outcome.report.overall_count);
      std::cout << line;
    } else if (*correl) {
      const auto outcome = cmd_correlate(config);
      char line[80];
      std::snprintf(line, sizeof line, "pearson r = %.6f over %zu language(s)\n",
                    outcome.result.coefficient, outcome.result.languages.size());
      std::cout << line;
      std::cout << "wrote " << outcome.plot_file.string() << '\n';
    } else if (*report) {
      report_files(cmd_report(config));
    } else if (*validate) {
      bool ok = true;
      for (const auto& path : validate_paths) {
        const auto result = validate_file(kind, path);
        if (result.ok()) {
          std::cout << path.string() << ": ok (" << result.records << " records)\n";
        } else {
          ok = false;
          for (const auto& err : result.errors) std::cerr << path.string() << ": " << err << '\n';
        }
      }
      return ok ? kExitOk : kExitData;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const InvariantError& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInvariant;
  }
  return kExitOk;
}

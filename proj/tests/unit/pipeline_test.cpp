#include <doctest.h>

#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "attrcons/errors.hpp"
#include "attrcons/pipeline.hpp"
#include "fixtures.hpp"

using namespace attrcons;
namespace fs = std::filesystem;

namespace {

RunConfig config_for(const testing::Workspace& ws, const fs::path& out) {
  RunConfig c;
  c.corpus = ws.corpus;
  c.model = ws.model;
  c.embeddings = ws.embeddings;
  c.output_dir = out;
  return c;
}

std::string error_of(const RunConfig& c, Stage stage) {
  try {
    validate_config(c, stage);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("parallel_for runs every index and rethrows the lowest failure") {
  for (std::size_t width : {1, 3, 8}) {
    std::vector<int> hits(100, 0);
    parallel_for(hits.size(), width, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) CHECK(h == 1);

    try {
      parallel_for(50, width, [](std::size_t i) {
        if (i == 7 || i == 31) throw std::runtime_error(std::to_string(i));
      });
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()) == "7");
    }
  }
  parallel_for(0, 4, [](std::size_t) { FAIL("no work expected"); });
}

TEST_CASE("config validation") {
  testing::Rng rng(1);
  testing::ScratchDir dir("config");
  const auto ws = testing::make_workspace(rng, dir.path(), {});
  RunConfig c = config_for(ws, dir / "out");

  CHECK(error_of(c, Stage::attribute).empty());
  CHECK(error_of(c, Stage::score).empty());

  c.attributions = ws.corpus;
  CHECK(error_of(c, Stage::score).find("exactly one") != std::string::npos);
  c.model.clear();
  CHECK(error_of(c, Stage::score).empty());
  CHECK_FALSE(error_of(c, Stage::attribute).empty());

  c = config_for(ws, dir / "out");
  c.corpus = dir / "missing.jsonl";
  CHECK(error_of(c, Stage::attribute).find("does not exist") != std::string::npos);

  c = config_for(ws, dir / "out");
  c.embeddings.clear();
  CHECK_FALSE(error_of(c, Stage::score).empty());
  c.embeddings["xx"] = ws.embeddings.begin()->second;
  CHECK_FALSE(error_of(c, Stage::score).empty());

  c = config_for(ws, dir / "out");
  c.steps = 0;
  CHECK_FALSE(error_of(c, Stage::attribute).empty());
  c = config_for(ws, dir / "out");
  c.threads = 0;
  CHECK_FALSE(error_of(c, Stage::attribute).empty());

  CHECK_FALSE(error_of(c, Stage::correlate).empty());
  CHECK_FALSE(error_of(c, Stage::report).empty());
}

TEST_CASE("two pairs give four records; reruns are byte-identical") {
  testing::Rng rng(2);
  testing::ScratchDir dir("attribute");
  testing::WorkspaceSpec spec;
  spec.pairs = 2;
  const auto ws = testing::make_workspace(rng, dir.path(), spec);
  RunConfig c = config_for(ws, dir / "a");
  const auto first = cmd_attribute(c);
  CHECK(first.records == 4);
  const auto records = load_attributions(first.attributions_file);
  REQUIRE(records.size() == 4);
  CHECK(records[0].side == Side::source);
  CHECK(records[1].side == Side::target);
  CHECK(records[0].pair_id == ws.pairs[0].id);
  CHECK(records[2].pair_id == ws.pairs[1].id);

  c.output_dir = dir / "b";
  const auto second = cmd_attribute(c);
  CHECK(testing::read_text(first.attributions_file) == testing::read_text(second.attributions_file));
  CHECK(fs::exists(dir / "a" / "attribute.resolved.toml"));
}

TEST_CASE("linear model records match the closed form") {
  testing::Rng rng(3);
  testing::ScratchDir dir("closed-form");
  testing::WorkspaceSpec spec;
  spec.pairs = 6;
  const auto ws = testing::make_workspace(rng, dir.path(), spec);
  RunConfig c = config_for(ws, dir / "out");
  c.steps = 1;
  const auto records = load_attributions(cmd_attribute(c).attributions_file);
  const ToyModel model = load_model(ws.model);
  for (const auto& r : records) {
    const Matrix x = embed(r.sentence, model);
    const Matrix xp = make_baseline(r.sentence, model).embeddings;
    const Matrix g = gradient(x, model, *r.target_class);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      double expected = 0.0;
      for (std::size_t k = 0; k < x.cols(); ++k) expected += (x(i, k) - xp(i, k)) * g(i, k);
      CHECK(std::fabs(r.raw[i] - expected) <= 1e-12);
    }
    CHECK(r.convergence_delta <= 1e-10);
  }
}

TEST_CASE("identity pairs score one and OOV targets score zero") {
  testing::Rng rng(4);
  testing::ScratchDir dir("identity");
  testing::WorkspaceSpec spec;
  spec.pairs = 12;
  spec.identity_every = 1;
  const auto ws = testing::make_workspace(rng, dir.path(), spec);
  const auto outcome = cmd_score(config_for(ws, dir / "out"));
  REQUIRE(outcome.scores.size() == 12);
  for (const auto& s : outcome.scores) CHECK(std::fabs(s.consistency - 1.0) <= 1e-9);
  CHECK(testing::read_text(dir / "out" / "report.md").find("| en | 1.000 | 12 |") != std::string::npos);

  testing::write_text(dir / "oov.jsonl",
                      R"({"id":"x","source":{"lang":"en","text":"w1 w2"},"target":{"lang":"de","text":"unknown words"}})"
                      "\n");
  RunConfig c = config_for(ws, dir / "oov");
  c.corpus = dir / "oov.jsonl";
  c.embeddings["de"] = ws.embeddings.at("en");
  const auto oov = cmd_score(c);
  REQUIRE(oov.scores.size() == 1);
  CHECK(oov.scores[0].consistency == 0.0);
}

TEST_CASE("score matches a stagewise recomputation") {
  testing::Rng rng(5);
  testing::ScratchDir dir("stagewise");
  const auto ws = testing::make_workspace(rng, dir.path(), {});
  const auto outcome = cmd_score(config_for(ws, dir / "out"));
  REQUIRE(outcome.scores.size() == 10);

  const ToyModel model = load_model(ws.model);
  EmbeddingTables tables;
  for (const auto& [lang, path] : ws.embeddings) {
    tables.emplace(lang, std::make_shared<const EmbeddingTable>(load_embeddings(path)));
  }
  for (const auto& pair : ws.pairs) {
    const auto src = attribute_sentence(pair.source, model, {});
    const auto tgt = attribute_sentence(pair.target, model, {});
    const double expected = consistency(src, tgt, similarity_matrix(pair.source, pair.target, tables));
    const auto it = std::find_if(outcome.scores.begin(), outcome.scores.end(),
                                 [&](const PairScore& s) { return s.pair_id == pair.id; });
    REQUIRE(it != outcome.scores.end());
    CHECK(std::fabs(it->consistency - expected) <= 1e-12);
  }
  CHECK(std::is_sorted(outcome.scores.begin(), outcome.scores.end(),
                       [](const PairScore& a, const PairScore& b) { return a.pair_id < b.pair_id; }));
}

TEST_CASE("debug dumps hold each pair's instance and plan") {
  CHECK(debug_dump_name(3, "a/b c") == "00003-a_b_c.transport.txt");

  testing::Rng rng(6);
  testing::ScratchDir dir("debug-dump");
  const auto ws = testing::make_workspace(rng, dir.path(), {});
  RunConfig c = config_for(ws, dir / "out");
  c.debug_dump = dir / "dumps";
  const auto outcome = cmd_score(c);
  REQUIRE(outcome.scores.size() == 10);
  for (std::size_t i = 0; i < outcome.scores.size(); ++i) {
    std::istringstream in(testing::read_text(c.debug_dump / debug_dump_name(i, outcome.scores[i].pair_id)));
    std::string tag;
    std::size_t l = 0;
    REQUIRE(static_cast<bool>(in >> tag >> l));
    CHECK(tag == "transport");
    std::string line;
    double objective = NAN;
    std::size_t iterations = 0;
    std::size_t flows = 0;
    while (in >> tag) {
      if (tag == "objective") {
        in >> objective;
      } else if (tag == "iterations") {
        in >> iterations;
      } else {
        flows += tag == "flow";
        std::getline(in, line);
      }
    }
    CHECK(objective == outcome.scores[i].consistency);
    CHECK(iterations == outcome.scores[i].iterations);
    CHECK(flows == l);
  }
}

TEST_CASE("attribute then score equals the fused run") {
  testing::Rng rng(6);
  testing::ScratchDir dir("compose");
  testing::WorkspaceSpec spec;
  spec.pairs = 30;
  spec.activation = Activation::tanh;
  const auto ws = testing::make_workspace(rng, dir.path(), spec);
  const auto fused = cmd_score(config_for(ws, dir / "fused"));

  RunConfig staged = config_for(ws, dir / "staged");
  const auto attr = cmd_attribute(staged);
  staged.model.clear();
  staged.corpus.clear();
  staged.attributions = attr.attributions_file;
  const auto piped = cmd_score(staged);
  REQUIRE(piped.scores.size() == fused.scores.size());
  for (std::size_t i = 0; i < piped.scores.size(); ++i) {
    CHECK(piped.scores[i].pair_id == fused.scores[i].pair_id);
    CHECK(std::fabs(piped.scores[i].consistency - fused.scores[i].consistency) <= 1e-12);
  }
  CHECK(testing::read_text(dir / "fused" / "report.json") == testing::read_text(dir / "staged" / "report.json"));
}

TEST_CASE("worker width does not change any artifact") {
  testing::Rng rng(7);
  testing::ScratchDir dir("widths");
  testing::WorkspaceSpec spec;
  spec.pairs = 40;
  const auto ws = testing::make_workspace(rng, dir.path(), spec);
  std::map<std::string, std::string> reference;
  for (std::size_t width : {1, 4, 8}) {
    RunConfig c = config_for(ws, dir / "out");
    c.threads = width;
    cmd_score(c);
    for (const char* name : {"consistency.jsonl", "report.md", "report.csv", "report.json", "score.resolved.toml"}) {
      const std::string text = testing::read_text(dir / "out" / name);
      if (width == 1) {
        reference[name] = text;
      } else {
        CHECK_MESSAGE(text == reference[name], name << " differs at width " << width);
      }
    }
  }
}

TEST_CASE("missing embedding tables are listed") {
  testing::Rng rng(8);
  testing::ScratchDir dir("missing-table");
  const auto ws = testing::make_workspace(rng, dir.path(), {});
  RunConfig c = config_for(ws, dir / "out");
  c.embeddings.erase("de");
  c.embeddings.erase("sw");
  try {
    cmd_score(c);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("de, sw") != std::string::npos);
  }
}

TEST_CASE("pair errors name the pair and the stage") {
  testing::Rng rng(9);
  testing::ScratchDir dir("pair-error");
  testing::WorkspaceSpec spec;
  spec.pairs = 3;
  const auto ws = testing::make_workspace(rng, dir.path(), spec);
  RunConfig c = config_for(ws, dir / "out");
  const auto attr = cmd_attribute(c);
  // A table of the wrong width makes the similarity stage fail for the first pair.
  testing::write_text(dir / "narrow.vec", "1 2\nw0 1 0\n");
  c.model.clear();
  c.corpus.clear();
  c.attributions = attr.attributions_file;
  c.embeddings["fr"] = dir / "narrow.vec";
  try {
    cmd_score(c);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[score]") != std::string::npos);
    CHECK(msg.find("pair-00001") != std::string::npos);
  }
}

TEST_CASE("score records must pair up") {
  testing::Rng rng(10);
  const auto words = testing::word_list(5);
  const Sentence s = testing::random_sentence(rng, words, 3, "en");
  const auto table = testing::random_table(rng, words, 3);
  const EmbeddingTables tables{{"en", table}};
  const auto a = testing::random_attribution(rng, s, "p", Side::source);
  CHECK_THROWS_AS(score_attributions({a}, Head::classification, tables, 1), DataError);
  CHECK_THROWS_AS(score_attributions({a, a}, Head::classification, tables, 1), DataError);
  auto b = a;
  b.side = Side::target;
  CHECK(score_attributions({a, b}, Head::classification, tables, 1).size() == 1);
  CHECK_THROWS_AS(score_attributions({a, b}, Head::span_start, tables, 1), DataError);
  auto c = a;
  auto d = b;
  c.head = d.head = Head::span_start;
  CHECK(score_attributions({a, b, c, d}, Head::span_start, tables, 1).size() == 1);
}

TEST_CASE("correlate and report stages") {
  testing::Rng rng(11);
  testing::ScratchDir dir("correlate");
  testing::WorkspaceSpec spec;
  spec.pairs = 30;
  const auto ws = testing::make_workspace(rng, dir.path(), spec);
  const auto scored = cmd_score(config_for(ws, dir / "out"));
  testing::write_text(dir / "perf.csv", "language,accuracy\nde,0.8\nfr,0.7\nsw,0.55\nen,0.9\n");

  RunConfig c;
  c.scores = scored.scores_file;
  c.performance = dir / "perf.csv";
  c.output_dir = dir / "corr";
  const auto corr = cmd_correlate(c);
  CHECK(corr.result.languages == std::vector<std::string>{"de", "fr", "sw"});
  CHECK(std::fabs(corr.result.coefficient - pearson(corr.result.consistency, corr.result.performance)) == 0.0);
  CHECK(testing::read_text(corr.plot_file).rfind("language,consistency,performance\n", 0) == 0);

  c.output_dir = dir / "rep";
  const auto files = cmd_report(c);
  CHECK(files.size() == 3);
  CHECK(testing::read_text(dir / "rep" / "report.csv").rfind("language,C,n,metric\n", 0) == 0);
  c.performance.clear();
  c.output_dir = dir / "rep2";
  cmd_report(c);
  CHECK(testing::read_text(dir / "rep2" / "report.md") == testing::read_text(dir / "out" / "report.md"));
}

TEST_CASE("validate collects every problem") {
  testing::Rng rng(12);
  testing::ScratchDir dir("validate");
  testing::WorkspaceSpec spec;
  spec.pairs = 3;
  const auto ws = testing::make_workspace(rng, dir.path(), spec);
  const auto attr = cmd_attribute(config_for(ws, dir / "out"));
  CHECK(validate_file(FileKind::attributions, attr.attributions_file).ok());
  CHECK(validate_file(FileKind::attributions, attr.attributions_file).records == 6);
  CHECK(validate_file(FileKind::corpus, ws.corpus).ok());
  CHECK(validate_file(FileKind::model, ws.model).ok());
  CHECK(validate_file(FileKind::embeddings, ws.embeddings.at("en")).ok());

  auto lines = testing::read_text(attr.attributions_file);
  lines = lines.substr(lines.find('\n') + 1) + "{\"broken\": true}\nnot json\n";
  testing::write_text(dir / "bad.jsonl", lines);
  const auto bad = validate_file(FileKind::attributions, dir / "bad.jsonl");
  CHECK(bad.records == 5);
  CHECK(bad.errors.size() == 3);  // two bad lines, one unpaired pair
  CHECK(bad.errors[0].rfind("line 6:", 0) == 0);

  CHECK_FALSE(validate_file(FileKind::scores, ws.corpus).ok());
  CHECK_FALSE(validate_file(FileKind::embeddings, ws.corpus).ok());
  CHECK_FALSE(validate_file(FileKind::model, ws.corpus).ok());
}

TEST_CASE("resolved config reloads to the same settings") {
  RunConfig c;
  c.corpus = "/data/c.jsonl";
  c.model = "/data/m.json";
  c.embeddings = {{"en", "/data/en.vec"}, {"de", "/data/de \"q\".vec"}};
  c.steps = 7;
  c.rule = QuadratureRule::left_riemann;
  c.include_source = true;
  c.formats = {ReportFormat::json};
  const std::string text = resolved_config_text(c, Stage::score);
  CHECK(text.find("steps = 7\n") != std::string::npos);
  CHECK(text.find("rule = \"left_riemann\"\n") != std::string::npos);
  CHECK(text.find("include-source = true\n") != std::string::npos);
  CHECK(text.find("format = [\"json\"]\n") != std::string::npos);
  CHECK(text.find("\"de=/data/de \\\"q\\\".vec\"") != std::string::npos);
  CHECK(text.find("threads") == std::string::npos);
}

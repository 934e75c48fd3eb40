#include <doctest.h>

#include <cmath>
#include <sstream>

#include "attrcons/alignment.hpp"
#include "attrcons/errors.hpp"
#include "fixtures.hpp"

using namespace attrcons;

namespace {

EmbeddingTable parse(const std::string& text, std::optional<std::size_t> dim = {}) {
  std::istringstream in(text);
  return load_embeddings(in, dim);
}

std::string error_of(const std::string& text, std::optional<std::size_t> dim = {}) {
  try {
    parse(text, dim);
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

EmbeddingTables shared(std::shared_ptr<const EmbeddingTable> table, std::initializer_list<const char*> langs) {
  EmbeddingTables tables;
  for (const char* l : langs) tables.emplace(l, table);
  return tables;
}

}  // namespace

TEST_CASE("word-vector text format") {
  const EmbeddingTable t = parse("2 3\nfoo 1 2 3\nbar -1 0.5 1e-3\n");
  CHECK(t.size() == 2);
  CHECK(t.dim() == 3);
  REQUIRE(t.find("bar") != nullptr);
  CHECK((*t.find("bar"))[2] == 1e-3);
  CHECK(t.find("baz") == nullptr);

  CHECK(error_of("1 3\nfoo 1 2\n").find("line 2") != std::string::npos);
  CHECK(error_of("2 3\nfoo 1 2 3\n").find("line") != std::string::npos);
  CHECK_FALSE(error_of("x 3\n").empty());
  CHECK_FALSE(error_of("1 3\nfoo 1 two 3\n").empty());
  CHECK_FALSE(error_of("1 3\nfoo 1 2 3\n", 4).empty());
  CHECK(error_of("1 3\nfoo 1 2 3\n", 3).empty());
}

TEST_CASE("duplicate tokens keep the first vector") {
  const EmbeddingTable t = parse("3 2\na 1 0\nb 0 1\na 5 5\n");
  CHECK(t.size() == 2);
  CHECK(t.duplicates() == 1);
  CHECK((*t.find("a"))[0] == 1.0);
}

TEST_CASE("lowercase tables fold keys on load and lookup") {
  std::istringstream in("2 1\nHaus 1\nBAUM 2\n");
  const EmbeddingTable t = load_embeddings(in, {}, "de", true);
  CHECK(t.find("haus") != nullptr);
  CHECK(t.find("HAUS") != nullptr);
  CHECK(t.find("baum") != nullptr);
}

TEST_CASE("write then load reproduces the vectors exactly") {
  testing::Rng rng(3);
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  for (int i = 0; i < 20; ++i) {
    std::vector<double> v(5);
    for (double& x : v) x = testing::uniform(rng, -3.0, 3.0);
    rows.emplace_back("tok" + std::to_string(i), v);
  }
  std::ostringstream out;
  write_embeddings(out, rows);
  const EmbeddingTable t = parse(out.str(), 5);
  for (const auto& [tok, v] : rows) CHECK(*t.find(tok) == v);
}

TEST_CASE("cosine") {
  const std::vector<double> u{1, 2, 3};
  CHECK(cosine(u, u) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
  for (double c : {0.001, 0.5, 2.0, 1e6}) {
    CHECK(cosine(std::vector<double>{1, 1}, std::vector<double>{c, c}) == doctest::Approx(1.0).epsilon(1e-15));
  }
  CHECK(cosine(std::vector<double>{1, 0}, std::vector<double>{-1, 0}) == -1.0);
  CHECK(cosine(std::vector<double>{0, 0}, std::vector<double>{1, 0}) == 0.0);
  CHECK_THROWS_AS(cosine(std::vector<double>{1, 0}, std::vector<double>{1, 0, 0}), DataError);
}

TEST_CASE("similarity of a sentence with itself has a unit diagonal") {
  testing::Rng rng(5);
  const auto words = testing::word_list(15);
  const auto table = testing::random_table(rng, words, 8);
  const auto tables = shared(table, {"en"});
  for (int trial = 0; trial < 20; ++trial) {
    const Sentence s = testing::random_sentence(rng, words, testing::uniform_index(rng, 1, 10), "en");
    const SimilarityMatrix sim = similarity_matrix(s, s, tables);
    REQUIRE(sim.rows == s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.tokens[i].kind == TokenKind::content) {
        CHECK(std::fabs(sim.values(i, i) - 1.0) <= 1e-12);
        CHECK_FALSE(sim.masked(i, i));
      } else {
        CHECK(sim.values(i, i) == 0.0);
        CHECK(sim.masked(i, i));
      }
    }
  }
}

TEST_CASE("OOV and zero-norm tokens are masked to zero") {
  auto en = std::make_shared<EmbeddingTable>("en", 2);
  en->insert("a", {1.0, 0.0});
  en->insert("z", {0.0, 0.0});
  auto de = std::make_shared<EmbeddingTable>("de", 2);
  de->insert("b", {1.0, 1.0});
  EmbeddingTables tables{{"en", en}, {"de", de}};
  const Sentence s = tokenize("a q z", "en", TokenizerPolicy::whitespace);
  const Sentence t = tokenize("b r", "de", TokenizerPolicy::whitespace);
  const SimilarityMatrix sim = similarity_matrix(s, t, tables);
  CHECK(sim.values(1, 1) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  CHECK_FALSE(sim.masked(1, 1));
  for (std::size_t j = 0; j < t.size(); ++j) {
    CHECK(sim.values(2, j) == 0.0);  // q is OOV
    CHECK(sim.masked(2, j));
    CHECK(sim.values(3, j) == 0.0);  // z has zero norm
    CHECK(sim.masked(3, j));
  }
  CHECK(sim.values(1, 2) == 0.0);  // r is OOV
  CHECK(sim.masked(1, 2));
}

TEST_CASE("hand-computed 2x2 similarity") {
  auto en = std::make_shared<EmbeddingTable>("en", 2);
  en->insert("x", {3.0, 4.0});
  en->insert("y", {1.0, 0.0});
  auto fr = std::make_shared<EmbeddingTable>("fr", 2);
  fr->insert("u", {0.0, 2.0});
  fr->insert("v", {-1.0, 1.0});
  EmbeddingTables tables{{"en", en}, {"fr", fr}};
  const SimilarityMatrix sim = similarity_matrix(tokenize("x y", "en", TokenizerPolicy::whitespace),
                                                 tokenize("u v", "fr", TokenizerPolicy::whitespace), tables);
  CHECK(std::fabs(sim.values(1, 1) - 0.8) <= 1e-12);
  CHECK(std::fabs(sim.values(1, 2) - 1.0 / (5.0 * std::sqrt(2.0))) <= 1e-12);
  CHECK(std::fabs(sim.values(2, 1) - 0.0) <= 1e-12);
  CHECK(std::fabs(sim.values(2, 2) + 1.0 / std::sqrt(2.0)) <= 1e-12);
}

TEST_CASE("symmetry, boundedness, scale invariance") {
  testing::Rng rng(7);
  const auto words = testing::word_list(25);
  std::vector<std::string> known(words.begin(), words.begin() + 20);
  const auto table = testing::random_table(rng, known, 6);
  auto scaled = std::make_shared<EmbeddingTable>("", 6);
  for (const auto& w : known) {
    auto v = *table->find(w);
    for (double& x : v) x *= 3.7;
    scaled->insert(w, v);
  }
  const auto tables = shared(table, {"en", "es"});
  const auto scaled_tables = shared(scaled, {"en", "es"});
  for (int trial = 0; trial < 30; ++trial) {
    const Sentence s = testing::random_sentence(rng, words, testing::uniform_index(rng, 1, 12), "en");
    const Sentence t = testing::random_sentence(rng, words, testing::uniform_index(rng, 1, 12), "es");
    const auto st = similarity_matrix(s, t, tables);
    const auto ts = similarity_matrix(t, s, tables);
    const auto sc = similarity_matrix(s, t, scaled_tables);
    for (std::size_t i = 0; i < st.rows; ++i) {
      for (std::size_t j = 0; j < st.cols; ++j) {
        CHECK(st.values(i, j) == ts.values(j, i));
        CHECK(st.values(i, j) >= -1.0 - 1e-9);
        CHECK(st.values(i, j) <= 1.0 + 1e-9);
        CHECK(std::fabs(st.values(i, j) - sc.values(i, j)) <= 1e-9);
      }
    }
  }
}

TEST_CASE("missing table or dimension mismatch") {
  auto en = std::make_shared<EmbeddingTable>("en", 2);
  en->insert("a", {1.0, 0.0});
  auto de = std::make_shared<EmbeddingTable>("de", 3);
  de->insert("b", {1.0, 0.0, 0.0});
  const Sentence s = tokenize("a", "en", TokenizerPolicy::whitespace);
  const Sentence t = tokenize("b", "de", TokenizerPolicy::whitespace);
  CHECK_THROWS_AS(similarity_matrix(s, t, EmbeddingTables{{"en", en}}), DataError);
  CHECK_THROWS_AS(similarity_matrix(s, t, EmbeddingTables{{"en", en}, {"de", de}}), DataError);
}

#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <numeric>

namespace attrcons::testing {

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::vector<std::string> word_list(std::size_t n, const std::string& prefix) {
  std::vector<std::string> words;
  words.reserve(n);
  for (std::size_t i = 0; i < n; ++i) words.push_back(prefix + std::to_string(i));
  return words;
}

ToyModel random_model(Rng& rng, std::size_t vocab, std::size_t dim, std::size_t classes,
                      Activation activation) {
  return ToyModel::random(word_list(vocab), dim, classes, rng(), activation);
}

Sentence random_sentence(Rng& rng, const std::vector<std::string>& words, std::size_t length,
                         const std::string& language) {
  std::string text;
  for (std::size_t i = 0; i < length; ++i) {
    if (i) text += ' ';
    text += words[uniform_index(rng, 0, words.size() - 1)];
  }
  return tokenize(text, language, TokenizerPolicy::whitespace);
}

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = uniform(rng, lo, hi);
  return m;
}

std::vector<double> random_distribution(Rng& rng, std::size_t n, bool integer_weights) {
  std::vector<double> w(n);
  double total = 0.0;
  do {
    total = 0.0;
    for (double& v : w) {
      v = integer_weights ? static_cast<double>(uniform_index(rng, 0, 10)) : uniform(rng, 0.0, 1.0);
      total += v;
    }
  } while (total == 0.0);
  for (double& v : w) v /= total;
  return w;
}

TransportInstance random_rational_instance(Rng& rng, std::size_t l) {
  Matrix sim(l, l);
  for (double& v : sim.values()) v = 0.25 * static_cast<double>(uniform_index(rng, 0, 8)) - 1.0;
  return make_instance(random_distribution(rng, l, true), random_distribution(rng, l, true), sim);
}

AttributionVector random_attribution(Rng& rng, const Sentence& sentence, const std::string& pair_id,
                                     Side side) {
  AttributionVector a;
  a.pair_id = pair_id;
  a.side = side;
  a.sentence = sentence;
  a.raw.assign(sentence.size(), 0.0);
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    if (sentence.tokens[i].kind == TokenKind::content) a.raw[i] = uniform(rng, -1.0, 1.0);
  }
  a.normalized = normalize_attributions(a.raw, sentence);
  a.quadrature_steps = 1;
  a.rule = QuadratureRule::trapezoid;
  return a;
}

std::shared_ptr<const EmbeddingTable> random_table(Rng& rng, const std::vector<std::string>& words,
                                                   std::size_t dim) {
  auto table = std::make_shared<EmbeddingTable>("", dim);
  for (const auto& w : words) {
    std::vector<double> v(dim);
    for (double& x : v) x = uniform(rng, -1.0, 1.0);
    table->insert(w, std::move(v));
  }
  return table;
}

std::vector<std::size_t> permute_content(Rng& rng, Sentence& sentence) {
  std::vector<std::size_t> content;
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    if (sentence.tokens[i].kind == TokenKind::content) content.push_back(i);
  }
  std::vector<std::size_t> shuffled = content;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  std::vector<std::size_t> perm(sentence.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t k = 0; k < content.size(); ++k) perm[content[k]] = shuffled[k];
  std::vector<Token> tokens(sentence.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    tokens[i] = sentence.tokens[perm[i]];
    tokens[i].index = i;
  }
  sentence.tokens = std::move(tokens);
  return perm;
}

std::vector<double> permuted(const std::vector<double>& values, const std::vector<std::size_t>& perm) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out[i] = values[perm[i]];
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) worst = std::max(worst, std::fabs(av[i] - bv[i]));
  return worst;
}

ScratchDir::ScratchDir(const std::string& name) {
  path_ = std::filesystem::temp_directory_path() /
          ("attrcons-" + name + "-" + std::to_string(std::random_device{}()));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

ScratchDir::~ScratchDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Workspace make_workspace(Rng& rng, const std::filesystem::path& dir, const WorkspaceSpec& spec) {
  Workspace ws;
  const auto words = word_list(spec.vocab);
  for (std::size_t i = 0; i < spec.pairs; ++i) {
    ParallelPair p;
    char id[32];
    std::snprintf(id, sizeof id, "pair-%05zu", i);
    p.id = id;
    p.identity = spec.identity_every && i % spec.identity_every == 0;
    p.source = random_sentence(rng, words, uniform_index(rng, 1, spec.max_length), "en");
    p.target = p.identity ? p.source
                          : random_sentence(rng, words, uniform_index(rng, 1, spec.max_length),
                                            spec.targets[i % spec.targets.size()]);
    ws.pairs.push_back(std::move(p));
  }
  ws.corpus = dir / "corpus.jsonl";
  {
    std::ofstream out(ws.corpus);
    write_corpus(out, ws.pairs);
  }
  ws.model = dir / "model.json";
  save_model(ToyModel::random(words, 8, 3, rng(), spec.activation), ws.model);

  std::vector<std::pair<std::string, std::vector<double>>> rows;
  for (const auto& w : words) {
    std::vector<double> v(6);
    for (double& x : v) x = uniform(rng, -1.0, 1.0);
    rows.emplace_back(w, std::move(v));
  }
  std::vector<std::string> langs = spec.targets;
  langs.push_back("en");
  for (const auto& lang : langs) {
    ws.embeddings[lang] = dir / (lang + ".vec");
    std::ofstream out(ws.embeddings[lang]);
    write_embeddings(out, rows);
  }
  return ws;
}

}  // namespace attrcons::testing

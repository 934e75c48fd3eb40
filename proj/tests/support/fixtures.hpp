#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "attrcons/alignment.hpp"
#include "attrcons/analysis.hpp"
#include "attrcons/attribution.hpp"
#include "attrcons/corpus.hpp"
#include "attrcons/matrix.hpp"
#include "attrcons/toy_model.hpp"
#include "attrcons/transport.hpp"

namespace attrcons::testing {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi);
std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi);  // inclusive

/// "w0" .. "w{n-1}".
std::vector<std::string> word_list(std::size_t n, const std::string& prefix = "w");

ToyModel random_model(Rng& rng, std::size_t vocab, std::size_t dim, std::size_t classes,
                      Activation activation = Activation::identity);

/// Whitespace-tokenized sentence of `length` content words drawn from `words`.
Sentence random_sentence(Rng& rng, const std::vector<std::string>& words, std::size_t length,
                         const std::string& language);

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0);

/// Probability vector over `n` slots; with `integer_weights`, entries are k/total for k in 0..10.
std::vector<double> random_distribution(Rng& rng, std::size_t n, bool integer_weights = false);

/// Square instance with integer-weight marginals and similarities that are multiples of 0.25.
TransportInstance random_rational_instance(Rng& rng, std::size_t l);

/// Normalized attribution for `sentence` with random positive weights on content tokens.
AttributionVector random_attribution(Rng& rng, const Sentence& sentence, const std::string& pair_id,
                                     Side side);

/// Table with a random vector for every word, shared by the given languages.
std::shared_ptr<const EmbeddingTable> random_table(Rng& rng, const std::vector<std::string>& words,
                                                   std::size_t dim);

/// Relabels token positions of a sentence: content tokens are permuted, separators stay put.
/// Returns the permutation applied to positions (new position -> old position).
std::vector<std::size_t> permute_content(Rng& rng, Sentence& sentence);

/// Applies new->old position permutation to per-token values.
std::vector<double> permuted(const std::vector<double>& values, const std::vector<std::size_t>& perm);

double max_abs_diff(const Matrix& a, const Matrix& b);

/// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& name);
  ~ScratchDir();
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// On-disk inputs for an end-to-end run: corpus, toy-model checkpoint and one embedding
/// table per language (all languages share the vocabulary).
struct Workspace {
  std::filesystem::path corpus;
  std::filesystem::path model;
  std::map<std::string, std::filesystem::path> embeddings;
  std::vector<ParallelPair> pairs;
};

struct WorkspaceSpec {
  std::size_t pairs = 10;
  std::size_t max_length = 12;
  std::size_t vocab = 40;
  std::vector<std::string> targets{"de", "fr", "sw"};
  /// Every k-th pair is an identity pair (0 disables).
  std::size_t identity_every = 5;
  Activation activation = Activation::identity;
};

Workspace make_workspace(Rng& rng, const std::filesystem::path& dir, const WorkspaceSpec& spec);

}  // namespace attrcons::testing

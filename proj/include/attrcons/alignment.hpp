#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "attrcons/corpus.hpp"
#include "attrcons/matrix.hpp"

namespace attrcons {

/// Context-free token vectors for one language in the shared space.
class EmbeddingTable {
 public:
  EmbeddingTable(std::string language, std::size_t dim, bool lowercase_keys = false);

  /// Returns false (and counts a duplicate) if the token is already present.
  bool insert(std::string_view token, std::vector<double> vector);

  /// Null when the token is out of vocabulary.
  const std::vector<double>* find(std::string_view token) const;

  const std::string& language() const { return language_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  std::size_t duplicates() const { return duplicates_; }
  bool lowercase_keys() const { return lowercase_keys_; }

 private:
  std::string key(std::string_view token) const;

  std::string language_;
  std::size_t dim_;
  bool lowercase_keys_;
  std::size_t duplicates_ = 0;
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

/// Word-vector text format: header "V d", then V lines "token f1 ... fd".
/// With `lowercase_keys`, tokens are folded on load and on lookup so tables match a
/// lowercasing tokenizer.
EmbeddingTable load_embeddings(std::istream& in, std::optional<std::size_t> expected_dim = {},
                               std::string language = {}, bool lowercase_keys = false);
EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               std::optional<std::size_t> expected_dim = {},
                               std::string language = {}, bool lowercase_keys = false);

void write_embeddings(std::ostream& out, const std::vector<std::pair<std::string, std::vector<double>>>& rows);

/// Cosine similarity; 0 when either vector has zero norm. Throws DataError on length mismatch.
double cosine(std::span<const double> u, std::span<const double> v);

struct SimilarityMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Matrix values;
  /// Set where the entry was forced to 0: OOV or zero-norm vector, or a separator/padding token.
  std::vector<bool> oov_mask;

  bool masked(std::size_t i, std::size_t j) const { return oov_mask[i * cols + j]; }
};

/// Tables keyed by language code. Several languages may share one table.
using EmbeddingTables = std::map<std::string, std::shared_ptr<const EmbeddingTable>, std::less<>>;

SimilarityMatrix similarity_matrix(const Sentence& source, const Sentence& target,
                                   const EmbeddingTables& tables);

}  // namespace attrcons

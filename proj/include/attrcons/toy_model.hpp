#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "attrcons/corpus.hpp"
#include "attrcons/matrix.hpp"

namespace attrcons {

/// A scorer F(x, class) over an L x d embedding matrix with an analytic gradient.
/// Integrated gradients only needs this surface.
class DifferentiableScorer {
 public:
  virtual ~DifferentiableScorer() = default;
  virtual std::size_t classes() const = 0;
  virtual double score(const Matrix& embeddings, std::size_t cls) const = 0;
  virtual Matrix gradient(const Matrix& embeddings, std::size_t cls) const = 0;
};

enum class Activation { identity, tanh };

std::string_view to_string(Activation activation);
std::optional<Activation> parse_activation(std::string_view text);

/// Embedding lookup, mean pooling, optional tanh, affine head.
///
/// Row 0 of the embedding matrix is the padding row and is always zero; row 1 is the
/// unknown-token row. The score for class c is
///   act(mean_i x_i) . W[:, c] + b[c].
class ToyModel final : public DifferentiableScorer {
 public:
  static constexpr std::string_view kPadToken = "[PAD]";
  static constexpr std::string_view kUnkToken = "[UNK]";
  static constexpr std::size_t kPadRow = 0;
  static constexpr std::size_t kUnkRow = 1;

  /// `vocab[r]` names embedding row r. Throws DataError if any invariant fails.
  ToyModel(std::vector<std::string> vocab, Matrix embedding, Matrix output_weights,
           std::vector<double> output_bias, Activation activation, std::uint64_t seed);

  /// Seeded initialization. Reserved rows ([PAD], [UNK], [SEP]) are prepended to
  /// `tokens`; duplicates are dropped.
  static ToyModel random(const std::vector<std::string>& tokens, std::size_t dim,
                         std::size_t classes, std::uint64_t seed,
                         Activation activation = Activation::identity);

  std::size_t dim() const { return embedding_.cols(); }
  std::size_t vocab_size() const { return vocab_.size(); }
  std::size_t classes() const override { return output_bias_.size(); }
  Activation activation() const { return activation_; }
  std::uint64_t seed() const { return seed_; }

  const std::vector<std::string>& vocab() const { return vocab_; }
  const Matrix& embedding_matrix() const { return embedding_; }
  const Matrix& output_weights() const { return output_weights_; }
  const std::vector<double>& output_bias() const { return output_bias_; }

  /// Embedding row for a token: padding maps to the zero row, unknown surfaces to [UNK].
  std::size_t row_of(const Token& token) const;
  std::span<const double> padding_embedding() const { return embedding_.row(kPadRow); }

  double score(const Matrix& embeddings, std::size_t cls) const override;
  Matrix gradient(const Matrix& embeddings, std::size_t cls) const override;

 private:
  std::vector<double> pooled(const Matrix& embeddings) const;
  void check_input(const Matrix& embeddings, std::size_t cls) const;

  std::vector<std::string> vocab_;
  std::unordered_map<std::string, std::size_t> index_;
  Matrix embedding_;
  Matrix output_weights_;
  std::vector<double> output_bias_;
  Activation activation_;
  std::uint64_t seed_;
};

Matrix embed(const Sentence& sentence, const ToyModel& model);
double forward(const Matrix& embeddings, const ToyModel& model, std::size_t cls);
Matrix gradient(const Matrix& embeddings, const ToyModel& model, std::size_t cls);

/// Argmax over class scores; ties go to the lowest class index.
std::size_t predict(const Matrix& embeddings, const DifferentiableScorer& model);

/// JSON checkpoint, layout in docs/formats.md.
void save_model(const ToyModel& model, const std::filesystem::path& path);
ToyModel load_model(const std::filesystem::path& path);
std::string model_to_json(const ToyModel& model);
ToyModel model_from_json(std::string_view text);

}  // namespace attrcons

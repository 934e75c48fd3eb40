#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "attrcons/corpus.hpp"
#include "attrcons/matrix.hpp"
#include "attrcons/toy_model.hpp"

namespace attrcons {

enum class QuadratureRule { left_riemann, trapezoid };
enum class NormalizationMode { abs_l1 };
enum class Side { source, target };
/// Which prediction head was attributed. Span tasks attribute start and end separately.
enum class Head { classification, span_start, span_end };

std::string_view to_string(QuadratureRule rule);
std::string_view to_string(NormalizationMode mode);
std::string_view to_string(Side side);
std::string_view to_string(Head head);
std::optional<QuadratureRule> parse_quadrature_rule(std::string_view text);
std::optional<NormalizationMode> parse_normalization_mode(std::string_view text);
std::optional<Side> parse_side(std::string_view text);
std::optional<Head> parse_head(std::string_view text);

/// Path start point: separators keep their embedding, every other row is the padding row.
struct Baseline {
  Matrix embeddings;
};

Baseline make_baseline(const Sentence& sentence, const Matrix& embeddings,
                       std::span<const double> padding_row);
Baseline make_baseline(const Sentence& sentence, const ToyModel& model);

/// (x - x') * average of grad F over the straight path x' -> x, elementwise.
/// left_riemann samples alpha = k/m for k < m; trapezoid uses k = 0..m with half end weights.
Matrix integrated_gradients(const Matrix& x, const Matrix& x_prime,
                            const DifferentiableScorer& model, std::size_t cls, int steps,
                            QuadratureRule rule);

/// Row sums: one raw score per token.
std::vector<double> aggregate_attributions(const Matrix& lig);

/// |raw_i| / sum_j |raw_j| over the eligible positions; ineligible positions get 0.
/// All-zero input falls back to uniform over the eligible positions.
std::vector<double> normalize_attributions(std::span<const double> raw,
                                           const std::vector<bool>& eligible,
                                           NormalizationMode mode = NormalizationMode::abs_l1);
/// Every position eligible.
std::vector<double> normalize_attributions(std::span<const double> raw,
                                           NormalizationMode mode = NormalizationMode::abs_l1);
/// Only content tokens are eligible.
std::vector<double> normalize_attributions(std::span<const double> raw, const Sentence& sentence,
                                           NormalizationMode mode = NormalizationMode::abs_l1);

/// |sum(lig) - (F(x) - F(x'))|.
double completeness_check(const Matrix& lig, const DifferentiableScorer& model, std::size_t cls,
                          const Matrix& x, const Matrix& x_prime);

struct AttributionVector {
  std::string pair_id;
  Side side = Side::source;
  Head head = Head::classification;
  Sentence sentence;
  std::vector<double> raw;
  std::vector<double> normalized;
  int quadrature_steps = 0;
  QuadratureRule rule = QuadratureRule::trapezoid;
  std::optional<std::size_t> target_class;
  double convergence_delta = 0.0;

  friend bool operator==(const AttributionVector&, const AttributionVector&) = default;
};

struct AttributionOptions {
  int steps = 50;
  QuadratureRule rule = QuadratureRule::trapezoid;
  NormalizationMode normalization = NormalizationMode::abs_l1;
  /// Attribute this class instead of the predicted one.
  std::optional<std::size_t> forced_class;
};

AttributionVector attribute_sentence(const Sentence& sentence, const ToyModel& model,
                                     const AttributionOptions& options);

/// Source and target attributions for one pair, tagged with the pair id.
std::pair<AttributionVector, AttributionVector> attribute_pair(const ParallelPair& pair,
                                                               const ToyModel& model,
                                                               const AttributionOptions& options);

/// Interchange record; see docs/formats.md.
nlohmann::json to_json(const AttributionVector& attr);
/// Validates the record schema and invariants. Throws DataError describing the first problem.
AttributionVector attribution_from_json(const nlohmann::json& record);

/// Tolerance on the normalized sum, shared by validation and the transport builder.
inline constexpr double kDistributionTolerance = 1e-9;

}  // namespace attrcons

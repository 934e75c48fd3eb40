#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "attrcons/alignment.hpp"
#include "attrcons/attribution.hpp"
#include "attrcons/matrix.hpp"

namespace attrcons {

/// Square instance of the consistency LP
///
///   max  sum_ij f_ij * sim_ij
///   s.t. sum_j f_ij <= supply_i,  sum_i f_ij <= demand_j,  f_ij >= 0.
///
/// The shorter side is padded with zero-mass slots whose similarity rows/columns are 0.
struct TransportInstance {
  std::size_t size = 0;
  std::vector<double> supply;
  std::vector<double> demand;
  Matrix similarity;
};

enum class SolveStatus { optimal };

struct TransportPlan {
  Matrix flow;
  double objective = 0.0;
  std::size_t iterations = 0;
  SolveStatus status = SolveStatus::optimal;
};

/// Absolute tolerance for marginal sums, feasibility and optimality checks.
inline constexpr double kTransportTolerance = 1e-9;

/// Pads to a square instance and checks the invariants: non-negative marginals that each
/// sum to 1, similarities in [-1, 1]. Throws DataError otherwise.
TransportInstance make_instance(std::vector<double> supply, std::vector<double> demand,
                                const Matrix& similarity);

TransportInstance build_instance(const AttributionVector& source,
                                 const AttributionVector& target, const SimilarityMatrix& sim);

/// Exact optimum via the transportation simplex with Bland's rule. The returned plan has
/// passed a primal feasibility and dual feasibility (reduced cost) check; a failed check
/// or an exceeded iteration cap throws InvariantError.
TransportPlan solve(const TransportInstance& instance);

/// build_instance -> solve -> objective.
double consistency(const AttributionVector& source, const AttributionVector& target,
                   const SimilarityMatrix& sim);

/// Max constraint violation of `plan` against `instance` (0 when feasible).
double max_violation(const TransportInstance& instance, const Matrix& flow);

/// Plain-text dump for offline inspection; format in docs/formats.md.
void write_debug_dump(std::ostream& out, const TransportInstance& instance,
                      const TransportPlan& plan);

}  // namespace attrcons

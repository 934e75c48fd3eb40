#include "attrcons/transport.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <string>

#include "attrcons/errors.hpp"

namespace attrcons {
namespace {

// Reduced costs above -kPricingTolerance are treated as non-improving.
constexpr double kPricingTolerance = 1e-12;

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

void check_marginal(const std::vector<double>& m, const char* name) {
  if (m.empty()) throw DataError(std::string(name) + " is empty");
  for (double x : m) {
    if (!std::isfinite(x) || x < 0.0) throw DataError(std::string(name) + " has a negative or non-finite entry");
  }
  const double total = sum(m);
  if (std::abs(total - 1.0) > kTransportTolerance) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", total);
    throw DataError(std::string(name) + " sums to " + buf + ", expected 1");
  }
}

// Balanced transportation problem on (l+1) x (l+1) cells. The extra row and column are
// slack: row l absorbs unmet demand, column l absorbs unshipped supply, both at zero
// similarity. With slack supply sum(demand) and slack demand sum(supply) every feasible
// flow of the inequality LP extends uniquely to a feasible balanced flow with the same
// objective, and vice versa.
//
// Costs are negated similarities, so we minimize. The basis is a spanning tree of the
// bipartite row/column graph with 2n - 1 cells, degenerate cells carrying exact zeros.
class TransportationSimplex {
 public:
  explicit TransportationSimplex(const TransportInstance& inst)
      : l_(inst.size),
        n_(inst.size + 1),
        cost_(n_ * n_, 0.0),
        supply_(n_),
        demand_(n_),
        flow_(n_ * n_, 0.0),
        basic_(n_ * n_, 0),
        row_adj_(n_),
        col_adj_(n_),
        u_(n_),
        v_(n_) {
    for (std::size_t i = 0; i < l_; ++i) {
      for (std::size_t j = 0; j < l_; ++j) cost_[i * n_ + j] = -inst.similarity(i, j);
    }
    std::copy(inst.supply.begin(), inst.supply.end(), supply_.begin());
    std::copy(inst.demand.begin(), inst.demand.end(), demand_.begin());
    supply_[l_] = sum(inst.demand);
    demand_[l_] = sum(inst.supply);
  }

  std::size_t run(std::size_t iteration_cap) {
    initial_basis();
    std::size_t iterations = 0;
    for (;;) {
      compute_potentials();
      const std::size_t entering = bland_entering();
      if (entering == kNone) break;
      if (++iterations > iteration_cap) {
        throw InvariantError("transportation simplex exceeded " + std::to_string(iteration_cap) +
                             " pivots");
      }
      pivot(entering);
    }
    certify();
    return iterations;
  }

  double flow(std::size_t i, std::size_t j) const { return flow_[i * n_ + j]; }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  double reduced_cost(std::size_t i, std::size_t j) const {
    return cost_[i * n_ + j] - u_[i] - v_[j];
  }

  void add_basic(std::size_t i, std::size_t j) {
    basic_[i * n_ + j] = 1;
    row_adj_[i].push_back(j);
    col_adj_[j].push_back(i);
  }

  void remove_basic(std::size_t i, std::size_t j) {
    basic_[i * n_ + j] = 0;
    auto drop = [](std::vector<std::size_t>& v, std::size_t x) {
      auto it = std::find(v.begin(), v.end(), x);
      *it = v.back();
      v.pop_back();
    };
    drop(row_adj_[i], j);
    drop(col_adj_[j], i);
  }

  // Least-cost (most-similar-first) start. Exactly one line is crossed out per
  // allocation, except the last, which yields 2n - 1 cells forming a spanning tree.
  void initial_basis() {
    std::vector<std::size_t> order(n_ * n_);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return cost_[a] < cost_[b]; });
    std::vector<double> ra = supply_;
    std::vector<double> rb = demand_;
    std::vector<char> row_open(n_, 1);
    std::vector<char> col_open(n_, 1);
    std::size_t rows_left = n_;
    std::size_t cols_left = n_;
    for (std::size_t cell : order) {
      const std::size_t i = cell / n_;
      const std::size_t j = cell % n_;
      if (!row_open[i] || !col_open[j]) continue;
      const double q = std::min(ra[i], rb[j]);
      flow_[cell] = q;
      add_basic(i, j);
      ra[i] -= q;
      rb[j] -= q;
      if (rows_left == 1 && cols_left == 1) break;
      bool close_row;
      if (rows_left == 1) {
        close_row = false;
      } else if (cols_left == 1) {
        close_row = true;
      } else {
        close_row = ra[i] <= rb[j];
      }
      if (close_row) {
        row_open[i] = 0;
        --rows_left;
      } else {
        col_open[j] = 0;
        --cols_left;
      }
    }
  }

  void compute_potentials() {
    // Node ids: rows 0..n-1, columns n..2n-1.
    std::vector<char> seen(2 * n_, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    u_[0] = 0.0;
    std::size_t reached = 1;
    while (!stack.empty()) {
      const std::size_t node = stack.back();
      stack.pop_back();
      if (node < n_) {
        for (std::size_t j : row_adj_[node]) {
          if (seen[n_ + j]) continue;
          seen[n_ + j] = 1;
          ++reached;
          v_[j] = cost_[node * n_ + j] - u_[node];
          stack.push_back(n_ + j);
        }
      } else {
        const std::size_t j = node - n_;
        for (std::size_t i : col_adj_[j]) {
          if (seen[i]) continue;
          seen[i] = 1;
          ++reached;
          u_[i] = cost_[i * n_ + j] - v_[j];
          stack.push_back(i);
        }
      }
    }
    if (reached != 2 * n_) throw InvariantError("transportation basis is not a spanning tree");
  }

  std::size_t bland_entering() const {
    for (std::size_t cell = 0; cell < n_ * n_; ++cell) {
      if (basic_[cell]) continue;
      if (reduced_cost(cell / n_, cell % n_) < -kPricingTolerance) return cell;
    }
    return kNone;
  }

  // Tree path from row `from` to column `to`, as the cells along it in order starting at
  // the column end.
  std::vector<std::size_t> tree_path(std::size_t from_row, std::size_t to_col) const {
    std::vector<std::size_t> parent(2 * n_, kNone);
    std::vector<std::size_t> queue{from_row};
    parent[from_row] = from_row;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const std::size_t node = queue[head];
      if (node == n_ + to_col) break;
      if (node < n_) {
        for (std::size_t j : row_adj_[node]) {
          if (parent[n_ + j] != kNone) continue;
          parent[n_ + j] = node;
          queue.push_back(n_ + j);
        }
      } else {
        for (std::size_t i : col_adj_[node - n_]) {
          if (parent[i] != kNone) continue;
          parent[i] = node;
          queue.push_back(i);
        }
      }
    }
    if (parent[n_ + to_col] == kNone) throw InvariantError("no tree path for entering cell");
    std::vector<std::size_t> cells;
    for (std::size_t node = n_ + to_col; node != from_row;) {
      const std::size_t prev = parent[node];
      const std::size_t cell = node >= n_ ? prev * n_ + (node - n_) : node * n_ + (prev - n_);
      cells.push_back(cell);
      node = prev;
    }
    return cells;
  }

  void pivot(std::size_t entering) {
    const std::size_t ei = entering / n_;
    const std::size_t ej = entering % n_;
    // Cycle: entering (+), then path cells alternating -, +, -, ...; the path has odd length.
    const auto path = tree_path(ei, ej);
    double theta = flow_[path[0]];
    for (std::size_t k = 0; k < path.size(); k += 2) theta = std::min(theta, flow_[path[k]]);
    std::size_t leaving = kNone;
    for (std::size_t k = 0; k < path.size(); k += 2) {
      if (flow_[path[k]] == theta && (leaving == kNone || path[k] < leaving)) leaving = path[k];
    }
    flow_[entering] = theta;
    for (std::size_t k = 0; k < path.size(); ++k) {
      flow_[path[k]] += (k % 2 == 0) ? -theta : theta;
    }
    flow_[leaving] = 0.0;
    remove_basic(leaving / n_, leaving % n_);
    add_basic(ei, ej);
  }

  void certify() {
    compute_potentials();
    for (std::size_t cell = 0; cell < n_ * n_; ++cell) {
      if (flow_[cell] < 0.0) {
        if (flow_[cell] < -kTransportTolerance) {
          throw InvariantError("transportation simplex produced a negative flow");
        }
        flow_[cell] = 0.0;
      }
      if (!basic_[cell] && reduced_cost(cell / n_, cell % n_) < -kTransportTolerance) {
        throw InvariantError("transportation simplex stopped at a dual-infeasible basis");
      }
    }
  }

  std::size_t l_;
  std::size_t n_;
  std::vector<double> cost_;
  std::vector<double> supply_;
  std::vector<double> demand_;
  std::vector<double> flow_;
  std::vector<char> basic_;
  std::vector<std::vector<std::size_t>> row_adj_;
  std::vector<std::vector<std::size_t>> col_adj_;
  std::vector<double> u_;
  std::vector<double> v_;
};

}  // namespace

TransportInstance make_instance(std::vector<double> supply, std::vector<double> demand,
                                const Matrix& similarity) {
  check_marginal(supply, "supply");
  check_marginal(demand, "demand");
  if (similarity.rows() != supply.size() || similarity.cols() != demand.size()) {
    throw DataError("similarity matrix is " + std::to_string(similarity.rows()) + "x" +
                    std::to_string(similarity.cols()) + ", expected " +
                    std::to_string(supply.size()) + "x" + std::to_string(demand.size()));
  }
  for (double s : similarity.values()) {
    if (!std::isfinite(s) || s < -1.0 - kTransportTolerance || s > 1.0 + kTransportTolerance) {
      throw DataError("similarity entry outside [-1, 1]");
    }
  }
  TransportInstance inst;
  inst.size = std::max(supply.size(), demand.size());
  inst.similarity = Matrix(inst.size, inst.size);
  for (std::size_t i = 0; i < similarity.rows(); ++i) {
    for (std::size_t j = 0; j < similarity.cols(); ++j) inst.similarity(i, j) = similarity(i, j);
  }
  supply.resize(inst.size, 0.0);
  demand.resize(inst.size, 0.0);
  inst.supply = std::move(supply);
  inst.demand = std::move(demand);
  return inst;
}

TransportInstance build_instance(const AttributionVector& source,
                                 const AttributionVector& target, const SimilarityMatrix& sim) {
  if (sim.rows != source.normalized.size() || sim.cols != target.normalized.size()) {
    throw DataError("similarity matrix shape does not match the attribution vectors");
  }
  return make_instance(source.normalized, target.normalized, sim.values);
}

TransportPlan solve(const TransportInstance& instance) {
  if (instance.size == 0 || instance.supply.size() != instance.size ||
      instance.demand.size() != instance.size || instance.similarity.rows() != instance.size ||
      instance.similarity.cols() != instance.size) {
    throw DataError("malformed transport instance");
  }
  const std::size_t l = instance.size;
  TransportationSimplex simplex(instance);
  TransportPlan plan;
  plan.iterations = simplex.run(l * l * 100);
  plan.flow = Matrix(l, l);
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t j = 0; j < l; ++j) {
      // Flow on a route with sim <= 0 can only be round-off or a tie; dropping it keeps the
      // plan feasible and optimal, and makes an all-non-positive instance score exactly 0.
      if (instance.similarity(i, j) <= 0.0) continue;
      plan.flow(i, j) = simplex.flow(i, j);
      plan.objective += plan.flow(i, j) * instance.similarity(i, j);
    }
  }
  if (max_violation(instance, plan.flow) > kTransportTolerance) {
    throw InvariantError("transportation simplex returned an infeasible plan");
  }
  plan.status = SolveStatus::optimal;
  return plan;
}

double consistency(const AttributionVector& source, const AttributionVector& target,
                   const SimilarityMatrix& sim) {
  return solve(build_instance(source, target, sim)).objective;
}

double max_violation(const TransportInstance& instance, const Matrix& flow) {
  double worst = 0.0;
  std::vector<double> col(instance.size, 0.0);
  for (std::size_t i = 0; i < instance.size; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < instance.size; ++j) {
      worst = std::max(worst, -flow(i, j));
      row += flow(i, j);
      col[j] += flow(i, j);
    }
    worst = std::max(worst, row - instance.supply[i]);
  }
  for (std::size_t j = 0; j < instance.size; ++j) worst = std::max(worst, col[j] - instance.demand[j]);
  return worst;
}

void write_debug_dump(std::ostream& out, const TransportInstance& instance,
                      const TransportPlan& plan) {
  char buf[40];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  auto line = [&](const char* tag, std::span<const double> values) {
    out << tag;
    for (double v : values) out << ' ' << num(v);
    out << '\n';
  };
  out << "transport " << instance.size << '\n';
  line("supply", instance.supply);
  line("demand", instance.demand);
  for (std::size_t i = 0; i < instance.size; ++i) line("sim", instance.similarity.row(i));
  out << "objective " << num(plan.objective) << '\n';
  out << "iterations " << plan.iterations << '\n';
  for (std::size_t i = 0; i < instance.size; ++i) line("flow", plan.flow.row(i));
}

}  // namespace attrcons

#ifndef MEANFIELD_NETWORK_SIMPLEX_HPP
#define MEANFIELD_NETWORK_SIMPLEX_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "meanfield/core.hpp"

namespace meanfield {

struct PlanEntry {
  std::size_t source = 0;
  std::size_t target = 0;
  double mass = 0.0;
};

struct TransportSolution {
  std::vector<PlanEntry> entries;
  double cost = 0.0;
};

namespace detail {

// Primal network simplex for the balanced transportation problem
//
//   min sum c_ij x_ij   s.t.  sum_j x_ij = a_i,  sum_i x_ij = b_j,  x >= 0,
//
// on the complete bipartite graph. An artificial root joined to every node
// gives a strongly feasible starting tree; leaving arcs follow Cunningham's
// rule (last blocking arc along the cycle orientation), which rules out
// cycling under degeneracy. Entering arcs come from block pricing with ties
// resolved to the lowest arc index.
class TransportationSimplex {
 public:
  TransportationSimplex(std::span<const double> cost, std::span<const double> supply,
                        std::span<const double> demand)
      : n_(supply.size()),
        m_(demand.size()),
        cost_(cost),
        nodes_(n_ + m_ + 1),
        root_(n_ + m_),
        real_arcs_(n_ * m_),
        arcs_(real_arcs_ + n_ + m_) {
    double max_cost = 0.0;
    for (double c : cost_) max_cost = std::max(max_cost, std::abs(c));
    scale_ = std::max(max_cost, 1.0);
    // Any flow routed i -> root -> j can be rerouted along i -> j for less
    // when 2 * art_cost_ exceeds every c_ij.
    art_cost_ = max_cost + 1.0;
    eps_ = 1e-12 * scale_;

    flow_.assign(arcs_, 0.0);
    parent_.assign(nodes_, kNone);
    pred_.assign(nodes_, kNone);
    up_.assign(nodes_, 0);
    depth_.assign(nodes_, 0);
    pi_.assign(nodes_, 0.0);
    first_child_.assign(nodes_, kNone);
    next_sib_.assign(nodes_, kNone);
    prev_sib_.assign(nodes_, kNone);
    in_tree_.assign(arcs_, 0);

    for (std::size_t u = 0; u < n_ + m_; ++u) {
      const std::size_t e = real_arcs_ + u;
      in_tree_[e] = 1;
      pred_[u] = e;
      depth_[u] = 1;
      if (u < n_) {
        up_[u] = 1;  // u -> root
        flow_[e] = supply[u];
        pi_[u] = -art_cost_;
      } else {
        up_[u] = 0;  // root -> u
        flow_[e] = demand[u - n_];
        pi_[u] = art_cost_;
      }
      attach(u, root_);
    }
  }

  TransportSolution solve() {
    const std::size_t block = std::max<std::size_t>(
        16, static_cast<std::size_t>(std::sqrt(static_cast<double>(arcs_))));
    std::size_t next = 0;
    const std::uint64_t max_pivots =
        std::max<std::uint64_t>(1000000, 200ull * static_cast<std::uint64_t>(arcs_));
    std::uint64_t pivots = 0;
    for (;;) {
      const std::size_t entering = find_entering(next, block);
      if (entering == kNone) break;
      pivot(entering);
      if (++pivots > max_pivots)
        throw NumericalError("network simplex: pivot limit exceeded", static_cast<long>(pivots));
    }
    return extract();
  }

 private:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  std::size_t tail(std::size_t e) const {
    if (e < real_arcs_) return e / m_;
    const std::size_t u = e - real_arcs_;
    return u < n_ ? u : root_;
  }
  std::size_t head(std::size_t e) const {
    if (e < real_arcs_) return n_ + e % m_;
    const std::size_t u = e - real_arcs_;
    return u < n_ ? root_ : u;
  }
  double arc_cost(std::size_t e) const { return e < real_arcs_ ? cost_[e] : art_cost_; }
  double reduced_cost(std::size_t e) const {
    return arc_cost(e) + pi_[tail(e)] - pi_[head(e)];
  }

  // Scans arcs cyclically from `next`; within each block picks the most
  // negative reduced cost. Returns kNone once a full sweep finds nothing.
  std::size_t find_entering(std::size_t& next, std::size_t block) {
    std::size_t best = kNone;
    double best_rc = -eps_;
    std::size_t scanned_in_block = 0;
    for (std::size_t count = 0; count < arcs_; ++count) {
      const std::size_t e = (next + count) % arcs_;
      if (!in_tree_[e]) {
        const double rc = reduced_cost(e);
        if (rc < best_rc || (rc == best_rc && best != kNone && e < best)) {
          best_rc = rc;
          best = e;
        }
      }
      if (++scanned_in_block == block) {
        if (best != kNone) {
          next = (e + 1) % arcs_;
          return best;
        }
        scanned_in_block = 0;
      }
    }
    if (best != kNone) next = (best + 1) % arcs_;
    return best;
  }

  void attach(std::size_t child, std::size_t parent) {
    parent_[child] = parent;
    prev_sib_[child] = kNone;
    next_sib_[child] = first_child_[parent];
    if (first_child_[parent] != kNone) prev_sib_[first_child_[parent]] = child;
    first_child_[parent] = child;
  }

  void detach(std::size_t child) {
    const std::size_t p = parent_[child];
    if (prev_sib_[child] != kNone)
      next_sib_[prev_sib_[child]] = next_sib_[child];
    else
      first_child_[p] = next_sib_[child];
    if (next_sib_[child] != kNone) prev_sib_[next_sib_[child]] = prev_sib_[child];
    prev_sib_[child] = next_sib_[child] = kNone;
    parent_[child] = kNone;
  }

  void pivot(std::size_t entering) {
    const std::size_t first = tail(entering);
    const std::size_t second = head(entering);

    // Join of the two tree paths.
    std::size_t a = first, b = second;
    while (a != b) {
      if (depth_[a] > depth_[b]) {
        a = parent_[a];
      } else if (depth_[b] > depth_[a]) {
        b = parent_[b];
      } else {
        a = parent_[a];
        b = parent_[b];
      }
    }
    const std::size_t join = a;

    // Cycle orientation: join -> ... -> first -> second -> ... -> join.
    constexpr double kInf = std::numeric_limits<double>::infinity();
    double delta = kInf;
    std::size_t out_node = kNone;
    int side = 0;
    for (std::size_t x = first; x != join; x = parent_[x]) {
      // Flow runs parent -> x here; arcs pointing x -> parent shrink.
      if (up_[x] && flow_[pred_[x]] < delta) {
        delta = flow_[pred_[x]];
        out_node = x;
        side = 1;
      }
    }
    for (std::size_t x = second; x != join; x = parent_[x]) {
      // Flow runs x -> parent here; arcs pointing parent -> x shrink.
      if (!up_[x] && flow_[pred_[x]] <= delta) {
        delta = flow_[pred_[x]];
        out_node = x;
        side = 2;
      }
    }
    if (out_node == kNone)
      throw NumericalError("network simplex: unbounded cycle", 0);

    if (delta > 0.0) {
      flow_[entering] += delta;
      for (std::size_t x = first; x != join; x = parent_[x])
        flow_[pred_[x]] += up_[x] ? -delta : delta;
      for (std::size_t x = second; x != join; x = parent_[x])
        flow_[pred_[x]] += up_[x] ? delta : -delta;
    }
    const std::size_t leaving = pred_[out_node];
    flow_[leaving] = 0.0;
    in_tree_[leaving] = 0;
    in_tree_[entering] = 1;

    // Re-hang the cut subtree (rooted at out_node) from the entering arc:
    // reverse the path in_node -> ... -> out_node.
    const std::size_t in_node = side == 1 ? first : second;
    const std::size_t new_parent = side == 1 ? second : first;
    std::size_t x = in_node;
    std::size_t carry_parent = new_parent;
    std::size_t carry_pred = entering;
    char carry_up = side == 1 ? 1 : 0;
    for (;;) {
      const std::size_t old_parent = parent_[x];
      const std::size_t old_pred = pred_[x];
      const char old_up = up_[x];
      detach(x);
      attach(x, carry_parent);
      pred_[x] = carry_pred;
      up_[x] = carry_up;
      if (x == out_node) break;
      carry_parent = x;
      carry_pred = old_pred;
      carry_up = old_up ? 0 : 1;
      x = old_parent;
    }
    refresh_subtree(in_node);
  }

  // Recomputes depth and potentials below (and including) `top`.
  void refresh_subtree(std::size_t top) {
    stack_.clear();
    stack_.push_back(top);
    while (!stack_.empty()) {
      const std::size_t u = stack_.back();
      stack_.pop_back();
      const std::size_t p = parent_[u];
      depth_[u] = depth_[p] + 1;
      const double c = arc_cost(pred_[u]);
      pi_[u] = up_[u] ? pi_[p] - c : pi_[p] + c;
      for (std::size_t ch = first_child_[u]; ch != kNone; ch = next_sib_[ch]) stack_.push_back(ch);
    }
  }

  TransportSolution extract() const {
    for (std::size_t u = 0; u < n_ + m_; ++u)
      if (flow_[real_arcs_ + u] > 1e-12)
        throw NumericalError("network simplex: infeasible (artificial flow remains)", 0);
    for (std::size_t e = 0; e < real_arcs_; ++e) {
      const double rc = reduced_cost(e);
      if (rc < -1e-9 * scale_)
        throw NumericalError("network simplex: optimality certificate failed", 0);
      if (flow_[e] > 0.0 && std::abs(rc) > 1e-9 * scale_)
        throw NumericalError("network simplex: complementary slackness violated", 0);
    }
    TransportSolution sol;
    std::vector<double> terms;
    for (std::size_t e = 0; e < real_arcs_; ++e) {
      if (flow_[e] > 0.0) {
        sol.entries.push_back({e / m_, e % m_, flow_[e]});
        terms.push_back(flow_[e] * cost_[e]);
      }
    }
    sol.cost = pairwise_sum(terms);
    return sol;
  }

  std::size_t n_, m_;
  std::span<const double> cost_;
  std::size_t nodes_, root_, real_arcs_, arcs_;
  double scale_ = 1.0, art_cost_ = 1.0, eps_ = 0.0;
  std::vector<double> flow_;
  std::vector<std::size_t> parent_, pred_;
  std::vector<char> up_;
  std::vector<std::size_t> depth_;
  std::vector<double> pi_;
  std::vector<std::size_t> first_child_, next_sib_, prev_sib_;
  std::vector<char> in_tree_;
  std::vector<std::size_t> stack_;
};

}  // namespace detail

// Solves the transportation problem with strictly positive supplies and
// demands of equal total mass.
inline TransportSolution solve_transportation(std::span<const double> cost,
                                              std::span<const double> supply,
                                              std::span<const double> demand) {
  require(cost.size() == supply.size() * demand.size(),
          "solve_transportation: cost matrix shape mismatch");
  for (double a : supply) require(a > 0.0, "solve_transportation: supplies must be > 0");
  for (double b : demand) require(b > 0.0, "solve_transportation: demands must be > 0");
  detail::TransportationSimplex simplex(cost, supply, demand);
  return simplex.solve();
}

}  // namespace meanfield

#endif  // MEANFIELD_NETWORK_SIMPLEX_HPP

// Primal network simplex for the dense transportation problem.
//
// Graph: sources 0..na-1, sinks na..na+nb-1, root na+nb. Real arcs i->j for
// every (source, sink) pair; one artificial arc per node connecting it to the
// root (source->root at cost 0, root->sink at a prohibitive cost). The initial
// basis is the star around the root, which is strongly feasible; leaving arcs
// are chosen with the usual first-side-strict / second-side-weak tie rule so
// the basis stays strongly feasible and degenerate pivots cannot cycle.

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "mfje/error.hpp"
#include "mfje/metrics.hpp"

namespace mfje {

namespace {

class NetworkSimplex {
 public:
  NetworkSimplex(std::span<const double> supply, std::span<const double> demand, const CostMatrix& cost)
      : na_(supply.size()), nb_(demand.size()), cost_(cost) {
    nodes_ = na_ + nb_ + 1;
    root_ = na_ + nb_;
    real_arcs_ = na_ * nb_;
    double cmax = 0.0;
    for (double c : cost.data()) cmax = std::max(cmax, std::abs(c));
    cmax_ = cmax;
    art_cost_ = (cmax + 1.0) * static_cast<double>(nodes_);
    eps_ = 1e-11 * (cmax + 1e-300);

    flow_.assign(real_arcs_ + na_ + nb_, 0.0);
    parent_.assign(nodes_, root_);
    pred_.assign(nodes_, kNone);
    up_.assign(nodes_, 0);
    depth_.assign(nodes_, 1);
    pi_.assign(nodes_, 0.0);
    first_child_.assign(nodes_, kNone);
    next_sibling_.assign(nodes_, kNone);
    prev_sibling_.assign(nodes_, kNone);

    depth_[root_] = 0;
    parent_[root_] = kNone;
    for (std::size_t v = 0; v < na_ + nb_; ++v) {
      const std::size_t e = real_arcs_ + v;
      pred_[v] = e;
      if (v < na_) {
        up_[v] = 1;  // v -> root
        flow_[e] = supply[v];
        pi_[v] = 0.0;
      } else {
        up_[v] = 0;  // root -> v
        flow_[e] = demand[v - na_];
        pi_[v] = art_cost_;
      }
      link_child(root_, v);
    }
  }

  void run() {
    if (real_arcs_ == 0) return;
    block_ = std::max<std::size_t>(16, static_cast<std::size_t>(std::sqrt(static_cast<double>(real_arcs_))));
    const std::size_t max_pivots = 50 * real_arcs_ + 10000;
    for (;;) {
      const std::size_t e = find_entering();
      if (e == kNone) break;
      pivot(e);
      if (++pivots_ > max_pivots) throw Error("metrics", "network simplex exceeded its pivot budget");
    }
  }

  TransportPlan plan() const {
    TransportPlan p;
    p.rows = na_;
    p.cols = nb_;
    p.flow.assign(flow_.begin(), flow_.begin() + static_cast<std::ptrdiff_t>(real_arcs_));
    double total = 0.0;
    for (std::size_t e = 0; e < real_arcs_; ++e)
      if (p.flow[e] != 0.0) total += p.flow[e] * cost_.data()[e];
    p.cost = total;
    p.pivots = pivots_;
    return p;
  }

 private:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  std::size_t src(std::size_t e) const {
    if (e < real_arcs_) return e / nb_;
    const std::size_t v = e - real_arcs_;
    return v < na_ ? v : root_;
  }
  std::size_t tgt(std::size_t e) const {
    if (e < real_arcs_) return na_ + e % nb_;
    const std::size_t v = e - real_arcs_;
    return v < na_ ? root_ : v;
  }
  double arc_cost(std::size_t e) const {
    if (e < real_arcs_) return cost_.data()[e];
    return (e - real_arcs_) < na_ ? 0.0 : art_cost_;
  }
  double reduced_cost(std::size_t e) const { return arc_cost(e) + pi_[src(e)] - pi_[tgt(e)]; }

  std::size_t find_entering() {
    std::size_t scanned = 0;
    double best = -eps_;
    std::size_t best_arc = kNone;
    std::size_t in_block = 0;
    while (scanned < real_arcs_) {
      const std::size_t e = next_arc_;
      next_arc_ = next_arc_ + 1 == real_arcs_ ? 0 : next_arc_ + 1;
      ++scanned;
      const double rc = cost_.data()[e] + pi_[e / nb_] - pi_[na_ + e % nb_];
      if (rc < best) {
        best = rc;
        best_arc = e;
      }
      if (++in_block == block_) {
        if (best_arc != kNone) return best_arc;
        in_block = 0;
      }
    }
    return best_arc;
  }

  void unlink_child(std::size_t v) {
    const std::size_t p = parent_[v];
    if (prev_sibling_[v] != kNone)
      next_sibling_[prev_sibling_[v]] = next_sibling_[v];
    else
      first_child_[p] = next_sibling_[v];
    if (next_sibling_[v] != kNone) prev_sibling_[next_sibling_[v]] = prev_sibling_[v];
    prev_sibling_[v] = next_sibling_[v] = kNone;
  }

  void link_child(std::size_t p, std::size_t v) {
    parent_[v] = p;
    prev_sibling_[v] = kNone;
    next_sibling_[v] = first_child_[p];
    if (first_child_[p] != kNone) prev_sibling_[first_child_[p]] = v;
    first_child_[p] = v;
  }

  void pivot(std::size_t entering) {
    const std::size_t first = src(entering);
    const std::size_t second = tgt(entering);

    std::size_t a = first, b = second;
    while (a != b) {
      if (depth_[a] >= depth_[b] && a != root_)
        a = parent_[a];
      else
        b = parent_[b];
    }
    const std::size_t join = a;

    const double inf = std::numeric_limits<double>::infinity();
    double delta = inf;
    std::size_t u_out = kNone;
    int side = 0;
    for (std::size_t u = first; u != join; u = parent_[u]) {
      const double d = up_[u] ? flow_[pred_[u]] : inf;
      if (d < delta) {
        delta = d;
        u_out = u;
        side = 1;
      }
    }
    for (std::size_t u = second; u != join; u = parent_[u]) {
      const double d = up_[u] ? inf : flow_[pred_[u]];
      if (d <= delta) {
        delta = d;
        u_out = u;
        side = 2;
      }
    }
    if (u_out == kNone) throw Error("metrics", "transport problem is unbounded");

    if (delta > 0.0) {
      flow_[entering] += delta;
      for (std::size_t u = first; u != join; u = parent_[u]) flow_[pred_[u]] += up_[u] ? -delta : delta;
      for (std::size_t u = second; u != join; u = parent_[u]) flow_[pred_[u]] += up_[u] ? delta : -delta;
    }
    flow_[pred_[u_out]] = 0.0;

    // Re-hang the subtree below the leaving arc from the entering arc.
    const std::size_t w = side == 1 ? first : second;
    std::size_t new_parent = side == 1 ? second : first;
    std::size_t new_pred = entering;
    unsigned char new_up = side == 1 ? 1 : 0;
    std::size_t v = w;
    for (;;) {
      const std::size_t old_parent = parent_[v];
      const std::size_t old_pred = pred_[v];
      const unsigned char old_up = up_[v];
      unlink_child(v);
      link_child(new_parent, v);
      pred_[v] = new_pred;
      up_[v] = new_up;
      if (v == u_out) break;
      new_parent = v;
      new_pred = old_pred;
      new_up = old_up ? 0 : 1;
      v = old_parent;
    }

    // Depth and potentials of the moved subtree.
    stack_.clear();
    stack_.push_back(w);
    while (!stack_.empty()) {
      const std::size_t x = stack_.back();
      stack_.pop_back();
      const std::size_t p = parent_[x];
      depth_[x] = depth_[p] + 1;
      const double c = arc_cost(pred_[x]);
      pi_[x] = up_[x] ? pi_[p] - c : pi_[p] + c;
      for (std::size_t ch = first_child_[x]; ch != kNone; ch = next_sibling_[ch]) stack_.push_back(ch);
    }
  }

  std::size_t na_, nb_;
  const CostMatrix& cost_;
  std::size_t nodes_ = 0, root_ = 0, real_arcs_ = 0;
  double cmax_ = 0.0, art_cost_ = 0.0, eps_ = 0.0;
  std::vector<double> flow_;
  std::vector<std::size_t> parent_, pred_, depth_;
  std::vector<unsigned char> up_;
  std::vector<double> pi_;
  std::vector<std::size_t> first_child_, next_sibling_, prev_sibling_;
  std::vector<std::size_t> stack_;
  std::size_t next_arc_ = 0, block_ = 16, pivots_ = 0;
};

}  // namespace

TransportPlan solve_transport(std::span<const double> supply, std::span<const double> demand, const CostMatrix& cost) {
  if (supply.empty() || demand.empty()) throw InvalidArgument("metrics", "transport problem with an empty side");
  if (cost.rows() != supply.size() || cost.cols() != demand.size())
    throw InvalidArgument("metrics", "cost matrix shape does not match the marginals");
  double sa = 0.0, sb = 0.0;
  for (double v : supply) {
    if (!(v >= 0.0)) throw InvalidArgument("metrics", "negative or NaN supply");
    sa += v;
  }
  for (double v : demand) {
    if (!(v >= 0.0)) throw InvalidArgument("metrics", "negative or NaN demand");
    sb += v;
  }
  if (std::abs(sa - sb) > 1e-9) {
    std::ostringstream os;
    os.precision(17);
    os << "mass mismatch: " << sa << " vs " << sb;
    throw InvalidArgument("metrics", os.str());
  }
  for (double c : cost.data())
    if (!std::isfinite(c)) throw InvalidArgument("metrics", "non-finite transport cost");
  NetworkSimplex ns(supply, demand, cost);
  ns.run();
  return ns.plan();
}

}  // namespace mfje

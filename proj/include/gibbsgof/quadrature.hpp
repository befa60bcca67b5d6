#pragma once

#include <cmath>
#include <sstream>
#include <string>

#include "gibbsgof/errors.hpp"
#include "gibbsgof/geometry.hpp"

namespace gibbsgof {

/// Stratified midpoint rule: ⌈r·side⌉ nodes per side on each integration cube.
struct QuadratureSpec {
  int resolution = 64;

  long long nodes_per_side(double side) const {
    if (resolution <= 0) fail(ErrorKind::InvalidParameter, "quadrature resolution must be positive");
    return std::max<long long>(1, detail::ceil_tolerant(static_cast<double>(resolution) * side));
  }
};

/// Visits the midpoint nodes of `region` for every mark, in lexicographic node
/// order (marks innermost), passing f(node, weight) with weight = mark weight ×
/// cell volume.
template <std::size_t Dim, class F>
void for_each_node(const Box<Dim>& region, const MarkSet& marks, const QuadratureSpec& spec, F&& f) {
  const long long n = spec.nodes_per_side(region.side);
  const double h = region.side / static_cast<double>(n);
  const double cell_volume = detail::ipow(h, Dim);
  std::array<long long, Dim> idx{};
  const auto total = detail::ipow<std::size_t>(static_cast<std::size_t>(n), Dim);
  for (std::size_t lin = 0; lin < total; ++lin) {
    std::size_t rem = lin;
    for (std::size_t k = Dim; k-- > 0;) {
      idx[k] = static_cast<long long>(rem % static_cast<std::size_t>(n));
      rem /= static_cast<std::size_t>(n);
    }
    MarkedPoint<Dim> node;
    for (std::size_t k = 0; k < Dim; ++k) {
      node.position[k] = region.lower[k] + (static_cast<double>(idx[k]) + 0.5) * h;
    }
    for (Mark m = 0; m < marks.size(); ++m) {
      node.mark = m;
      f(node, marks.weight(m) * cell_volume);
    }
  }
}

namespace detail {

template <std::size_t Dim>
[[noreturn]] void non_finite_node(const MarkedPoint<Dim>& node, double value) {
  std::ostringstream os;
  os << "integrand is " << value << " at node (";
  for (std::size_t k = 0; k < Dim; ++k) os << (k ? ", " : "") << node.position[k];
  os << "; mark " << node.mark << ")";
  fail(ErrorKind::Numeric, os.str());
}

}  // namespace detail

/// ∫_{region × M} g(x, φ) μ(dx) by the midpoint rule.
template <std::size_t Dim, class G>
double integrate(G&& g, const Configuration<Dim>& phi, const Box<Dim>& region, const MarkSet& marks,
                 const QuadratureSpec& spec = {}) {
  double total = 0.0;
  for_each_node<Dim>(region, marks, spec, [&](const MarkedPoint<Dim>& node, double w) {
    const double v = g(node, phi);
    if (!std::isfinite(v)) detail::non_finite_node<Dim>(node, v);
    total += w * v;
  });
  return total;
}

}  // namespace gibbsgof

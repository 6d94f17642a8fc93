#pragma once

#include "heatflow/errors.hpp"
#include "heatflow/types.hpp"

namespace heatflow {

/// Chebyshev-Gauss-Lobatto collocation machinery on [-1, 1], plus the scaling
/// onto a physical horizon t in [0, T] via tau = 2 t / T - 1.
struct ChebGrid {
  int p = 0;       // polynomial degree; the grid has p + 1 nodes
  double T = 1.0;  // physical horizon
  VecX nodes;      // ascending, nodes(0) = -1, nodes(p) = +1
  MatX D;          // spectral differentiation in tau
  MatX D2;         // D * D
  VecX weights;    // Clenshaw-Curtis quadrature weights on [-1, 1]

  /// d tau / d t; physical derivatives are time_scale() * D * values.
  double time_scale() const { return 2.0 / T; }
  VecX times() const { return (nodes.array() + 1.0).matrix() * (T / 2.0); }
};

/// Ascending Gauss-Lobatto nodes -cos(pi i / p). Throws InvalidDegree for p < 1.
VecX cheb_nodes(int p);

/// Barycentric differentiation matrix on the given nodes; the diagonal comes
/// from the negative-sum trick so constants differentiate to exactly zero.
MatX diff_matrix(const VecX& nodes);

/// Clenshaw-Curtis weights; integrates polynomials of degree <= p exactly.
VecX quadrature_weights(int p);

ChebGrid make_grid(int p, double T);

/// Barycentric evaluation at tau of the interpolant through (nodes, values).
/// values is (p+1) x m, one column per channel; returns the m interpolated
/// channels. Exact (bit-identical) at the nodes themselves. Throws
/// OutOfDomain beyond [-1 - 1e-12, 1 + 1e-12].
VecX interpolate(const VecX& nodes, const MatX& values, double tau);

}  // namespace heatflow

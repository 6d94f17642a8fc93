#include "heatflow/cheb.hpp"

#include <cmath>

namespace heatflow {

namespace {

/// Barycentric weights for Gauss-Lobatto nodes (up to an irrelevant common
/// scale): alternating signs, halved at both endpoints.
VecX barycentric_weights(int p) {
  VecX w(p + 1);
  for (int j = 0; j <= p; ++j) {
    w(j) = (j % 2 == 0 ? 1.0 : -1.0) * ((j == 0 || j == p) ? 0.5 : 1.0);
  }
  return w;
}

}  // namespace

VecX cheb_nodes(int p) {
  if (p < 1) throw InvalidDegree("grid degree must be >= 1, got " + std::to_string(p));
  VecX t(p + 1);
  for (int i = 0; i <= p; ++i) t(i) = -std::cos(M_PI * i / p);
  t(0) = -1.0;  // pin endpoints against cos() rounding
  t(p) = 1.0;
  return t;
}

MatX diff_matrix(const VecX& nodes) {
  int p = static_cast<int>(nodes.size()) - 1;
  if (p < 1) throw InvalidDegree("differentiation needs at least 2 nodes");
  VecX w = barycentric_weights(p);
  MatX d(p + 1, p + 1);
  for (int i = 0; i <= p; ++i) {
    double row_sum = 0.0;
    for (int j = 0; j <= p; ++j) {
      if (j == i) continue;
      d(i, j) = (w(j) / w(i)) / (nodes(i) - nodes(j));
      row_sum += d(i, j);
    }
    d(i, i) = -row_sum;
  }
  return d;
}

VecX quadrature_weights(int p) {
  if (p < 1) throw InvalidDegree("quadrature needs degree >= 1");
  VecX w(p + 1);
  if (p == 1) {
    w(0) = w(1) = 1.0;
    return w;
  }
  // Clenshaw-Curtis via the cosine expansion of 2/(1 - x^2) moments
  double end = (p % 2 == 0) ? 1.0 / (p * p - 1.0) : 1.0 / (p * p);
  w(0) = w(p) = end;
  for (int i = 1; i < p; ++i) {
    double theta = M_PI * i / p;
    double v = 1.0;
    for (int k = 1; k <= (p - 1) / 2; ++k) v -= 2.0 * std::cos(2.0 * k * theta) / (4.0 * k * k - 1.0);
    if (p % 2 == 0) v -= std::cos(p * theta) / (p * p - 1.0);
    w(i) = 2.0 * v / p;
  }
  return w;
}

ChebGrid make_grid(int p, double T) {
  if (T <= 0.0) throw std::invalid_argument("horizon T must be positive");
  ChebGrid g;
  g.p = p;
  g.T = T;
  g.nodes = cheb_nodes(p);
  g.D = diff_matrix(g.nodes);
  g.D2 = g.D * g.D;
  g.weights = quadrature_weights(p);
  return g;
}

VecX interpolate(const VecX& nodes, const MatX& values, double tau) {
  int p = static_cast<int>(nodes.size()) - 1;
  if (values.rows() != p + 1)
    throw std::invalid_argument("values must have one row per node");
  if (tau < -1.0 - 1e-12 || tau > 1.0 + 1e-12)
    throw OutOfDomain("interpolation point " + std::to_string(tau) + " outside [-1, 1]");

  // exact node hits bypass the weighted form entirely
  for (int j = 0; j <= p; ++j)
    if (tau == nodes(j)) return values.row(j);

  VecX w = barycentric_weights(p);
  VecX num = VecX::Zero(values.cols());
  double den = 0.0;
  for (int j = 0; j <= p; ++j) {
    double c = w(j) / (tau - nodes(j));
    num += c * values.row(j);
    den += c;
  }
  return num / den;
}

}  // namespace heatflow

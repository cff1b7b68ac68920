#include "ctdd/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace ctdd {

std::vector<QuadratureNode> gauss_legendre(int n, double lo, double hi) {
  if (n < 1) throw std::invalid_argument("quadrature order must be positive");
  if (!(hi > lo)) throw std::invalid_argument("quadrature interval empty");
  std::vector<QuadratureNode> nodes(n);
  const double mid = 0.5 * (hi + lo);
  const double half = 0.5 * (hi - lo);
  // Newton iteration on Legendre polynomials, symmetric roots.
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    nodes[i] = {mid - half * x, half * w};
    nodes[n - 1 - i] = {mid + half * x, half * w};
  }
  return nodes;
}

}  // namespace ctdd

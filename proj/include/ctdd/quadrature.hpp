#ifndef CTDD_QUADRATURE_HPP
#define CTDD_QUADRATURE_HPP

#include <vector>

namespace ctdd {

struct QuadratureNode {
  double t;
  double weight;
};

// Gauss-Legendre nodes and weights on [lo, hi]; weights sum to hi - lo.
std::vector<QuadratureNode> gauss_legendre(int n, double lo, double hi);

}  // namespace ctdd

#endif

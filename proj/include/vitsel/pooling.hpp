#pragma once

#include "vitsel/tensor.hpp"

namespace vitsel {

// Mean over the token axis: (N, L, E) -> (N, E). Accumulates in f64.
inline PooledFeatures pool_tokens(const TokenTensor& t) {
  const auto& s = t.shape();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.n), static_cast<Eigen::Index>(s.e));
  const auto data = t.data();
  const double inv_l = 1.0 / static_cast<double>(s.l);
  for (std::size_t n = 0; n < s.n; ++n) {
    const auto row = static_cast<Eigen::Index>(n);
    for (std::size_t l = 0; l < s.l; ++l) {
      const float* token = data.data() + (n * s.l + l) * s.e;
      for (std::size_t e = 0; e < s.e; ++e) out(row, static_cast<Eigen::Index>(e)) += static_cast<double>(token[e]);
    }
    out.row(row) *= inv_l;
  }
  return PooledFeatures(std::move(out));
}

}  // namespace vitsel

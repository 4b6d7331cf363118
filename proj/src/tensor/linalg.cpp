#include "saufno/tensor/linalg.hpp"

#include <Eigen/Core>

namespace saufno::linalg {

template <class R>
void gemm(bool transpose_a, bool transpose_b, std::int64_t m, std::int64_t n, std::int64_t k, R alpha, const R* a,
          const R* b, R beta, R* c) {
  using Mat = Eigen::Matrix<R, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const Mat>;
  Eigen::Map<Mat> cm(c, m, n);
  if (beta == R(0)) {
    cm.setZero();
  } else if (beta != R(1)) {
    cm *= beta;
  }
  if (m == 0 || n == 0 || k == 0) return;
  const CMap am(a, transpose_a ? k : m, transpose_a ? m : k);
  const CMap bm(b, transpose_b ? n : k, transpose_b ? k : n);
  if (!transpose_a && !transpose_b) {
    cm.noalias() += alpha * am * bm;
  } else if (transpose_a && !transpose_b) {
    cm.noalias() += alpha * am.transpose() * bm;
  } else if (!transpose_a && transpose_b) {
    cm.noalias() += alpha * am * bm.transpose();
  } else {
    cm.noalias() += alpha * am.transpose() * bm.transpose();
  }
}

template void gemm<float>(bool, bool, std::int64_t, std::int64_t, std::int64_t, float, const float*, const float*,
                          float, float*);
template void gemm<double>(bool, bool, std::int64_t, std::int64_t, std::int64_t, double, const double*, const double*,
                           double, double*);

}  // namespace saufno::linalg

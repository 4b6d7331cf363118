#pragma once

#include <cstdint>

namespace saufno::linalg {

// Row-major C[m,n] = beta*C + alpha * op(A) * op(B), where op(A) is m x k and
// op(B) is k x n. A is stored k x m when transpose_a, B is n x k when transpose_b.
template <class R>
void gemm(bool transpose_a, bool transpose_b, std::int64_t m, std::int64_t n, std::int64_t k, R alpha, const R* a,
          const R* b, R beta, R* c);

}  // namespace saufno::linalg

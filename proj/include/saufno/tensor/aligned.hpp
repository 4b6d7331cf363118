#pragma once

#include <cstddef>
#include <new>
#include <vector>

namespace saufno {

// Cache-line aligned allocation. Vectorized kernels peel scalar iterations
// up to the first aligned element; with malloc's 16-byte alignment that split,
// and with it the rounding of reductions, would change from run to run.
template <class T, std::size_t Align = 64>
struct AlignedAllocator {
  using value_type = T;
  template <class U>
  struct rebind {
    using other = AlignedAllocator<U, Align>;
  };

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U, Align>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(Align))); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, std::align_val_t(Align)); }

  template <class U>
  bool operator==(const AlignedAllocator<U, Align>&) const {
    return true;
  }
};

template <class T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

}  // namespace saufno

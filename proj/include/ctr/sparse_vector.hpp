#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "ctr/common.hpp"

namespace ctr {

// Sparse feature vector: entries sorted by index, indices unique and < dimension,
// no zero values stored.
struct SparseVector {
  struct Entry {
    uint32_t index;
    double value;
    bool operator==(const Entry&) const = default;
  };

  std::vector<Entry> entries;
  uint32_t dimension = 0;

  bool operator==(const SparseVector&) const = default;
};

// Throws DataError if the vector violates its invariants.
void validate(const SparseVector& v);

// Accumulates (index, value) contributions; duplicate indices sum, zeros are
// dropped at build time. Reusable between builds.
class SparseVectorBuilder {
 public:
  void add(uint32_t index, double value) { acc_.push_back({index, value}); }

  void clear() { acc_.clear(); }

  SparseVector build(uint32_t dimension) {
    std::sort(acc_.begin(), acc_.end(),
              [](const SparseVector::Entry& a, const SparseVector::Entry& b) { return a.index < b.index; });
    SparseVector out;
    out.dimension = dimension;
    out.entries.reserve(acc_.size());
    for (size_t i = 0; i < acc_.size();) {
      const uint32_t idx = acc_[i].index;
      double sum = 0.0;
      for (; i < acc_.size() && acc_[i].index == idx; ++i) sum += acc_[i].value;
      if (idx >= dimension) throw DataError("sparse vector index out of range");
      if (sum != 0.0) out.entries.push_back({idx, sum});
    }
    acc_.clear();
    return out;
  }

 private:
  std::vector<SparseVector::Entry> acc_;
};

}  // namespace ctr

#include "ctr/sparse_vector.hpp"

#include <cmath>
#include <string>

namespace ctr {

void validate(const SparseVector& v) {
  if (v.dimension == 0) throw DataError("sparse vector: zero dimension");
  uint32_t prev = 0;
  bool first = true;
  for (const auto& e : v.entries) {
    if (!first && e.index <= prev) throw DataError("sparse vector: indices not strictly increasing");
    if (e.index >= v.dimension) {
      throw DataError("sparse vector: index " + std::to_string(e.index) + " >= dimension " +
                      std::to_string(v.dimension));
    }
    if (e.value == 0.0) throw DataError("sparse vector: stored zero value");
    if (!std::isfinite(e.value)) throw DataError("sparse vector: non-finite value");
    prev = e.index;
    first = false;
  }
}

}  // namespace ctr

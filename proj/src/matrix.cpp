#include "mhub/matrix.hpp"

#include <algorithm>
#include <numeric>

#include "mhub/rng.hpp"

namespace mhub {

FloatMatrix subsample_rows(const FloatMatrix& x, std::size_t max_rows, std::uint64_t seed) {
  if (max_rows == 0 || x.rows() <= max_rows) return x;
  std::vector<std::size_t> idx(x.rows());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < max_rows; ++i) std::swap(idx[i], idx[i + rng.uniform_index(x.rows() - i)]);
  idx.resize(max_rows);
  std::sort(idx.begin(), idx.end());
  FloatMatrix out(max_rows, x.cols());
  for (std::size_t i = 0; i < max_rows; ++i) std::copy_n(x.row(idx[i]).data(), x.cols(), out.row(i).data());
  return out;
}

}  // namespace mhub

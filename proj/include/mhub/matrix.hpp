#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mhub {

// Dense row-major float32 matrix. Rows are vectors (frames, centroids, ...).
class FloatMatrix {
 public:
  FloatMatrix() = default;
  FloatMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}
  FloatMatrix(std::size_t rows, std::size_t cols, std::vector<float> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    assert(data_.size() == rows_ * cols_);
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  std::span<float> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const float> row(std::size_t i) const noexcept { return {data_.data() + i * cols_, cols_}; }

  float& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  float operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }
  std::span<const float> values() const noexcept { return data_; }
  std::vector<float>& storage() noexcept { return data_; }
  const std::vector<float>& storage() const noexcept { return data_; }

  friend bool operator==(const FloatMatrix&, const FloatMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

// At most max_rows rows chosen uniformly without replacement (seeded), in
// their original order. max_rows == 0 or >= rows() returns a copy.
FloatMatrix subsample_rows(const FloatMatrix& x, std::size_t max_rows, std::uint64_t seed);

}  // namespace mhub

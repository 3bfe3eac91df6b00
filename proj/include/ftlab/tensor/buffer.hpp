// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <memory>
#include <span>

#include "ftlab/tensor/memory.hpp"

namespace ftlab {

/// Zero-initialized, owning array of doubles whose size is charged to the
/// thread's memory accounting for as long as it lives.
class Buffer {
 public:
  Buffer() = default;
  explicit Buffer(std::size_t n) : data_(n ? new double[n]() : nullptr), size_(n) {
    memory::note_alloc(bytes());
  }
  explicit Buffer(std::span<const double> values) : Buffer(values.size()) {
    std::copy(values.begin(), values.end(), data_.get());
  }
  Buffer(const Buffer& other) : Buffer(other.span()) {}
  Buffer(Buffer&& other) noexcept : data_(std::move(other.data_)), size_(other.size_) {
    other.size_ = 0;
  }
  Buffer& operator=(const Buffer& other) {
    if (this != &other) *this = Buffer(other);
    return *this;
  }
  Buffer& operator=(Buffer&& other) noexcept {
    if (this != &other) {
      release();
      data_ = std::move(other.data_);
      size_ = other.size_;
      other.size_ = 0;
    }
    return *this;
  }
  ~Buffer() { release(); }

  double* data() noexcept { return data_.get(); }
  const double* data() const noexcept { return data_.get(); }
  std::size_t size() const noexcept { return size_; }
  std::size_t bytes() const noexcept { return size_ * sizeof(double); }
  bool empty() const noexcept { return size_ == 0; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<double> span() noexcept { return {data_.get(), size_}; }
  std::span<const double> span() const noexcept { return {data_.get(), size_}; }

  void fill(double value) { std::fill_n(data_.get(), size_, value); }

  void release() noexcept {
    if (size_) memory::note_free(bytes());
    data_.reset();
    size_ = 0;
  }

 private:
  std::unique_ptr<double[]> data_;
  std::size_t size_ = 0;
};

}  // namespace ftlab

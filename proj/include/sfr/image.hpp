#pragma once

#include "sfr/common.hpp"

#include <cassert>
#include <vector>

namespace sfr {

// Dense row-major image buffer.
template <class T>
class Image {
 public:
  Image() = default;
  Image(int width, int height) : w_(width), h_(height), data_(size_t(width) * height) {}
  Image(int width, int height, const T& fill)
      : w_(width), h_(height), data_(size_t(width) * height, fill) {}

  int width() const { return w_; }
  int height() const { return h_; }
  bool empty() const { return data_.empty(); }
  size_t size() const { return data_.size(); }

  T& at(int x, int y) {
    assert(contains(x, y));
    return data_[size_t(y) * w_ + x];
  }
  const T& at(int x, int y) const {
    assert(contains(x, y));
    return data_[size_t(y) * w_ + x];
  }
  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  bool contains(int x, int y) const { return x >= 0 && x < w_ && y >= 0 && y < h_; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  void fill(const T& v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_size(int w, int h) const { return w_ == w && h_ == h; }

 private:
  int w_ = 0, h_ = 0;
  std::vector<T> data_;
};

using ImageF = Image<float>;
using ImageD = Image<double>;
using ImageU8 = Image<std::uint8_t>;
using ImageRgb8 = Image<Rgb8>;
using ImageV3 = Image<Vec3>;

}  // namespace sfr

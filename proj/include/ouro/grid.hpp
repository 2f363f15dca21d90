#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ouro {

// Error taxonomy. ConfigError carries the offending configuration key so the
// CLI can report it; everything else maps to a runtime failure.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  ConfigError(std::string key, const std::string& what)
      : Error(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

struct DimensionError : Error { using Error::Error; };
struct TimestepError : Error { using Error::Error; };
struct QueueInvariantError : Error { using Error::Error; };
struct StateError : Error { using Error::Error; };
struct DegenerateInputError : Error { using Error::Error; };
struct InsufficientDataError : Error { using Error::Error; };

struct NumericalError : Error {
  NumericalError(long step, const std::string& what)
      : Error("step " + std::to_string(step) + ": " + what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

struct Shape {
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(c) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return "[" + std::to_string(s.c) + "," + std::to_string(s.h) + "," + std::to_string(s.w) + "]";
}

// Dense real grid in [channel, row, col] order.
class Grid {
 public:
  Grid() = default;
  explicit Grid(Shape shape, double fill = 0.0) : shape_(shape), data_(shape.size(), fill) {
    if (shape.c < 1 || shape.h < 1 || shape.w < 1) {
      throw DimensionError("grid dimensions must be positive, got " + to_string(shape));
    }
  }
  Grid(Shape shape, std::vector<double> values) : shape_(shape), data_(std::move(values)) {
    if (data_.size() != shape_.size()) {
      throw DimensionError("grid of shape " + to_string(shape_) + " needs " +
                           std::to_string(shape_.size()) + " values, got " +
                           std::to_string(data_.size()));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  int channels() const noexcept { return shape_.c; }
  int height() const noexcept { return shape_.h; }
  int width() const noexcept { return shape_.w; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(int ch, int y, int x) { return data_[index(ch, y, x)]; }
  double operator()(int ch, int y, int x) const { return data_[index(ch, y, x)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  std::span<double> channel(int ch) {
    return std::span<double>(data_).subspan(plane() * static_cast<std::size_t>(ch), plane());
  }
  std::span<const double> channel(int ch) const {
    return std::span<const double>(data_).subspan(plane() * static_cast<std::size_t>(ch), plane());
  }

  bool all_finite() const noexcept {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  Grid& operator+=(const Grid& o) {
    require_same_shape(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Grid& operator-=(const Grid& o) {
    require_same_shape(o, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Grid& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }
  friend Grid operator+(Grid a, const Grid& b) { return a += b; }
  friend Grid operator-(Grid a, const Grid& b) { return a -= b; }
  friend Grid operator*(Grid a, double s) { return a *= s; }
  friend Grid operator*(double s, Grid a) { return a *= s; }
  friend bool operator==(const Grid&, const Grid&) = default;

  void require_same_shape(const Grid& o, const char* op) const {
    if (shape_ != o.shape_) {
      throw DimensionError(std::string(op) + ": shape mismatch " + to_string(shape_) + " vs " +
                           to_string(o.shape_));
    }
  }

 private:
  std::size_t plane() const noexcept {
    return static_cast<std::size_t>(shape_.h) * static_cast<std::size_t>(shape_.w);
  }
  std::size_t index(int ch, int y, int x) const noexcept {
    return (static_cast<std::size_t>(ch) * shape_.h + y) * shape_.w + x;
  }

  Shape shape_{};
  std::vector<double> data_;
};

// a*x + b*y, elementwise.
inline Grid axpby(double a, const Grid& x, double b, const Grid& y) {
  x.require_same_shape(y, "axpby");
  Grid out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * y[i];
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

// Binary mask over a spatial grid, stored row-major.
struct Mask {
  int h = 0;
  int w = 0;
  std::vector<unsigned char> bits;

  Mask() = default;
  Mask(int rows, int cols, unsigned char fill = 0)
      : h(rows), w(cols), bits(static_cast<std::size_t>(rows) * cols, fill) {}

  unsigned char& operator()(int y, int x) { return bits[static_cast<std::size_t>(y) * w + x]; }
  unsigned char operator()(int y, int x) const { return bits[static_cast<std::size_t>(y) * w + x]; }

  std::size_t popcount() const noexcept {
    std::size_t n = 0;
    for (auto b : bits) n += b ? 1 : 0;
    return n;
  }
  bool empty() const noexcept { return popcount() == 0; }
  friend bool operator==(const Mask&, const Mask&) = default;
};

}  // namespace ouro

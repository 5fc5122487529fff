#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace oscisep {

using cplx = std::complex<double>;

/// Thrown when two block-structured objects disagree on their layout.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Block dimensions (d_0, ..., d_n). Block 0 is the slow block.
class BlockLayout {
 public:
  BlockLayout() = default;
  explicit BlockLayout(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) throw DimensionError("BlockLayout: at least the slow block is required");
    offsets_.resize(dims_.size() + 1, 0);
    for (std::size_t j = 0; j < dims_.size(); ++j) {
      if (dims_[j] == 0) throw DimensionError("BlockLayout: block dimensions must be >= 1");
      offsets_[j + 1] = offsets_[j] + dims_[j];
    }
  }

  /// Layout with n fast blocks, all of dimension 1.
  static BlockLayout scalar_blocks(std::size_t n) { return BlockLayout(std::vector<std::size_t>(n + 1, 1)); }

  std::size_t num_blocks() const { return dims_.size(); }
  std::size_t num_fast() const { return dims_.empty() ? 0 : dims_.size() - 1; }
  std::size_t dim(std::size_t j) const { return dims_.at(j); }
  std::size_t offset(std::size_t j) const { return offsets_.at(j); }
  std::size_t size() const { return offsets_.empty() ? 0 : offsets_.back(); }
  const std::vector<std::size_t>& dims() const { return dims_; }

  bool operator==(const BlockLayout& other) const { return dims_ == other.dims_; }

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> offsets_;
};

template <class T>
class BasicBlockVector {
 public:
  BasicBlockVector() = default;
  explicit BasicBlockVector(BlockLayout layout) : layout_(std::move(layout)), data_(layout_.size(), T{}) {}
  BasicBlockVector(BlockLayout layout, std::vector<T> data) : layout_(std::move(layout)), data_(std::move(data)) {
    if (data_.size() != layout_.size())
      throw DimensionError("BlockVector: " + std::to_string(data_.size()) + " entries for a layout of size " +
                           std::to_string(layout_.size()));
  }

  const BlockLayout& layout() const { return layout_; }
  std::size_t num_blocks() const { return layout_.num_blocks(); }
  std::size_t size() const { return data_.size(); }

  std::span<T> block(std::size_t j) { return {data_.data() + layout_.offset(j), layout_.dim(j)}; }
  std::span<const T> block(std::size_t j) const { return {data_.data() + layout_.offset(j), layout_.dim(j)}; }

  std::span<T> flat() { return data_; }
  std::span<const T> flat() const { return data_; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  double block_norm(std::size_t j) const {
    double s = 0.0;
    for (const T& x : block(j)) s += std::norm(x);
    return std::sqrt(s);
  }

  bool all_finite() const {
    for (const T& x : data_) {
      if constexpr (std::is_same_v<T, double>) {
        if (!std::isfinite(x)) return false;
      } else {
        if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) return false;
      }
    }
    return true;
  }

  void require_layout(const BlockLayout& expected, const char* what) const {
    if (!(layout_ == expected)) throw DimensionError(std::string(what) + ": block structure does not match the system");
  }

 private:
  BlockLayout layout_;
  std::vector<T> data_;
};

using BlockVector = BasicBlockVector<double>;
using ComplexBlockVector = BasicBlockVector<cplx>;

/// Momenta and positions of the full system.
struct PhaseState {
  BlockVector p;
  BlockVector q;
};

}  // namespace oscisep

#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace adascreen {

using Code = std::int16_t;

/// Column-major matrix of integer response codes. Columns are contiguous so a
/// per-item scan touches one block of memory.
class CodeMatrix {
 public:
  CodeMatrix() = default;
  CodeMatrix(std::size_t rows, std::size_t cols, Code fill = 0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  Code& operator()(std::size_t r, std::size_t c) {
    assert(r < rows_ && c < cols_);
    return data_[c * rows_ + r];
  }
  Code operator()(std::size_t r, std::size_t c) const {
    assert(r < rows_ && c < cols_);
    return data_[c * rows_ + r];
  }

  std::span<const Code> column(std::size_t c) const { return {data_.data() + c * rows_, rows_}; }
  std::span<Code> column(std::size_t c) { return {data_.data() + c * rows_, rows_}; }

  std::vector<int> row(std::size_t r) const {
    std::vector<int> out(cols_);
    for (std::size_t c = 0; c < cols_; ++c) out[c] = (*this)(r, c);
    return out;
  }

  /// Copies `src` into rows [offset, offset + src.rows()).
  void paste_rows(std::size_t offset, const CodeMatrix& src) {
    assert(src.cols_ == cols_ && offset + src.rows_ <= rows_);
    for (std::size_t c = 0; c < cols_; ++c) {
      auto from = src.column(c);
      std::copy(from.begin(), from.end(), data_.begin() + static_cast<std::ptrdiff_t>(c * rows_ + offset));
    }
  }

  const std::vector<Code>& raw() const noexcept { return data_; }
  std::vector<Code>& raw() noexcept { return data_; }

  friend bool operator==(const CodeMatrix&, const CodeMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Code> data_;
};

/// Lightweight indexable view of one matrix row, usable wherever a response
/// vector is expected (x[j] yields the code of column j).
class RowView {
 public:
  RowView(const CodeMatrix& m, std::size_t r) : m_(&m), r_(r) {}
  int operator[](std::size_t c) const { return (*m_)(r_, c); }
  std::size_t size() const { return m_->cols(); }

 private:
  const CodeMatrix* m_;
  std::size_t r_;
};

}  // namespace adascreen

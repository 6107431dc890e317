#pragma once

#include <cstdint>
#include <vector>

#include "arc/error.hpp"

namespace arc {

using Color = std::uint8_t;

constexpr int kNumColors = 10;
constexpr int kMaxGridDim = 30;

// Validated 2-D board of color identifiers. Cells are stored row-major in
// one flat buffer; immutable after construction, so grids can be shared
// freely across threads.
class Grid {
 public:
  // Validates dimensions and color range; throws Error on violation.
  Grid(int height, int width, std::vector<Color> cells);

  static Grid filled(int height, int width, Color color);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  Color at(int row, int col) const { return cells_[static_cast<std::size_t>(row) * width_ + col]; }
  const std::vector<Color>& cells() const noexcept { return cells_; }
  std::size_t size() const noexcept { return cells_.size(); }

  std::vector<std::vector<int>> to_rows() const;

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.cells_ == b.cells_;
  }
  friend bool operator!=(const Grid& a, const Grid& b) { return !(a == b); }

 private:
  int height_;
  int width_;
  std::vector<Color> cells_;
};

struct BoolMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;  // row-major, 0/1

  bool at(int row, int col) const { return bits[static_cast<std::size_t>(row) * width + col] != 0; }
  std::size_t popcount() const;
};

// Strict construction from raw nested rows, as parsed from task JSON.
// Errors: EmptyGrid, RaggedRows, ColorOutOfRange, OversizeGrid.
Grid validate_grid(const std::vector<std::vector<int>>& raw);

// Distinct colors present, ascending.
std::vector<Color> palette(const Grid& g);

// Cell-wise inequality mask; throws ShapeMismatch when dimensions differ.
BoolMask diff_mask(const Grid& a, const Grid& b);

}  // namespace arc

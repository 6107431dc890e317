#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include "arc/grid.hpp"
#include "arc/task.hpp"

namespace arc {

// The 8 rigid symmetries of the square. Rot90 is clockwise: input cell
// (r,c) maps to output cell (c, H-1-r).
enum class GeometricOp : std::uint8_t {
  Identity = 0,
  Rot90,
  Rot180,
  Rot270,
  FlipH,
  FlipV,
  Transpose,
  AntiTranspose,
};

constexpr int kNumGeometricOps = 8;

const char* geometric_op_name(GeometricOp op);

// Result of applying `b` first, then `a` (the group product a∘b).
GeometricOp compose_geo(GeometricOp a, GeometricOp b);
GeometricOp invert_geo(GeometricOp op);
// True for ops that swap (height, width).
bool swaps_dims(GeometricOp op);

Grid apply_geo(GeometricOp op, const Grid& g);

// Bijective relabeling of the 10 color identifiers.
struct ColorMap {
  std::array<Color, kNumColors> map;

  // Validates that `table` is a permutation of 0..9.
  static ColorMap from_table(const std::array<Color, kNumColors>& table);
  static ColorMap identity();

  Color operator()(Color c) const { return map[c]; }
  ColorMap inverse() const;
  // (a.then_after(b))(c) == a(b(c))
  ColorMap compose(const ColorMap& inner) const;
  bool is_identity() const;

  friend auto operator<=>(const ColorMap&, const ColorMap&) = default;
};

// Reversible task transformation: geometric op applied first, then the
// color map.
struct View {
  GeometricOp geo = GeometricOp::Identity;
  ColorMap colors = ColorMap::identity();

  static View identity();
  bool is_identity() const;
  std::string describe() const;

  friend auto operator<=>(const View&, const View&) = default;
};

Grid apply_view(const View& v, const Grid& g);
View invert_view(const View& v);
// apply_view(compose(a,b), g) == apply_view(a, apply_view(b, g))
View compose(const View& a, const View& b);

// Transforms every grid of the task (train pairs, test inputs, and test
// outputs when present); pair structure preserved.
TaskRecord apply_view_to_task(const View& v, const TaskRecord& t);

// Deterministic bounded enumeration for augmentation. Always returns the
// identity view first; geometric tags cycle round-robin; color maps are
// sampled from `seed` and only permute colors in the task's visible
// palette (train grids and test inputs). With fix_background, color 0 is
// never remapped. Returns between 1 and `budget` distinct views.
std::vector<View> enumerate_views(const TaskRecord& t, int budget, std::uint64_t seed,
                                  bool fix_background = true);

}  // namespace arc

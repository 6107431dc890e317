#include "arc/views.hpp"

#include <algorithm>
#include <set>

#include "arc/rng.hpp"

namespace arc {
namespace {

constexpr GeometricOp kAllGeoOps[kNumGeometricOps] = {
    GeometricOp::Identity,  GeometricOp::Rot90,     GeometricOp::Rot180,
    GeometricOp::Rot270,    GeometricOp::FlipH,     GeometricOp::FlipV,
    GeometricOp::Transpose, GeometricOp::AntiTranspose,
};

// The 8 images of an asymmetric 2x3 probe are pairwise distinct, so the
// composition table can be derived by probing instead of hand-derivation.
Grid probe_grid() { return Grid(2, 3, {0, 1, 2, 3, 4, 5}); }

struct GeoTables {
  GeometricOp compose[kNumGeometricOps][kNumGeometricOps];
  GeometricOp inverse[kNumGeometricOps];

  GeoTables() {
    const Grid probe = probe_grid();
    for (const GeometricOp a : kAllGeoOps) {
      for (const GeometricOp b : kAllGeoOps) {
        const Grid ab = apply_geo(a, apply_geo(b, probe));
        for (const GeometricOp t : kAllGeoOps) {
          if (apply_geo(t, probe) == ab) {
            compose[int(a)][int(b)] = t;
            break;
          }
        }
      }
    }
    for (const GeometricOp a : kAllGeoOps) {
      for (const GeometricOp b : kAllGeoOps) {
        if (compose[int(a)][int(b)] == GeometricOp::Identity) inverse[int(a)] = b;
      }
    }
  }
};

const GeoTables& geo_tables() {
  static const GeoTables tables;
  return tables;
}

}  // namespace

const char* geometric_op_name(GeometricOp op) {
  switch (op) {
    case GeometricOp::Identity: return "Identity";
    case GeometricOp::Rot90: return "Rot90";
    case GeometricOp::Rot180: return "Rot180";
    case GeometricOp::Rot270: return "Rot270";
    case GeometricOp::FlipH: return "FlipH";
    case GeometricOp::FlipV: return "FlipV";
    case GeometricOp::Transpose: return "Transpose";
    case GeometricOp::AntiTranspose: return "AntiTranspose";
  }
  return "?";
}

bool swaps_dims(GeometricOp op) {
  switch (op) {
    case GeometricOp::Rot90:
    case GeometricOp::Rot270:
    case GeometricOp::Transpose:
    case GeometricOp::AntiTranspose:
      return true;
    default:
      return false;
  }
}

Grid apply_geo(GeometricOp op, const Grid& g) {
  const int h = g.height();
  const int w = g.width();
  const int oh = swaps_dims(op) ? w : h;
  const int ow = swaps_dims(op) ? h : w;
  std::vector<Color> cells(static_cast<std::size_t>(oh) * ow);
  for (int r = 0; r < oh; ++r) {
    for (int c = 0; c < ow; ++c) {
      Color v;
      switch (op) {
        case GeometricOp::Identity: v = g.at(r, c); break;
        case GeometricOp::Rot90: v = g.at(h - 1 - c, r); break;
        case GeometricOp::Rot180: v = g.at(h - 1 - r, w - 1 - c); break;
        case GeometricOp::Rot270: v = g.at(c, w - 1 - r); break;
        case GeometricOp::FlipH: v = g.at(r, w - 1 - c); break;
        case GeometricOp::FlipV: v = g.at(h - 1 - r, c); break;
        case GeometricOp::Transpose: v = g.at(c, r); break;
        case GeometricOp::AntiTranspose: v = g.at(h - 1 - c, w - 1 - r); break;
        default: v = 0; break;
      }
      cells[static_cast<std::size_t>(r) * ow + c] = v;
    }
  }
  return Grid(oh, ow, std::move(cells));
}

GeometricOp compose_geo(GeometricOp a, GeometricOp b) {
  return geo_tables().compose[int(a)][int(b)];
}

GeometricOp invert_geo(GeometricOp op) { return geo_tables().inverse[int(op)]; }

ColorMap ColorMap::from_table(const std::array<Color, kNumColors>& table) {
  bool seen[kNumColors] = {};
  for (const Color c : table) {
    if (c >= kNumColors || seen[c]) {
      raise(ErrorCode::ColorOutOfRange, "color map is not a permutation of 0..9");
    }
    seen[c] = true;
  }
  ColorMap m;
  m.map = table;
  return m;
}

ColorMap ColorMap::identity() {
  ColorMap m;
  for (int i = 0; i < kNumColors; ++i) m.map[i] = static_cast<Color>(i);
  return m;
}

ColorMap ColorMap::inverse() const {
  ColorMap inv;
  for (int i = 0; i < kNumColors; ++i) inv.map[map[i]] = static_cast<Color>(i);
  return inv;
}

ColorMap ColorMap::compose(const ColorMap& inner) const {
  ColorMap out;
  for (int i = 0; i < kNumColors; ++i) out.map[i] = map[inner.map[i]];
  return out;
}

bool ColorMap::is_identity() const {
  for (int i = 0; i < kNumColors; ++i) {
    if (map[i] != i) return false;
  }
  return true;
}

View View::identity() { return View{GeometricOp::Identity, ColorMap::identity()}; }

bool View::is_identity() const {
  return geo == GeometricOp::Identity && colors.is_identity();
}

std::string View::describe() const {
  std::string s = geometric_op_name(geo);
  if (colors.is_identity()) {
    s += "/id";
  } else {
    s += '/';
    for (int i = 0; i < kNumColors; ++i) s += static_cast<char>('0' + colors.map[i]);
  }
  return s;
}

Grid apply_view(const View& v, const Grid& g) {
  Grid moved = apply_geo(v.geo, g);
  std::vector<Color> cells(moved.cells());
  for (Color& c : cells) c = v.colors(c);
  return Grid(moved.height(), moved.width(), std::move(cells));
}

// Positions and values transform independently, so the components invert
// and compose pointwise.
View invert_view(const View& v) {
  return View{invert_geo(v.geo), v.colors.inverse()};
}

View compose(const View& a, const View& b) {
  return View{compose_geo(a.geo, b.geo), a.colors.compose(b.colors)};
}

TaskRecord apply_view_to_task(const View& v, const TaskRecord& t) {
  TaskRecord out;
  out.id = t.id;
  out.train.reserve(t.train.size());
  for (const GridPair& p : t.train) {
    out.train.push_back({apply_view(v, p.input), apply_view(v, p.output)});
  }
  out.test.reserve(t.test.size());
  for (const TestItem& item : t.test) {
    TestItem ti{apply_view(v, item.input), std::nullopt};
    if (item.output) ti.output = apply_view(v, *item.output);
    out.test.push_back(std::move(ti));
  }
  return out;
}

std::vector<View> enumerate_views(const TaskRecord& t, int budget, std::uint64_t seed,
                                  bool fix_background) {
  if (budget < 1) raise(ErrorCode::InvalidConfig, "view budget must be >= 1");

  // Visible palette union: demonstration grids plus test inputs. Hidden
  // test outputs are excluded so view enumeration is identical whether or
  // not solutions were joined.
  bool present[kNumColors] = {};
  for (const GridPair& p : t.train) {
    for (const Color c : p.input.cells()) present[c] = true;
    for (const Color c : p.output.cells()) present[c] = true;
  }
  for (const TestItem& item : t.test) {
    for (const Color c : item.input.cells()) present[c] = true;
  }
  std::vector<Color> permutable;
  for (int c = 0; c < kNumColors; ++c) {
    if (present[c] && !(fix_background && c == 0)) permutable.push_back(static_cast<Color>(c));
  }

  Rng rng(seed);
  std::vector<View> out;
  std::set<View> seen;
  out.push_back(View::identity());
  seen.insert(out.back());

  constexpr int kMaxAttempts = 200;
  for (int i = 1; static_cast<int>(out.size()) < budget; ++i) {
    const GeometricOp geo = kAllGeoOps[i % kNumGeometricOps];
    bool found = false;
    for (int attempt = 0; attempt < kMaxAttempts && !found; ++attempt) {
      ColorMap cm = ColorMap::identity();
      std::vector<Color> values = permutable;
      rng.shuffle(values.data(), values.size());
      for (std::size_t k = 0; k < permutable.size(); ++k) cm.map[permutable[k]] = values[k];
      const View v{geo, cm};
      if (seen.insert(v).second) {
        out.push_back(v);
        found = true;
      }
    }
    // The view space for this tag is exhausted; with round-robin tags the
    // remaining tags saturate within the same cycle, so stop here.
    if (!found) break;
  }
  return out;
}

}  // namespace arc

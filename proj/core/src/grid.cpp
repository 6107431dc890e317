#include "arc/grid.hpp"

#include <string>

namespace arc {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::RaggedRows: return "RaggedRows";
    case ErrorCode::ColorOutOfRange: return "ColorOutOfRange";
    case ErrorCode::OversizeGrid: return "OversizeGrid";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BadHeader: return "BadHeader";
    case ErrorCode::RowLengthMismatch: return "RowLengthMismatch";
    case ErrorCode::RowCountMismatch: return "RowCountMismatch";
    case ErrorCode::UnexpectedToken: return "UnexpectedToken";
    case ErrorCode::TrailingTokens: return "TrailingTokens";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::InconsistentBounds: return "InconsistentBounds";
    case ErrorCode::ContextOverflow: return "ContextOverflow";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ContextExceeded: return "ContextExceeded";
    case ErrorCode::UnknownToken: return "UnknownToken";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::NoTrainableEpisodes: return "NoTrainableEpisodes";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::UnknownTarget: return "UnknownTarget";
    case ErrorCode::EmptyTTTSet: return "EmptyTTTSet";
    case ErrorCode::NoCandidates: return "NoCandidates";
    case ErrorCode::AllViewsSkipped: return "AllViewsSkipped";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::GridValidationError: return "GridValidationError";
    case ErrorCode::MissingSolution: return "MissingSolution";
    case ErrorCode::NoStrategies: return "NoStrategies";
    case ErrorCode::IoError: return "IoError";
  }
  return "UnknownError";
}

Grid::Grid(int height, int width, std::vector<Color> cells)
    : height_(height), width_(width), cells_(std::move(cells)) {
  if (height_ < 1 || width_ < 1) {
    raise(ErrorCode::EmptyGrid, "grid dimensions must be at least 1x1, got " +
                                    std::to_string(height_) + "x" + std::to_string(width_));
  }
  if (height_ > kMaxGridDim || width_ > kMaxGridDim) {
    raise(ErrorCode::OversizeGrid, "grid dimensions exceed " + std::to_string(kMaxGridDim) +
                                       ": " + std::to_string(height_) + "x" + std::to_string(width_));
  }
  if (cells_.size() != static_cast<std::size_t>(height_) * width_) {
    raise(ErrorCode::ShapeMismatch, "cell count " + std::to_string(cells_.size()) +
                                        " does not match " + std::to_string(height_) + "x" +
                                        std::to_string(width_));
  }
  for (const Color c : cells_) {
    if (c >= kNumColors) {
      raise(ErrorCode::ColorOutOfRange, "color " + std::to_string(int(c)) + " out of [0,9]");
    }
  }
}

Grid Grid::filled(int height, int width, Color color) {
  return Grid(height, width,
              std::vector<Color>(static_cast<std::size_t>(height) * width, color));
}

std::vector<std::vector<int>> Grid::to_rows() const {
  std::vector<std::vector<int>> rows(height_);
  for (int r = 0; r < height_; ++r) {
    rows[r].reserve(width_);
    for (int c = 0; c < width_; ++c) rows[r].push_back(at(r, c));
  }
  return rows;
}

std::size_t BoolMask::popcount() const {
  std::size_t n = 0;
  for (const std::uint8_t b : bits) n += b;
  return n;
}

Grid validate_grid(const std::vector<std::vector<int>>& raw) {
  if (raw.empty()) raise(ErrorCode::EmptyGrid, "grid has zero rows");
  const std::size_t width = raw[0].size();
  if (width == 0) raise(ErrorCode::EmptyGrid, "grid has a zero-length row");
  if (raw.size() > kMaxGridDim || width > kMaxGridDim) {
    raise(ErrorCode::OversizeGrid, "grid dimensions " + std::to_string(raw.size()) + "x" +
                                       std::to_string(width) + " exceed " +
                                       std::to_string(kMaxGridDim));
  }
  std::vector<Color> cells;
  cells.reserve(raw.size() * width);
  for (std::size_t r = 0; r < raw.size(); ++r) {
    if (raw[r].size() != width) {
      raise(ErrorCode::RaggedRows, "row " + std::to_string(r) + " has length " +
                                       std::to_string(raw[r].size()) + ", expected " +
                                       std::to_string(width));
    }
    for (std::size_t c = 0; c < width; ++c) {
      const int v = raw[r][c];
      if (v < 0 || v >= kNumColors) {
        raise(ErrorCode::ColorOutOfRange, "value " + std::to_string(v) + " at (" +
                                              std::to_string(r) + "," + std::to_string(c) +
                                              ") out of [0,9]");
      }
      cells.push_back(static_cast<Color>(v));
    }
  }
  return Grid(static_cast<int>(raw.size()), static_cast<int>(width), std::move(cells));
}

std::vector<Color> palette(const Grid& g) {
  bool seen[kNumColors] = {};
  for (const Color c : g.cells()) seen[c] = true;
  std::vector<Color> out;
  for (int c = 0; c < kNumColors; ++c) {
    if (seen[c]) out.push_back(static_cast<Color>(c));
  }
  return out;
}

BoolMask diff_mask(const Grid& a, const Grid& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    raise(ErrorCode::ShapeMismatch, "diff_mask on " + std::to_string(a.height()) + "x" +
                                        std::to_string(a.width()) + " vs " +
                                        std::to_string(b.height()) + "x" +
                                        std::to_string(b.width()));
  }
  BoolMask m;
  m.height = a.height();
  m.width = a.width();
  m.bits.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    m.bits[i] = a.cells()[i] != b.cells()[i] ? 1 : 0;
  }
  return m;
}

}  // namespace arc

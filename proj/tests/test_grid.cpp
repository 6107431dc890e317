#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "arc/grid.hpp"
#include "arc/rng.hpp"
#include "support/synthetic.hpp"

using namespace arc;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an arc::Error");
  return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("validate_grid copies raw rows") {
  const Grid g = validate_grid({{1, 0}, {0, 2}});
  CHECK(g.height() == 2);
  CHECK(g.width() == 2);
  CHECK(g.cells() == std::vector<Color>{1, 0, 0, 2});
  CHECK(g.to_rows() == std::vector<std::vector<int>>{{1, 0}, {0, 2}});
}

TEST_CASE("validate_grid rejects malformed input") {
  CHECK(code_of([] { validate_grid({{1, 2}, {3}}); }) == ErrorCode::RaggedRows);
  CHECK(code_of([] { validate_grid({{10}}); }) == ErrorCode::ColorOutOfRange);
  CHECK(code_of([] { validate_grid({{-1}}); }) == ErrorCode::ColorOutOfRange);
  CHECK(code_of([] { validate_grid({}); }) == ErrorCode::EmptyGrid);
  CHECK(code_of([] { validate_grid({{}, {}}); }) == ErrorCode::EmptyGrid);
  const std::vector<std::vector<int>> tall(31, std::vector<int>{0});
  CHECK(code_of([&] { validate_grid(tall); }) == ErrorCode::OversizeGrid);
  const std::vector<std::vector<int>> wide{std::vector<int>(31, 0)};
  CHECK(code_of([&] { validate_grid(wide); }) == ErrorCode::OversizeGrid);
}

TEST_CASE("palette is the ascending set of distinct colors") {
  CHECK(palette(validate_grid({{1, 0}, {0, 2}})) == std::vector<Color>{0, 1, 2});
  CHECK(palette(validate_grid({{5}})) == std::vector<Color>{5});
  CHECK(palette(Grid::filled(30, 30, 7)) == std::vector<Color>{7});
}

TEST_CASE("diff_mask marks differing cells") {
  const Grid a = validate_grid({{3, 3}});
  const BoolMask same = diff_mask(a, a);
  CHECK(same.popcount() == 0);
  CHECK_FALSE(same.at(0, 0));
  CHECK_FALSE(same.at(0, 1));

  const BoolMask one = diff_mask(validate_grid({{1}}), validate_grid({{2}}));
  CHECK(one.popcount() == 1);
  CHECK(one.at(0, 0));

  const Grid b22 = Grid::filled(2, 2, 0);
  const Grid b23 = Grid::filled(2, 3, 0);
  CHECK(code_of([&] { diff_mask(b22, b23); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("palette and diff_mask properties on random grids") {
  Rng rng(20240901);
  for (int i = 0; i < 200; ++i) {
    const Grid g = testing::random_grid(rng);
    const auto pal = palette(g);
    CHECK(pal.size() >= 1);
    for (std::size_t k = 0; k < pal.size(); ++k) {
      CHECK(pal[k] < kNumColors);
      if (k > 0) CHECK(pal[k - 1] < pal[k]);
    }
    CHECK(diff_mask(g, g).popcount() == 0);

    const Grid h = testing::random_grid(rng, g.height(), g.width(), g.height(), g.width());
    CHECK(diff_mask(g, h).popcount() == diff_mask(h, g).popcount());
  }
}

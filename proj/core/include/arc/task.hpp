#pragma once

#include <optional>
#include <string>
#include <vector>

#include "arc/grid.hpp"

namespace arc {

struct GridPair {
  Grid input;
  Grid output;
};

struct TestItem {
  Grid input;
  std::optional<Grid> output;  // ground truth when known
};

// One ARC task: demonstration pairs plus one or more test items.
struct TaskRecord {
  std::string id;
  std::vector<GridPair> train;
  std::vector<TestItem> test;
};

using TaskSet = std::vector<TaskRecord>;

}  // namespace arc

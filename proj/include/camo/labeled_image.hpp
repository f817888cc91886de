#pragma once

#include <string>
#include <unordered_set>
#include <vector>

#include "camo/error.hpp"
#include "camo/geometry.hpp"
#include "camo/tensor.hpp"

namespace camo {

// Ordered class vocabulary. The default matches the four vehicle classes
// the pipeline trains against.
struct ClassMap {
  std::vector<std::string> names{"bus", "car", "truck", "van"};

  void validate() const {
    std::unordered_set<std::string> seen;
    for (const auto& n : names)
      if (!seen.insert(n).second)
        throw ParamError("class map: duplicate name '" + n + "'");
  }

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    return -1;
  }

  int size() const { return static_cast<int>(names.size()); }
};

struct LabeledImage {
  Tensor<float> image;  // [3,H,W], values in [0,1]
  std::vector<BoundingBox> boxes;
  std::string source_id;
  bool padded = false;  // set by the tiler for undersized inputs
};

}  // namespace camo

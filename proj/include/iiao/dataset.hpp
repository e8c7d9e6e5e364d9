#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "iiao/densitymap.hpp"
#include "iiao/tensor.hpp"

namespace iiao {

struct Sample {
  std::string id;
  Tensor image;  // 3 x H x W
  densitymap::AnnotationSet annotations;
};

// Every {id}.ppm in `dir` paired with its {id}.json, sorted by id. Throws if
// an image lacks annotations, sizes disagree, or the directory has no images.
std::vector<Sample> load_dataset(const std::filesystem::path& dir);

}  // namespace iiao

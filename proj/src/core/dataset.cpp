#include "iiao/dataset.hpp"

#include <algorithm>
#include <stdexcept>

#include "iiao/image_io.hpp"

namespace iiao {

namespace fs = std::filesystem;

std::vector<Sample> load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir.string());
  std::vector<fs::path> images;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") images.push_back(entry.path());
  if (images.empty()) throw std::runtime_error("no .ppm images in " + dir.string());
  std::sort(images.begin(), images.end());

  std::vector<Sample> samples;
  samples.reserve(images.size());
  for (const fs::path& img : images) {
    fs::path ann_path = img;
    ann_path.replace_extension(".json");
    if (!fs::exists(ann_path)) throw std::runtime_error("missing annotations for " + img.string());
    Sample s;
    s.id = img.stem().string();
    s.image = read_ppm(img);
    s.annotations = densitymap::load_annotations(ann_path, densitymap::AnnotationFormat::json);
    if (s.annotations.width != s.image.dim(2) || s.annotations.height != s.image.dim(1))
      throw std::runtime_error(ann_path.string() + ": annotated size " +
                               std::to_string(s.annotations.width) + "x" +
                               std::to_string(s.annotations.height) + " does not match image " +
                               std::to_string(s.image.dim(2)) + "x" + std::to_string(s.image.dim(1)));
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace iiao

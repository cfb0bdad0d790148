#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "advarena/tensor.hpp"

namespace advarena {

/// One image with its ground truth and the class a targeted attack must reach.
struct ImageRecord {
  std::string id;
  Tensor pixels;  // [3,H,W], values on the 1/255 grid
  std::size_t true_label = 0;
  std::size_t target_label = 0;
};

struct DatasetSplit {
  std::string name;
  std::vector<ImageRecord> records;
  std::uint64_t seed = 0;
  std::size_t n_classes = 0;

  std::size_t size() const { return records.size(); }
};

inline constexpr std::size_t kMaxShapeClasses = 10;

/// Names of the procedurally rendered classes, in label order.
const std::vector<std::string>& shape_class_names();

/// Renders a balanced split of procedural shape images (n_per_class per class, shuffled order) and assigns
/// targets with a seed derived from `seed`.
DatasetSplit generate(std::size_t n_classes, std::size_t n_per_class, std::size_t size, std::uint64_t seed,
                      std::string name = "dev");

/// Draws each target uniformly from the C - 1 classes other than the true label.
void assign_targets(DatasetSplit& split, std::uint64_t seed);

/// Rounds every value to the nearest multiple of 1/255 inside [0,1].
Tensor quantize_to_grid(const Tensor& pixels);

// Binary portable pixmap (P6, maxval 255).
std::vector<std::uint8_t> encode_ppm(const Tensor& pixels);
Tensor decode_ppm(const std::vector<std::uint8_t>& bytes);
void write_image(const Tensor& pixels, const std::filesystem::path& path);
Tensor read_image(const std::filesystem::path& path);

/// Writes <dir>/<id>.ppm per record plus <dir>/labels.csv (image_id,true_label,target_label).
void save_split(const DatasetSplit& split, const std::filesystem::path& dir);
DatasetSplit load_split(const std::filesystem::path& dir, std::string name = {});

/// Clean-accuracy helper shared by tests and reports.
template <typename Predict>
double accuracy(std::span<const ImageRecord> records, Predict&& predict) {
  if (records.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& r : records)
    if (predict(r.pixels) == r.true_label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

}  // namespace advarena

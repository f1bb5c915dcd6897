#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gkg/tensor.hpp"

namespace gkg {

struct MultiLabelSample {
  Tensor image;                       // [H x W x ch], values in [0, 1]
  std::vector<std::uint8_t> labels;   // length L
};

enum class ShapeKind { square, circle, triangle, cross, bar, ring, diamond, checker };

struct Prototype {
  std::string name;
  ShapeKind shape;
  std::array<double, 3> color;
};

// The fixed catalogue of drawable categories; the first L are used.
const std::vector<Prototype>& shape_prototypes();
std::vector<std::string> label_names(std::size_t num_labels);

struct ShapesConfig {
  std::uint64_t seed = 0;
  std::size_t num_samples = 100;
  std::size_t num_labels = 8;
  std::size_t image_size = 32;
  std::size_t max_objects = 4;
  double noise = 0.08;

  void validate() const;
};

// Each sample draws 1..max_objects distinct categories, places them at
// non-overlapping random positions and scales on a noisy background, and
// marks exactly the categories that were drawn.
std::vector<MultiLabelSample> generate_shapes_dataset(const ShapesConfig& config);

// Rasterises one prototype into a [size x size] coverage mask.
std::vector<std::uint8_t> prototype_mask(ShapeKind shape, std::size_t size);

// Directory layout: index.json plus one raw little-endian float32 file per
// image ([H][W][ch] order).
void write_dataset(const std::filesystem::path& dir, const std::vector<MultiLabelSample>& samples,
                   const std::vector<std::string>& names);
std::vector<MultiLabelSample> read_dataset(const std::filesystem::path& dir);

// Raw float32 image file helpers.
void write_image_f32(const std::filesystem::path& file, const Tensor& image);
Tensor read_image_f32(const std::filesystem::path& file, const Shape& shape);
// Binary (P6) PPM, scaled to [0, 1].
Tensor read_ppm(const std::filesystem::path& file);

}  // namespace gkg

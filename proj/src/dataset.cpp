#include "gkg/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "gkg/errors.hpp"
#include "gkg/random.hpp"

namespace gkg {
namespace {

static_assert(std::endian::native == std::endian::little, "raw image files assume a little-endian host");

struct Box {
  std::size_t y, x, size;
  bool overlaps(const Box& o) const {
    return y < o.y + o.size && o.y < y + size && x < o.x + o.size && o.x < x + size;
  }
};

}  // namespace

const std::vector<Prototype>& shape_prototypes() {
  static const std::vector<Prototype> protos = {
      {"red_square", ShapeKind::square, {0.90, 0.10, 0.10}},
      {"green_circle", ShapeKind::circle, {0.10, 0.80, 0.20}},
      {"blue_triangle", ShapeKind::triangle, {0.15, 0.30, 0.95}},
      {"yellow_cross", ShapeKind::cross, {0.95, 0.85, 0.10}},
      {"magenta_bar", ShapeKind::bar, {0.85, 0.20, 0.85}},
      {"cyan_ring", ShapeKind::ring, {0.10, 0.85, 0.85}},
      {"orange_diamond", ShapeKind::diamond, {1.00, 0.55, 0.10}},
      {"white_checker", ShapeKind::checker, {0.95, 0.95, 0.95}},
  };
  return protos;
}

std::vector<std::string> label_names(std::size_t num_labels) {
  const auto& protos = shape_prototypes();
  if (num_labels > protos.size()) {
    throw ConfigError("dataset.num_labels: at most " + std::to_string(protos.size()) + " categories available");
  }
  std::vector<std::string> names;
  for (std::size_t i = 0; i < num_labels; ++i) names.push_back(protos[i].name);
  return names;
}

void ShapesConfig::validate() const {
  if (num_labels == 0 || num_labels > shape_prototypes().size()) {
    throw ConfigError("dataset.num_labels: must lie in [1, " + std::to_string(shape_prototypes().size()) + "]");
  }
  if (num_samples == 0) throw ConfigError("dataset.num_samples: must be positive");
  if (image_size < 8) throw ConfigError("dataset.image_size: must be at least 8");
  if (max_objects == 0 || max_objects > num_labels) {
    throw ConfigError("dataset.max_objects: must lie in [1, num_labels]");
  }
  if (!(noise >= 0.0 && noise <= 1.0)) throw ConfigError("dataset.noise: must lie in [0, 1]");
}

std::vector<std::uint8_t> prototype_mask(ShapeKind shape, std::size_t size) {
  std::vector<std::uint8_t> mask(size * size, 0);
  const double s = static_cast<double>(size);
  const double c = (s - 1.0) / 2.0;
  const double r = s / 2.0;
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double fy = static_cast<double>(y), fx = static_cast<double>(x);
      const double dy = fy - c, dx = fx - c;
      bool on = false;
      switch (shape) {
        case ShapeKind::square:
          on = true;
          break;
        case ShapeKind::circle:
          on = dx * dx + dy * dy <= r * r;
          break;
        case ShapeKind::triangle:
          on = std::abs(dx) <= (fy + 1.0) / 2.0;
          break;
        case ShapeKind::cross:
          on = std::abs(dx) < s / 6.0 + 0.5 || std::abs(dy) < s / 6.0 + 0.5;
          break;
        case ShapeKind::bar:
          on = std::abs(dx) < s / 6.0 + 0.5;
          break;
        case ShapeKind::ring: {
          const double d2 = dx * dx + dy * dy;
          on = d2 <= r * r && d2 >= 0.3 * r * r;
          break;
        }
        case ShapeKind::diamond:
          on = std::abs(dx) + std::abs(dy) <= r;
          break;
        case ShapeKind::checker: {
          const std::size_t cell = std::max<std::size_t>(1, size / 4);
          on = ((y / cell) + (x / cell)) % 2 == 0;
          break;
        }
      }
      mask[y * size + x] = on ? 1 : 0;
    }
  }
  return mask;
}

std::vector<MultiLabelSample> generate_shapes_dataset(const ShapesConfig& config) {
  config.validate();
  const auto& protos = shape_prototypes();
  const std::size_t n = config.image_size, L = config.num_labels;
  const std::size_t min_size = std::max<std::size_t>(4, n / 4);
  const std::size_t max_size = std::max(min_size, n * 7 / 16);
  Rng rng(config.seed);
  std::vector<MultiLabelSample> samples;
  samples.reserve(config.num_samples);

  for (std::size_t s = 0; s < config.num_samples; ++s) {
    MultiLabelSample sample{Tensor({n, n, 3}), std::vector<std::uint8_t>(L, 0)};
    const double base = uniform(rng, 0.15, 0.45);
    for (double& v : sample.image.data()) v = std::clamp(base + config.noise * normal(rng), 0.0, 1.0);

    const std::size_t wanted = 1 + uniform_index(rng, config.max_objects);
    std::vector<std::size_t> classes(L);
    for (std::size_t i = 0; i < L; ++i) classes[i] = i;
    // Partial Fisher-Yates: the first `wanted` entries are the chosen set.
    for (std::size_t i = 0; i < wanted; ++i) {
      const std::size_t j = i + uniform_index(rng, L - i);
      std::swap(classes[i], classes[j]);
    }

    std::vector<Box> placed;
    for (std::size_t o = 0; o < wanted; ++o) {
      const Prototype& proto = protos[classes[o]];
      bool ok = false;
      Box box{};
      for (int attempt = 0; attempt < 64 && !ok; ++attempt) {
        box.size = min_size + uniform_index(rng, max_size - min_size + 1);
        box.y = uniform_index(rng, n - box.size + 1);
        box.x = uniform_index(rng, n - box.size + 1);
        ok = std::none_of(placed.begin(), placed.end(), [&](const Box& b) { return b.overlaps(box); });
      }
      if (!ok) continue;
      placed.push_back(box);
      sample.labels[classes[o]] = 1;
      const auto mask = prototype_mask(proto.shape, box.size);
      for (std::size_t y = 0; y < box.size; ++y) {
        for (std::size_t x = 0; x < box.size; ++x) {
          if (!mask[y * box.size + x]) continue;
          for (std::size_t ch = 0; ch < 3; ++ch) {
            const double v = proto.color[ch] + 0.5 * config.noise * normal(rng);
            sample.image[((box.y + y) * n + box.x + x) * 3 + ch] = std::clamp(v, 0.0, 1.0);
          }
        }
      }
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

void write_image_f32(const std::filesystem::path& file, const Tensor& image) {
  std::vector<float> raw(image.size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(image[i]);
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
}

Tensor read_image_f32(const std::filesystem::path& file, const Shape& shape) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  std::vector<float> raw(shape_numel(shape));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(raw.size() * sizeof(float)) || in.peek() != EOF) {
    throw std::runtime_error(file.string() + ": expected " + std::to_string(raw.size()) + " float32 values for shape " +
                             shape_string(shape));
  }
  return Tensor(shape, std::vector<double>(raw.begin(), raw.end()));
}

Tensor read_ppm(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  auto token = [&in]() {
    std::string t;
    while (in >> t) {
      if (t[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return t;
    }
    throw std::runtime_error("truncated PPM header");
  };
  if (token() != "P6") throw std::runtime_error(file.string() + ": only binary P6 PPM is supported");
  const std::size_t w = std::stoul(token()), h = std::stoul(token());
  const double maxval = std::stod(token());
  in.get();
  if (maxval <= 0 || maxval > 255) throw std::runtime_error(file.string() + ": unsupported PPM maxval");
  std::vector<unsigned char> bytes(w * h * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw std::runtime_error(file.string() + ": truncated");
  Tensor image({h, w, 3});
  for (std::size_t i = 0; i < bytes.size(); ++i) image[i] = bytes[i] / maxval;
  return image;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<MultiLabelSample>& samples,
                   const std::vector<std::string>& names) {
  std::filesystem::create_directories(dir);
  nlohmann::json index;
  index["version"] = 1;
  index["image_shape"] = samples.empty() ? Shape{} : samples.front().image.shape();
  index["label_names"] = names;
  index["samples"] = nlohmann::json::array();
  char file[32];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::snprintf(file, sizeof(file), "%06zu.f32", i);
    write_image_f32(dir / file, samples[i].image);
    index["samples"].push_back({{"file", file}, {"labels", samples[i].labels}});
  }
  std::ofstream(dir / "index.json") << index.dump(1) << "\n";
}

std::vector<MultiLabelSample> read_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in) throw std::runtime_error("missing " + (dir / "index.json").string());
  const auto index = nlohmann::json::parse(in);
  const Shape shape = index.at("image_shape").get<Shape>();
  const std::size_t L = index.at("label_names").size();
  std::vector<MultiLabelSample> samples;
  for (const auto& entry : index.at("samples")) {
    auto labels = entry.at("labels").get<std::vector<std::uint8_t>>();
    if (labels.size() != L) throw std::runtime_error("dataset index: label vector length mismatch");
    samples.push_back({read_image_f32(dir / entry.at("file").get<std::string>(), shape), std::move(labels)});
  }
  return samples;
}

}  // namespace gkg

#include "hqgan/data.hpp"

#include <cmath>
#include <fstream>

#include "hqgan/errors.hpp"
#include "hqgan/rng.hpp"

namespace hqgan {

namespace {

constexpr std::size_t kCifarRecordBytes = 1 + 3 * 32 * 32;

void read_cifar_file(const std::filesystem::path& path, Dataset& out) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open CIFAR batch '" + path.string() + "'");
  const auto size = static_cast<std::size_t>(in.tellg());
  if (size == 0 || size % kCifarRecordBytes != 0) {
    const std::size_t records = size / kCifarRecordBytes;
    throw IoError("'" + path.string() + "': expected a whole number of " +
                  std::to_string(kCifarRecordBytes) + "-byte records, got " +
                  std::to_string(size) + " bytes (" + std::to_string(records) +
                  " full records plus " + std::to_string(size % kCifarRecordBytes) +
                  " stray bytes)");
  }
  in.seekg(0);
  std::vector<std::uint8_t> buf(size);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size));
  if (!in) throw IoError("short read from '" + path.string() + "'");

  const std::size_t records = size / kCifarRecordBytes;
  out.images.reserve(out.images.size() + records);
  for (std::size_t r = 0; r < records; ++r) {
    const std::uint8_t* rec = buf.data() + r * kCifarRecordBytes;
    Image img;
    img.label = rec[0];
    img.pixels.assign(rec + 1, rec + kCifarRecordBytes);
    out.images.push_back(std::move(img));
  }
}

}  // namespace

Cifar10 load_cifar10(const std::filesystem::path& directory) {
  Cifar10 data;
  data.train.image_size = 32;
  data.test.image_size = 32;
  for (int i = 1; i <= 5; ++i) {
    read_cifar_file(directory / ("data_batch_" + std::to_string(i) + ".bin"),
                    data.train);
  }
  read_cifar_file(directory / "test_batch.bin", data.test);
  return data;
}

Dataset filter_class(const Dataset& data, const std::vector<int>& labels) {
  for (const int l : labels) {
    if (l < 0 || l > 9) {
      throw ConfigError("filter_class: label " + std::to_string(l) +
                        " outside 0..9");
    }
  }
  Dataset out;
  out.image_size = data.image_size;
  for (const Image& img : data.images) {
    for (const int l : labels) {
      if (img.label == l) {
        out.images.push_back(img);
        break;
      }
    }
  }
  return out;
}

Dataset cap_dataset(const Dataset& data, std::size_t cap) {
  if (cap == 0 || cap >= data.count()) return data;
  Dataset out;
  out.image_size = data.image_size;
  out.images.assign(data.images.begin(), data.images.begin() + cap);
  return out;
}

double normalize_pixel(std::uint8_t byte) {
  return static_cast<double>(byte) / 127.5 - 1.0;
}

std::uint8_t denormalize_pixel(double value) {
  const double b = std::round((value + 1.0) * 127.5);
  if (b <= 0.0) return 0;
  if (b >= 255.0) return 255;
  return static_cast<std::uint8_t>(b);
}

ImageBatch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  const std::size_t s = data.image_size;
  const std::size_t stride = 3 * s * s;
  ImageBatch batch;
  batch.images = Tensor::zeros({indices.size(), 3, s, s});
  auto dst = batch.images.mutable_data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Image& img = data.images.at(indices[i]);
    if (img.pixels.size() != stride) {
      throw ShapeError("make_batch: image has " + std::to_string(img.pixels.size()) +
                       " bytes, dataset size expects " + std::to_string(stride));
    }
    for (std::size_t p = 0; p < stride; ++p) {
      dst[i * stride + p] = normalize_pixel(img.pixels[p]);
    }
    batch.labels.push_back(img.label);
  }
  return batch;
}

ImageBatch make_batch_all(const Dataset& data) {
  std::vector<std::size_t> idx(data.count());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return make_batch(data, idx);
}

// ---------------------------------------------------------------------------
// Synthetic shapes
// ---------------------------------------------------------------------------

namespace {

void draw_shape(Image& img, std::size_t size, int kind, Rng& rng) {
  // Dark background, bright shape; classes differ by geometry only so a
  // classifier has to pick up shape, not color.
  std::uint8_t bg[3], fg[3];
  for (int c = 0; c < 3; ++c) {
    bg[c] = static_cast<std::uint8_t>(rng.below(60));
    fg[c] = static_cast<std::uint8_t>(140 + rng.below(116));
  }
  const double cx = size * rng.uniform(0.38, 0.62);
  const double cy = size * rng.uniform(0.38, 0.62);
  const double r = size * rng.uniform(0.22, 0.34);

  img.pixels.assign(3 * size * size, 0);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      bool inside = false;
      switch (kind) {
        case kDisc:
          inside = dx * dx + dy * dy <= r * r;
          break;
        case kSquare:
          inside = std::abs(dx) <= r && std::abs(dy) <= r;
          break;
        case kBar:
          inside = std::abs(dy) <= r * 0.45;  // full-width horizontal stripe
          break;
        default:
          throw ConfigError("synthetic_shapes_dataset: unknown class " +
                            std::to_string(kind));
      }
      for (std::size_t c = 0; c < 3; ++c) {
        img.pixels[c * size * size + y * size + x] = inside ? fg[c] : bg[c];
      }
    }
  }
}

}  // namespace

Dataset synthetic_shapes_dataset(std::size_t n_per_class, std::size_t size,
                                 const std::vector<int>& classes,
                                 std::uint64_t seed) {
  if (size != 8 && size != 16 && size != 32) {
    throw ConfigError("synthetic_shapes_dataset: size must be 8, 16 or 32, got " +
                      std::to_string(size));
  }
  Dataset out;
  out.image_size = size;
  Rng rng(derive_seed(seed, "synthetic_shapes"));
  for (std::size_t i = 0; i < n_per_class; ++i) {
    for (const int kind : classes) {
      Image img;
      img.label = kind;
      draw_shape(img, size, kind, rng);
      out.images.push_back(std::move(img));
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t count,
                                                    std::size_t batch_size,
                                                    std::uint64_t seed,
                                                    std::size_t epoch) {
  if (batch_size == 0) throw ConfigError("batch_indices: batch_size must be >= 1");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  Rng rng(derive_seed(seed, "batch_order", epoch));
  rng.shuffle(order);

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start + batch_size <= count; start += batch_size) {
    batches.emplace_back(order.begin() + start, order.begin() + start + batch_size);
  }
  return batches;
}

}  // namespace hqgan

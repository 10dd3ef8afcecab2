#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hqgan/tensor.hpp"

namespace hqgan {

/// One channel-planar RGB image (R plane, G plane, B plane), bytes 0..255.
struct Image {
  int label = 0;
  std::vector<std::uint8_t> pixels;  // 3 * size * size
};

struct Dataset {
  std::size_t image_size = 32;
  std::vector<Image> images;

  std::size_t count() const { return images.size(); }
};

struct Cifar10 {
  Dataset train;
  Dataset test;
};

/// Reads the CIFAR-10 binary batches (data_batch_1..5.bin, test_batch.bin):
/// 10,000 records per file, each 1 label byte + 3072 channel-planar pixel
/// bytes. File length is validated exactly.
Cifar10 load_cifar10(const std::filesystem::path& directory);

/// Subset with labels in `labels`, order preserved.
Dataset filter_class(const Dataset& data, const std::vector<int>& labels);

/// Truncates to the first `cap` images (0 keeps everything).
Dataset cap_dataset(const Dataset& data, std::size_t cap);

/// byte -> byte/127.5 - 1, so {0, 127.5, 255} -> {-1, 0, +1}.
double normalize_pixel(std::uint8_t byte);
/// Inverse map with rounding/clamping; round-trips every byte exactly.
std::uint8_t denormalize_pixel(double value);

struct ImageBatch {
  Tensor images;  // [N,3,S,S] in [-1,+1]
  std::vector<int> labels;
};

/// Normalizes the selected images into a batch tensor.
ImageBatch make_batch(const Dataset& data, std::span<const std::size_t> indices);
ImageBatch make_batch_all(const Dataset& data);

/// Synthetic shape kinds for the desk-scale dataset.
enum SyntheticClass : int { kDisc = 0, kSquare = 1, kBar = 2 };

/// Procedurally drawn colored shapes with jittered position/scale/color.
/// Labels are the SyntheticClass ids passed in `classes`. Deterministic
/// for a given seed.
Dataset synthetic_shapes_dataset(std::size_t n_per_class, std::size_t size,
                                 const std::vector<int>& classes,
                                 std::uint64_t seed);

/// One epoch of batch index lists: seeded shuffle (epoch folded into the
/// stream) chunked to batch_size, final partial batch dropped.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t count,
                                                    std::size_t batch_size,
                                                    std::uint64_t seed,
                                                    std::size_t epoch);

}  // namespace hqgan

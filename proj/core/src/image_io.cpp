#include "hqgan/image_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "hqgan/data.hpp"
#include "hqgan/errors.hpp"

namespace hqgan {

namespace {

const std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};

void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32be(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) |
         (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& data) {
  put_u32be(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc = crc32(0L, out.data() + crc_start, static_cast<uInt>(4 + data.size()));
  put_u32be(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_png(const RgbImage& image, const std::filesystem::path& path) {
  if (image.pixels.size() != 3 * image.width * image.height) {
    throw ShapeError("write_png: pixel buffer does not match " +
                     std::to_string(image.width) + "x" + std::to_string(image.height));
  }

  // Raw scanlines, filter type 0 per row.
  const std::size_t row_bytes = 3 * image.width;
  std::vector<std::uint8_t> raw((row_bytes + 1) * image.height);
  for (std::size_t y = 0; y < image.height; ++y) {
    raw[y * (row_bytes + 1)] = 0;
    std::memcpy(raw.data() + y * (row_bytes + 1) + 1,
                image.pixels.data() + y * row_bytes, row_bytes);
  }

  uLongf compressed_size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(compressed_size);
  if (compress2(compressed.data(), &compressed_size, raw.data(),
                static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw IoError("write_png: deflate failed");
  }
  compressed.resize(compressed_size);

  std::vector<std::uint8_t> ihdr;
  put_u32be(ihdr, static_cast<std::uint32_t>(image.width));
  put_u32be(ihdr, static_cast<std::uint32_t>(image.height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: truecolor
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // interlace

  std::vector<std::uint8_t> file(kPngSignature, kPngSignature + 8);
  append_chunk(file, "IHDR", ihdr);
  append_chunk(file, "IDAT", compressed);
  append_chunk(file, "IEND", {});

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(file.data()),
            static_cast<std::streamsize>(file.size()));
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

namespace {

std::uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
  if (pb <= pc) return static_cast<std::uint8_t>(b);
  return static_cast<std::uint8_t>(c);
}

}  // namespace

RgbImage read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> file(static_cast<std::size_t>(in.tellg()));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(file.data()), static_cast<std::streamsize>(file.size()));
  if (!in) throw IoError("short read from '" + path.string() + "'");

  if (file.size() < 8 || std::memcmp(file.data(), kPngSignature, 8) != 0) {
    throw IoError("'" + path.string() + "' is not a PNG file");
  }

  RgbImage image;
  std::vector<std::uint8_t> idat;
  std::size_t pos = 8;
  bool saw_ihdr = false;
  while (pos + 12 <= file.size()) {
    const std::uint32_t len = get_u32be(file.data() + pos);
    if (pos + 12 + len > file.size()) throw IoError("read_png: truncated chunk");
    const char* type = reinterpret_cast<const char*>(file.data() + pos + 4);
    const std::uint8_t* data = file.data() + pos + 8;
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw IoError("read_png: malformed IHDR");
      image.width = get_u32be(data);
      image.height = get_u32be(data + 4);
      if (data[8] != 8 || data[9] != 2 || data[12] != 0) {
        throw IoError("read_png: only 8-bit non-interlaced RGB is supported");
      }
      saw_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (!saw_ihdr || image.width == 0 || image.height == 0) {
    throw IoError("read_png: missing image header");
  }

  const std::size_t row_bytes = 3 * image.width;
  std::vector<std::uint8_t> raw((row_bytes + 1) * image.height);
  uLongf raw_size = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_size, idat.data(), static_cast<uLong>(idat.size())) !=
          Z_OK ||
      raw_size != raw.size()) {
    throw IoError("read_png: inflate failed");
  }

  image.pixels.assign(row_bytes * image.height, 0);
  for (std::size_t y = 0; y < image.height; ++y) {
    const std::uint8_t filter = raw[y * (row_bytes + 1)];
    const std::uint8_t* src = raw.data() + y * (row_bytes + 1) + 1;
    std::uint8_t* dst = image.pixels.data() + y * row_bytes;
    const std::uint8_t* prev = y ? image.pixels.data() + (y - 1) * row_bytes : nullptr;
    for (std::size_t i = 0; i < row_bytes; ++i) {
      const int left = i >= 3 ? dst[i - 3] : 0;
      const int up = prev ? prev[i] : 0;
      const int up_left = (prev && i >= 3) ? prev[i - 3] : 0;
      int value = src[i];
      switch (filter) {
        case 0: break;
        case 1: value += left; break;
        case 2: value += up; break;
        case 3: value += (left + up) / 2; break;
        case 4: value += paeth(left, up, up_left); break;
        default:
          throw IoError("read_png: unknown filter type " + std::to_string(filter));
      }
      dst[i] = static_cast<std::uint8_t>(value);
    }
  }
  return image;
}

RgbImage tile_grid(const Tensor& images, std::size_t grid_cols) {
  if (images.shape().size() != 4 || images.shape()[1] != 3) {
    throw ShapeError("tile_grid: expected [N,3,S,S] images, got " +
                     shape_str(images.shape()));
  }
  if (grid_cols == 0) throw ConfigError("tile_grid: grid_cols must be >= 1");
  const std::size_t n = images.shape()[0];
  const std::size_t s = images.shape()[2];
  const std::size_t rows = (n + grid_cols - 1) / grid_cols;

  RgbImage grid;
  grid.width = grid_cols * s;
  grid.height = rows * s;
  grid.pixels.assign(3 * grid.width * grid.height, 0);

  const auto data = images.data();
  const std::size_t sample = 3 * s * s;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t gx = (i % grid_cols) * s;
    const std::size_t gy = (i / grid_cols) * s;
    for (std::size_t y = 0; y < s; ++y) {
      for (std::size_t x = 0; x < s; ++x) {
        std::uint8_t* px = grid.pixels.data() + 3 * ((gy + y) * grid.width + gx + x);
        for (std::size_t c = 0; c < 3; ++c) {
          px[c] = denormalize_pixel(data[i * sample + c * s * s + y * s + x]);
        }
      }
    }
  }
  return grid;
}

}  // namespace hqgan

#include "hqgan/weight_store.hpp"

#include <cstring>
#include <fstream>
#include <limits>
#include <unordered_set>

#include "hqgan/errors.hpp"

static_assert(std::numeric_limits<double>::is_iec559, "IEEE-754 doubles required");

namespace hqgan {

namespace {

constexpr char kMagic[4] = {'H', 'Q', 'W', 'S'};

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

struct Reader {
  const std::uint8_t* p;
  std::size_t left;
  const char* context;

  void need(std::size_t n) const {
    if (left < n) {
      throw IoError(std::string(context) + ": truncated file, needed " +
                    std::to_string(n) + " more bytes, have " + std::to_string(left));
    }
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    left -= 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    p += 8;
    left -= 8;
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    left -= n;
    return s;
  }
};

}  // namespace

void WeightStore::add(std::string name, Shape shape, std::vector<double> values) {
  if (numel(shape) != values.size()) {
    throw ShapeError("weight store: record '" + name + "' shape " + shape_str(shape) +
                     " wants " + std::to_string(numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  for (const WeightRecord& r : records_) {
    if (r.name == name) {
      throw ConfigError("weight store: duplicate record name '" + name + "'");
    }
  }
  records_.push_back({std::move(name), std::move(shape), std::move(values)});
}

const WeightRecord* WeightStore::find(const std::string& name) const {
  for (const WeightRecord& r : records_) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

void save_weights(const WeightStore& store, const std::filesystem::path& path) {
  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), kMagic, kMagic + 4);
  put_u32(buf, WeightStore::kFormatVersion);
  put_u64(buf, store.records().size());
  for (const WeightRecord& r : store.records()) {
    put_u32(buf, static_cast<std::uint32_t>(r.name.size()));
    buf.insert(buf.end(), r.name.begin(), r.name.end());
    put_u32(buf, static_cast<std::uint32_t>(r.shape.size()));
    for (const std::size_t d : r.shape) put_u64(buf, d);
    for (const double v : r.values) put_f64(buf, v);
  }
  put_u64(buf, fnv1a64(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

WeightStore load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(buf.data()), size);
  if (!in) throw IoError("short read from '" + path.string() + "'");

  if (buf.size() < 4 + 4 + 8 + 8 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw IoError("'" + path.string() + "' is not a weight store");
  }
  const std::uint64_t stored_sum =
      [&] {
        Reader tail{buf.data() + buf.size() - 8, 8, "weight store"};
        return tail.u64();
      }();
  const std::uint64_t computed = fnv1a64(buf.data(), buf.size() - 8);
  if (stored_sum != computed) {
    throw ChecksumError("'" + path.string() + "': checksum mismatch (file corrupt)");
  }

  Reader r{buf.data() + 4, buf.size() - 4 - 8, "weight store"};
  const std::uint32_t version = r.u32();
  if (version != WeightStore::kFormatVersion) {
    throw VersionError("'" + path.string() + "': unknown format version " +
                       std::to_string(version));
  }
  const std::uint64_t count = r.u64();
  WeightStore store;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    std::string name = r.str(name_len);
    const std::uint32_t ndim = r.u32();
    Shape shape(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d) {
      shape[d] = static_cast<std::size_t>(r.u64());
    }
    std::vector<double> values(numel(shape));
    for (double& v : values) v = r.f64();
    store.add(std::move(name), std::move(shape), std::move(values));
  }
  if (r.left != 0) {
    throw IoError("'" + path.string() + "': " + std::to_string(r.left) +
                  " trailing bytes after last record");
  }
  return store;
}

WeightStore export_state(const std::vector<StateEntry>& entries) {
  WeightStore store;
  for (const StateEntry& e : entries) {
    store.add(e.name, e.shape, std::vector<double>(e.data, e.data + e.size));
  }
  return store;
}

void import_state(std::vector<StateEntry> entries, const WeightStore& store) {
  for (const StateEntry& e : entries) {
    const WeightRecord* rec = store.find(e.name);
    if (!rec) {
      throw ConfigError("import: store is missing layer '" + e.name + "'");
    }
    if (rec->shape != e.shape) {
      throw ShapeError("import: layer '" + e.name + "' has shape " +
                       shape_str(rec->shape) + " in the store but " +
                       shape_str(e.shape) + " in the model");
    }
    std::copy(rec->values.begin(), rec->values.end(), e.data);
  }
}

}  // namespace hqgan

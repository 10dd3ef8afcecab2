#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hqgan/errors.hpp"
#include "hqgan/transfer.hpp"
#include "test_util.hpp"

using namespace hqgan;
using namespace hqgan::testutil;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("hqgan_transfer_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

BackboneConfig small_backbone() {
  BackboneConfig cfg;
  cfg.stage_channels = {4, 4, 8, 16, 32};
  cfg.input_size = 16;
  return cfg;
}

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint8_t> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary | std::ios::ate);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(in.tellg()));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  return buf;
}

void write_file(const fs::path& p, const std::vector<std::uint8_t>& buf) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
}

}  // namespace

TEST_CASE("pretrain: discs vs squares reaches high training accuracy") {
  const Dataset data = synthetic_shapes_dataset(128, 16, {kDisc, kSquare}, 5);
  PretrainOptions opts;
  opts.epochs = 5;
  opts.batch_size = 16;
  opts.seed = 7;
  auto [store, report] = pretrain_backbone(data, 2, small_backbone(), opts);
  CHECK(report.epochs == 5);
  CHECK(report.epoch_losses.size() == 5);
  CHECK(report.final_accuracy > 0.95);
  CHECK(report.epoch_losses.front() > report.epoch_losses.back());
  CHECK_FALSE(store.empty());
}

TEST_CASE("pretrain: zero epochs returns initialization at chance accuracy") {
  const Dataset data = synthetic_shapes_dataset(64, 16, {kDisc, kSquare, kBar}, 11);
  PretrainOptions opts;
  opts.epochs = 0;
  opts.seed = 3;
  auto [store, report] = pretrain_backbone(data, 3, small_backbone(), opts);
  CHECK(report.epoch_losses.empty());
  // Untrained predictions hover near chance for balanced classes.
  CHECK(report.final_accuracy < 0.7);
}

TEST_CASE("pretrain: empty dataset and label mismatch are rejected") {
  Dataset empty;
  CHECK_THROWS_AS(
      pretrain_backbone(empty, 2, small_backbone(), PretrainOptions{}),
      ConfigError);
  const Dataset two = synthetic_shapes_dataset(8, 16, {kDisc, kSquare}, 1);
  CHECK_THROWS_AS(pretrain_backbone(two, 3, small_backbone(), PretrainOptions{}),
                  ConfigError);
}

TEST_CASE("weight store: save -> load -> save produces byte-identical files") {
  TempDir tmp;
  Backbone bb(small_backbone(), 17);
  const WeightStore store = export_state(bb.state_entries());
  const fs::path first = tmp.path / "a.hqws";
  const fs::path second = tmp.path / "b.hqws";
  save_weights(store, first);
  save_weights(load_weights(first), second);
  CHECK(read_file(first) == read_file(second));
}

TEST_CASE("weight store: single bit flip is rejected by the checksum") {
  TempDir tmp;
  Backbone bb(small_backbone(), 19);
  const fs::path path = tmp.path / "w.hqws";
  save_weights(export_state(bb.state_entries()), path);

  auto bytes = read_file(path);
  bytes[bytes.size() / 2] ^= 0x10;
  write_file(path, bytes);
  CHECK_THROWS_AS(load_weights(path), ChecksumError);
}

TEST_CASE("weight store: unknown version is a version error") {
  TempDir tmp;
  Backbone bb(small_backbone(), 23);
  const fs::path path = tmp.path / "w.hqws";
  save_weights(export_state(bb.state_entries()), path);

  auto bytes = read_file(path);
  bytes[4] = 99;  // version field, then re-seal the checksum
  const std::uint64_t sum = fnv1a64(bytes.data(), bytes.size() - 8);
  for (int i = 0; i < 8; ++i) {
    bytes[bytes.size() - 8 + i] = static_cast<std::uint8_t>(sum >> (8 * i));
  }
  write_file(path, bytes);
  CHECK_THROWS_AS(load_weights(path), VersionError);
}

TEST_CASE("weight store: externally assembled file loads into the discriminator") {
  TempDir tmp;
  // Build the store record by record (as another tool would), not via
  // export_state, using a throwaway model only for names and shapes.
  Backbone reference(small_backbone(), 29);
  WeightStore external;
  Rng rng(31);
  for (const StateEntry& e : reference.state_entries()) {
    std::vector<double> values(e.size);
    for (double& v : values) v = rng.normal(0.0, 0.05);
    external.add(e.name, e.shape, std::move(values));
  }
  const fs::path path = tmp.path / "external.hqws";
  save_weights(external, path);

  DiscriminatorConfig dcfg;
  dcfg.backbone = small_backbone();
  dcfg.n_qubits = 3;
  Discriminator disc(dcfg, 37);
  const WeightStore loaded = load_weights(path);
  import_state(disc.backbone().state_entries(), loaded);
  for (const StateEntry& e : disc.backbone().state_entries()) {
    const WeightRecord* rec = loaded.find(e.name);
    REQUIRE(rec != nullptr);
    CHECK(max_abs_diff({e.data, e.size}, rec->values) == 0.0);
  }
}

TEST_CASE("transfer: loaded backbone reproduces pretraining features exactly") {
  const Dataset data = synthetic_shapes_dataset(64, 16, {kSquare, kBar}, 41);
  PretrainOptions opts;
  opts.epochs = 2;
  opts.seed = 43;
  std::shared_ptr<Classifier> classifier;
  auto [store, report] =
      pretrain_backbone(data, 2, small_backbone(), opts, &classifier);
  REQUIRE(classifier != nullptr);

  const Dataset probe = synthetic_shapes_dataset(8, 16, {kDisc}, 47);
  const Tensor probe_images = make_batch_all(probe).images;
  const Tensor expected = classifier->features(probe_images, Mode::kEval);

  DiscriminatorConfig dcfg;
  dcfg.backbone = small_backbone();
  dcfg.n_qubits = 3;
  Discriminator disc(dcfg, 53);
  import_state(disc.backbone().state_entries(), store);
  const Tensor actual = disc.features(probe_images, Mode::kEval);
  CHECK(max_abs_diff(actual.data(), expected.data()) < 1e-10);
}

TEST_CASE("extractor: stable id that fingerprints the weights") {
  const Dataset data = synthetic_shapes_dataset(32, 16, {kDisc, kSquare}, 59);
  PretrainOptions opts;
  opts.epochs = 1;
  opts.seed = 61;
  std::shared_ptr<Classifier> first, second;
  pretrain_backbone(data, 2, small_backbone(), opts, &first);
  ClassifierExtractor ex1(first);
  ClassifierExtractor ex1_again(first);
  CHECK(ex1.id() == ex1_again.id());
  CHECK(ex1.feature_dim() == 32);
  CHECK(ex1.n_classes() == 2);

  opts.seed = 62;
  pretrain_backbone(data, 2, small_backbone(), opts, &second);
  ClassifierExtractor ex2(second);
  CHECK(ex1.id() != ex2.id());

  Rng rng(67);
  const Tensor images = random_tensor({5, 3, 16, 16}, rng, 0.5);
  std::vector<double> features, probs;
  ex1.extract(images, features, &probs);
  CHECK(features.size() == 5 * 32);
  CHECK(probs.size() == 5 * 2);
}

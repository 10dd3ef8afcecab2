#include "hqgan/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "hqgan/errors.hpp"
#include "hqgan/image_io.hpp"
#include "hqgan/transfer.hpp"
#include "hqgan/weight_store.hpp"

namespace hqgan {

namespace {

struct KeyValue {
  std::string key;
  std::string value;
  int line;
};

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  const auto end = s.find_last_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  return std::string(s.substr(begin, end - begin + 1));
}

std::vector<KeyValue> tokenize_config(std::string_view text, const std::string& origin) {
  std::vector<KeyValue> out;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(
        pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    ++line_no;
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;

    const std::size_t hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;

    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": expected 'key = value', got '" + stripped + "'");
    }
    KeyValue kv;
    kv.key = trim(std::string_view(stripped).substr(0, eq));
    kv.value = trim(std::string_view(stripped).substr(eq + 1));
    kv.line = line_no;
    if (kv.key.empty() || kv.value.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": empty key or value");
    }
    out.push_back(std::move(kv));
  }
  return out;
}

long parse_long(const KeyValue& kv, const std::string& origin) {
  try {
    std::size_t idx = 0;
    const long v = std::stol(kv.value, &idx);
    if (idx != kv.value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(origin + ":" + std::to_string(kv.line) + ": field '" +
                      kv.key + "' wants an integer, got '" + kv.value + "'");
  }
}

double parse_double(const KeyValue& kv, const std::string& origin) {
  try {
    std::size_t idx = 0;
    const double v = std::stod(kv.value, &idx);
    if (idx != kv.value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(origin + ":" + std::to_string(kv.line) + ": field '" +
                      kv.key + "' wants a number, got '" + kv.value + "'");
  }
}

template <typename T>
std::vector<T> parse_int_list(const KeyValue& kv, const std::string& origin) {
  std::vector<T> out;
  std::stringstream ss(kv.value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      std::size_t idx = 0;
      const long v = std::stol(item, &idx);
      if (idx != item.size()) throw std::invalid_argument("trailing");
      out.push_back(static_cast<T>(v));
    } catch (const std::exception&) {
      throw ConfigError(origin + ":" + std::to_string(kv.line) + ": field '" +
                        kv.key + "' wants a comma-separated integer list");
    }
  }
  if (out.empty()) {
    throw ConfigError(origin + ":" + std::to_string(kv.line) + ": field '" +
                      kv.key + "' is empty");
  }
  return out;
}

void apply_experiment_kinds(ExperimentConfig& cfg) {
  switch (cfg.experiment_id) {
    case 1:
      cfg.generator_kind = BlockKind::kClassical;
      cfg.discriminator_kind = HeadKind::kClassical;
      break;
    case 2:
      cfg.generator_kind = BlockKind::kClassical;
      cfg.discriminator_kind = HeadKind::kHybrid;
      break;
    case 3:
      cfg.generator_kind = BlockKind::kQuantum;
      cfg.discriminator_kind = HeadKind::kClassical;
      break;
    case 4:
    case 5:
      cfg.generator_kind = BlockKind::kQuantum;
      cfg.discriminator_kind = HeadKind::kHybrid;
      break;
    default:
      throw ConfigError("field 'experiment' must be 1..5, got " +
                        std::to_string(cfg.experiment_id));
  }
}

}  // namespace

ExperimentConfig parse_experiment_config_text(std::string_view text,
                                              const std::string& origin) {
  ExperimentConfig cfg;
  std::optional<std::string> generator_kind, discriminator_kind;
  bool saw_experiment = false;

  for (const KeyValue& kv : tokenize_config(text, origin)) {
    const auto where = origin + ":" + std::to_string(kv.line);
    if (kv.key == "experiment") {
      cfg.experiment_id = static_cast<int>(parse_long(kv, origin));
      saw_experiment = true;
    } else if (kv.key == "dataset") {
      if (kv.value != "cifar10" && kv.value != "synthetic") {
        throw ConfigError(where + ": field 'dataset' must be cifar10 or synthetic");
      }
      cfg.dataset = kv.value;
    } else if (kv.key == "data_dir") {
      cfg.data_dir = kv.value;
    } else if (kv.key == "classes") {
      cfg.classes = parse_int_list<int>(kv, origin);
    } else if (kv.key == "sample_cap") {
      cfg.sample_cap = static_cast<std::size_t>(parse_long(kv, origin));
    } else if (kv.key == "image_size") {
      cfg.image_size = static_cast<std::size_t>(parse_long(kv, origin));
    } else if (kv.key == "n_qubits") {
      cfg.n_qubits = static_cast<std::size_t>(parse_long(kv, origin));
    } else if (kv.key == "generator_base_channels") {
      cfg.gen_base_channels = static_cast<std::size_t>(parse_long(kv, origin));
    } else if (kv.key == "backbone_channels") {
      cfg.backbone_channels = parse_int_list<std::size_t>(kv, origin);
    } else if (kv.key == "pretrain_epochs") {
      cfg.pretrain_epochs = static_cast<std::size_t>(parse_long(kv, origin));
    } else if (kv.key == "pretrain_per_class") {
      cfg.pretrain_per_class = static_cast<std::size_t>(parse_long(kv, origin));
    } else if (kv.key == "synthetic_per_class") {
      cfg.synthetic_per_class = static_cast<std::size_t>(parse_long(kv, origin));
    } else if (kv.key == "synthetic_eval_count") {
      cfg.synthetic_eval_count = static_cast<std::size_t>(parse_long(kv, origin));
    } else if (kv.key == "epochs") {
      cfg.train.epochs = static_cast<std::size_t>(parse_long(kv, origin));
    } else if (kv.key == "batch_size") {
      cfg.train.batch_size = static_cast<std::size_t>(parse_long(kv, origin));
    } else if (kv.key == "learning_rate") {
      cfg.train.learning_rate = parse_double(kv, origin);
    } else if (kv.key == "beta1") {
      cfg.train.beta1 = parse_double(kv, origin);
    } else if (kv.key == "beta2") {
      cfg.train.beta2 = parse_double(kv, origin);
    } else if (kv.key == "metric_every") {
      cfg.train.metric_every = static_cast<std::size_t>(parse_long(kv, origin));
    } else if (kv.key == "eval_samples") {
      cfg.train.eval_samples = static_cast<std::size_t>(parse_long(kv, origin));
    } else if (kv.key == "seed") {
      cfg.train.seed = static_cast<std::uint64_t>(parse_long(kv, origin));
    } else if (kv.key == "latent") {
      if (kv.value == "uniform_arc") {
        cfg.train.latent = LatentDist::kUniformArc;
      } else if (kv.value == "normal") {
        cfg.train.latent = LatentDist::kNormal;
      } else {
        throw ConfigError(where + ": field 'latent' must be uniform_arc or normal");
      }
    } else if (kv.key == "generator") {
      generator_kind = kv.value;
    } else if (kv.key == "discriminator") {
      discriminator_kind = kv.value;
    } else if (kv.key == "pretrained") {
      cfg.pretrained = kv.value;
    } else if (kv.key == "out") {
      cfg.out_dir = kv.value;
    } else {
      throw ConfigError(where + ": unknown field '" + kv.key + "'");
    }
  }

  if (!saw_experiment) {
    throw ConfigError(origin + ": missing required field 'experiment'");
  }
  apply_experiment_kinds(cfg);

  // Explicit kind keys are allowed but must agree with the experiment id.
  if (generator_kind) {
    const bool quantum = *generator_kind == "quantum";
    if (*generator_kind != "classical" && !quantum) {
      throw ConfigError(origin + ": field 'generator' must be classical or quantum");
    }
    if ((cfg.generator_kind == BlockKind::kQuantum) != quantum) {
      throw ConfigError(origin + ": field 'generator' = " + *generator_kind +
                        " contradicts experiment " + std::to_string(cfg.experiment_id));
    }
  }
  if (discriminator_kind) {
    const bool hybrid = *discriminator_kind == "hybrid";
    if (*discriminator_kind != "classical" && !hybrid) {
      throw ConfigError(origin + ": field 'discriminator' must be classical or hybrid");
    }
    if ((cfg.discriminator_kind == HeadKind::kHybrid) != hybrid) {
      throw ConfigError(origin + ": field 'discriminator' = " + *discriminator_kind +
                        " contradicts experiment " + std::to_string(cfg.experiment_id));
    }
  }

  // Dataset-dependent defaults.
  if (cfg.classes.empty()) {
    if (cfg.dataset == "cifar10") {
      cfg.classes = cfg.experiment_id == 5 ? std::vector<int>{2, 1, 5}
                                           : std::vector<int>{2};
    } else {
      cfg.classes = cfg.experiment_id == 5 ? std::vector<int>{0, 1, 2}
                                           : std::vector<int>{kDisc};
    }
  }
  if (cfg.experiment_id != 5 && cfg.classes.size() != 1) {
    throw ConfigError(origin + ": experiments 1-4 train a single class, got " +
                      std::to_string(cfg.classes.size()));
  }
  if (cfg.image_size == 0) cfg.image_size = cfg.dataset == "cifar10" ? 32 : 16;
  if (cfg.dataset == "cifar10" && cfg.image_size != 32) {
    throw ConfigError(origin + ": cifar10 images are 32x32");
  }
  if (cfg.backbone_channels.size() != 5) {
    throw ConfigError(origin + ": field 'backbone_channels' wants 5 entries");
  }
  validate(cfg.train);
  return cfg;
}

ExperimentConfig parse_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config_text(ss.str(), path.string());
}

std::string describe_plan(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "experiment " << cfg.experiment_id << ": "
     << (cfg.generator_kind == BlockKind::kQuantum ? "quantum" : "classical")
     << " generator / "
     << (cfg.discriminator_kind == HeadKind::kHybrid ? "hybrid" : "classical")
     << " discriminator\n";
  os << "dataset: " << cfg.dataset << " (" << cfg.image_size << "x" << cfg.image_size
     << "), classes:";
  for (const int c : cfg.classes) os << ' ' << c;
  if (cfg.sample_cap) os << ", cap " << cfg.sample_cap << "/class";
  os << "\n";
  os << "training: " << cfg.train.epochs << " epochs, batch " << cfg.train.batch_size
     << ", lr " << cfg.train.learning_rate << ", betas (" << cfg.train.beta1 << ","
     << cfg.train.beta2 << "), seed " << cfg.train.seed << "\n";
  os << "metrics every " << cfg.train.metric_every << " epochs\n";
  os << "generator: " << cfg.n_qubits << " qubits, base " << cfg.gen_base_channels
     << " channels\nbackbone:";
  for (const std::size_t c : cfg.backbone_channels) os << ' ' << c;
  os << "\n";
  if (!cfg.pretrained.empty()) {
    os << "discriminator init: " << cfg.pretrained.string() << "\n";
  } else {
    os << "discriminator init: in-run pretraining (" << cfg.pretrain_epochs
       << " epochs)\n";
  }
  os << "output: " << cfg.out_dir.string() << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

}  // namespace

void export_curves(const RunLog& log, const std::filesystem::path& losses_csv,
                   const std::filesystem::path& metrics_csv) {
  {
    std::ofstream out(losses_csv, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + losses_csv.string() + "' for writing");
    out << "step,epoch,d_loss,g_loss\n";
    for (const StepRecord& s : log.steps) {
      out << s.step << ',' << s.epoch << ',' << fmt_double(s.d_loss) << ','
          << fmt_double(s.g_loss) << '\n';
    }
    if (!out) throw IoError("short write to '" + losses_csv.string() + "'");
  }
  {
    std::ofstream out(metrics_csv, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + metrics_csv.string() + "' for writing");
    out << "epoch,fid,kid,is_mean,is_std,extractor_id,n_eval\n";
    for (const MetricPoint& m : log.metrics) {
      out << m.epoch << ',' << fmt_double(m.fid) << ',' << fmt_double(m.kid) << ','
          << fmt_double(m.is_mean) << ',' << fmt_double(m.is_std) << ','
          << m.extractor_id << ',' << m.n_eval << '\n';
    }
    if (!out) throw IoError("short write to '" + metrics_csv.string() + "'");
  }
}

RunLog parse_runlog(const std::filesystem::path& losses_csv,
                    const std::filesystem::path& metrics_csv) {
  RunLog log;
  {
    std::ifstream in(losses_csv);
    if (!in) throw IoError("cannot open '" + losses_csv.string() + "'");
    std::string line;
    if (!std::getline(in, line) || line != "step,epoch,d_loss,g_loss") {
      throw IoError("'" + losses_csv.string() + "': unexpected header");
    }
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split_csv_line(line);
      if (f.size() != 4) throw IoError("'" + losses_csv.string() + "': bad row");
      log.steps.push_back({std::stoull(f[0]), std::stoull(f[1]), std::stod(f[2]),
                           std::stod(f[3])});
    }
  }
  {
    std::ifstream in(metrics_csv);
    if (!in) throw IoError("cannot open '" + metrics_csv.string() + "'");
    std::string line;
    if (!std::getline(in, line) ||
        line != "epoch,fid,kid,is_mean,is_std,extractor_id,n_eval") {
      throw IoError("'" + metrics_csv.string() + "': unexpected header");
    }
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split_csv_line(line);
      if (f.size() != 7) throw IoError("'" + metrics_csv.string() + "': bad row");
      MetricPoint m;
      m.epoch = std::stoull(f[0]);
      m.fid = std::stod(f[1]);
      m.kid = std::stod(f[2]);
      m.is_mean = std::stod(f[3]);
      m.is_std = std::stod(f[4]);
      m.extractor_id = f[5];
      m.n_eval = std::stoull(f[6]);
      log.metrics.push_back(std::move(m));
    }
  }
  return log;
}

void export_samples(Generator& gen, std::size_t count, std::size_t grid_cols,
                    const std::filesystem::path& path, std::uint64_t seed,
                    LatentDist dist) {
  if (count == 0) throw ConfigError("export_samples: count must be >= 1");
  const Tensor images = generate_images(gen, count, seed, dist);
  write_png(tile_grid(images, grid_cols), path);
}

// ---------------------------------------------------------------------------
// Lock file
// ---------------------------------------------------------------------------

DirectoryLock::DirectoryLock(const std::filesystem::path& dir)
    : lock_path_(dir / ".hqgan.lock") {
  std::filesystem::create_directories(dir);
  if (std::filesystem::exists(lock_path_)) {
    throw ConfigError("output directory '" + dir.string() +
                      "' is locked by another run (remove " + lock_path_.string() +
                      " if stale)");
  }
  std::ofstream out(lock_path_);
  if (!out) throw IoError("cannot create lock file '" + lock_path_.string() + "'");
  out << "locked\n";
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  std::filesystem::remove(lock_path_, ec);
}

// ---------------------------------------------------------------------------
// run_experiment
// ---------------------------------------------------------------------------

namespace {

struct RunData {
  Dataset train;
  Dataset eval;
};

Dataset cifar_pretrain_split(const Cifar10& c10, const std::vector<int>& targets,
                             std::size_t per_class_cap) {
  std::set<int> excluded(targets.begin(), targets.end());
  Dataset out;
  out.image_size = c10.train.image_size;
  for (int label = 0; label <= 9; ++label) {
    if (excluded.count(label)) continue;
    Dataset one = cap_dataset(filter_class(c10.train, {label}), per_class_cap);
    out.images.insert(out.images.end(), one.images.begin(), one.images.end());
  }
  return out;
}

std::vector<int> synthetic_pretrain_classes(const std::vector<int>& targets) {
  std::set<int> excluded(targets.begin(), targets.end());
  std::vector<int> out;
  for (const int kind : {kDisc, kSquare, kBar}) {
    if (!excluded.count(kind)) out.push_back(kind);
  }
  // A target list covering every shape leaves nothing disjoint; fall back to
  // the full trio for the classifier (still a valid extractor).
  if (out.size() < 2) out = {kDisc, kSquare, kBar};
  return out;
}

}  // namespace

void run_experiment(const ExperimentConfig& cfg) {
  if (!cfg.pretrained.empty() && !std::filesystem::exists(cfg.pretrained)) {
    throw ConfigError("pretrained weights '" + cfg.pretrained.string() +
                      "' do not exist");
  }

  DirectoryLock lock(cfg.out_dir);

  // Assemble datasets.
  Dataset pretrain_data;
  std::size_t pretrain_classes = 0;
  std::vector<RunData> runs;
  if (cfg.dataset == "cifar10") {
    if (cfg.data_dir.empty() || !std::filesystem::exists(cfg.data_dir)) {
      throw ConfigError("cifar10 dataset directory '" + cfg.data_dir.string() +
                        "' does not exist (set data_dir or --data-dir)");
    }
    const Cifar10 c10 = load_cifar10(cfg.data_dir);
    pretrain_data = cifar_pretrain_split(c10, cfg.classes, cfg.pretrain_per_class);
    pretrain_classes = 10 - cfg.classes.size();
    for (const int cls : cfg.classes) {
      RunData rd;
      rd.train = cap_dataset(filter_class(c10.train, {cls}), cfg.sample_cap);
      rd.eval = filter_class(c10.test, {cls});
      runs.push_back(std::move(rd));
    }
  } else {
    const auto pre_classes = synthetic_pretrain_classes(cfg.classes);
    pretrain_data =
        synthetic_shapes_dataset(cfg.pretrain_per_class, cfg.image_size, pre_classes,
                                 derive_seed(cfg.train.seed, "pretrain_data"));
    pretrain_classes = pre_classes.size();
    for (const int cls : cfg.classes) {
      const std::size_t n_train =
          cfg.sample_cap > 0 ? std::min(cfg.sample_cap, cfg.synthetic_per_class)
                             : cfg.synthetic_per_class;
      RunData rd;
      rd.train = synthetic_shapes_dataset(
          n_train, cfg.image_size, {cls},
          derive_seed(cfg.train.seed, "train_data", static_cast<std::uint64_t>(cls)));
      rd.eval = synthetic_shapes_dataset(
          cfg.synthetic_eval_count, cfg.image_size, {cls},
          derive_seed(cfg.train.seed, "eval_data", static_cast<std::uint64_t>(cls)));
      runs.push_back(std::move(rd));
    }
  }

  BackboneConfig backbone_cfg;
  backbone_cfg.stage_channels = cfg.backbone_channels;
  backbone_cfg.input_size = cfg.image_size;

  // The extractor classifier is always trained in-run; --pretrained only
  // replaces the discriminator initialization.
  PretrainOptions popts;
  popts.epochs = cfg.pretrain_epochs;
  popts.seed = derive_seed(cfg.train.seed, "pretrain");
  std::shared_ptr<Classifier> classifier;
  auto [backbone_store, report] =
      pretrain_backbone(pretrain_data, pretrain_classes, backbone_cfg, popts,
                        &classifier);
  ClassifierExtractor extractor(classifier);

  save_weights(backbone_store, cfg.out_dir / "pretrained_backbone.hqws");
  save_weights(export_state(classifier->state_entries()),
               cfg.out_dir / "extractor.hqws");
  {
    std::ofstream out(cfg.out_dir / "pretrain_report.csv", std::ios::trunc);
    out << "epoch,loss\n";
    for (std::size_t e = 0; e < report.epoch_losses.size(); ++e) {
      out << (e + 1) << ',' << fmt_double(report.epoch_losses[e]) << '\n';
    }
    out << "# final_accuracy," << fmt_double(report.final_accuracy) << '\n';
  }

  const WeightStore init_store =
      cfg.pretrained.empty() ? backbone_store : load_weights(cfg.pretrained);

  for (std::size_t r = 0; r < runs.size(); ++r) {
    const int cls = cfg.classes[r];
    const std::filesystem::path run_dir =
        runs.size() == 1 ? cfg.out_dir
                         : cfg.out_dir / ("class_" + std::to_string(cls));
    std::filesystem::create_directories(run_dir);

    GeneratorConfig gcfg;
    gcfg.block_kind = cfg.generator_kind;
    gcfg.n_qubits = cfg.n_qubits;
    gcfg.base_channels = cfg.gen_base_channels;
    gcfg.output_size = cfg.image_size;
    Generator gen(gcfg, derive_seed(cfg.train.seed, "gen_init", r));

    DiscriminatorConfig dcfg;
    dcfg.backbone = backbone_cfg;
    dcfg.head_kind = cfg.discriminator_kind;
    dcfg.n_qubits = cfg.n_qubits;
    Discriminator disc(dcfg, derive_seed(cfg.train.seed, "disc_init", r));
    import_state(disc.backbone().state_entries(), init_store);

    GanTrainer trainer(gen, disc, cfg.train);
    const RunLog log = trainer.train(
        runs[r].train, runs[r].eval, &extractor, [&](std::size_t epoch) {
          export_samples(gen, 16, 4,
                         run_dir / ("samples_epoch_" + std::to_string(epoch) + ".png"),
                         derive_seed(cfg.train.seed, "sample_grid", epoch),
                         cfg.train.latent);
        });

    export_curves(log, run_dir / "runlog.csv", run_dir / "metrics.csv");
    save_weights(export_state(gen.state_entries()), run_dir / "generator.hqws");
    save_weights(export_state(disc.state_entries()), run_dir / "discriminator.hqws");
  }
}

}  // namespace hqgan

// SPDX-License-Identifier: Apache-2.0
#include "camc/cli.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "camc/crc32.hpp"
#include "camc/datasetio.hpp"
#include "camc/evalreport.hpp"
#include "camc/log.hpp"
#include "camc/models.hpp"
#include "camc/numcore/checkpoint.hpp"
#include "camc/sigsyn.hpp"
#include "camc/splitnet/device.hpp"
#include "camc/splitnet/server.hpp"
#include "camc/train.hpp"

namespace camc::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kCheckpoint = "checkpoint.camcpt";
constexpr const char* kDatasetFile = "dataset.camcds";

std::atomic<bool> g_interrupted{false};

// ---- config ------------------------------------------------------------------

std::string kind_name(const json& j) {
  switch (j.type()) {
    case json::value_t::object: return "object";
    case json::value_t::array: return "array";
    case json::value_t::string: return "string";
    case json::value_t::boolean: return "boolean";
    case json::value_t::null: return "null";
    default: return "number";
  }
}

bool is_inf_token(const json& j) { return j.is_string() && (j == "inf" || j == "+inf"); }

double snr_value(const json& j, const std::string& key) {
  if (j.is_number()) return j.get<double>();
  if (is_inf_token(j)) return channel::kInfiniteSnr;
  throw UsageError(key + ": expected a number or \"inf\"");
}

json snr_json(double v) { return std::isinf(v) ? json("inf") : json(v); }

double parse_snr_flag(const std::string& s) {
  if (s == "inf" || s == "+inf") return channel::kInfiniteSnr;
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError("not an SNR: " + s);
}

sigsyn::DatasetConfig dataset_config(const json& d) {
  sigsyn::DatasetConfig c;
  c.classes.clear();
  for (const auto& name : d.at("classes")) {
    const auto cls = sigsyn::class_from_name(name.get<std::string>());
    if (!cls) throw UsageError("dataset.classes: unknown class " + name.get<std::string>());
    c.classes.push_back(*cls);
  }
  const auto frames = d.at("frames_per_class_per_snr").get<std::int64_t>();
  if (frames <= 0) throw UsageError("dataset.frames_per_class_per_snr must be positive, got " + std::to_string(frames));
  c.frames_per_class_per_snr = static_cast<std::size_t>(frames);
  const auto len = d.at("frame_length").get<std::int64_t>();
  if (len <= 0) throw UsageError("dataset.frame_length must be positive");
  c.frame_length = static_cast<std::size_t>(len);
  c.sps = d.at("sps").get<int>();
  c.snr_grid_db = d.at("snr_grid_db").get<std::vector<int>>();
  c.seed = d.at("seed").get<std::uint64_t>();
  c.max_freq_offset = d.at("max_freq_offset").get<double>();
  c.random_phase = d.at("random_phase").get<bool>();
  const auto gain = d.at("gain_model").get<std::string>();
  if (gain == "unit")
    c.gain_model = sigsyn::GainModel::Unit;
  else if (gain == "rayleigh")
    c.gain_model = sigsyn::GainModel::RayleighBlock;
  else
    throw UsageError("dataset.gain_model: expected unit or rayleigh, got " + gain);
  c.normalize_ap = d.at("normalize_ap").get<bool>();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("dataset: ") + e.what());
  }
  return c;
}

train::TrainConfig train_config(const json& t) {
  train::TrainConfig c;
  c.lr = t.at("lr").get<double>();
  c.batch_size = t.at("batch_size").get<std::size_t>();
  c.patience = t.at("patience").get<std::size_t>();
  c.max_epochs = t.at("max_epochs").get<std::size_t>();
  c.train_fraction = t.at("train_fraction").get<double>();
  c.val_fraction = t.at("val_fraction").get<double>();
  c.test_fraction = t.at("test_fraction").get<double>();
  c.seed = t.at("seed").get<std::uint64_t>();
  const auto& s = t.at("schedule");
  const auto kind = s.at("kind").get<std::string>();
  if (kind == "noiseless")
    c.schedule = train::SnrSchedule::noiseless();
  else if (kind == "fixed")
    c.schedule = train::SnrSchedule::fixed(snr_value(s.at("fixed_db"), "train.schedule.fixed_db"));
  else if (kind == "uniform")
    c.schedule = train::SnrSchedule::uniform(s.at("lo_db").get<double>(), s.at("hi_db").get<double>());
  else
    throw UsageError("train.schedule.kind: expected noiseless, fixed or uniform, got " + kind);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("train: ") + e.what());
  }
  return c;
}

// ---- run directories -----------------------------------------------------------

fs::path run_root() {
  const char* env = std::getenv("CAMC_RUN_DIR");
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("runs");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

struct Run {
  std::string command;
  fs::path dir;
  json config;
  std::vector<std::string> outputs;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  fs::path file(const std::string& name) {
    outputs.push_back(name);
    return dir / name;
  }

  void finish(const std::vector<std::string>& argv) {
    json meta;
    meta["command"] = command;
    meta["argv"] = argv;
    meta["config_hash"] = config_hash(config);
    meta["outputs"] = outputs;
    meta["elapsed_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_text(dir / (command + ".run.json"), meta.dump(2) + "\n");
  }
};

Run new_run(const std::string& command, const json& resolved) {
  Run r;
  r.command = command;
  r.config = resolved;
  r.dir = run_root() / (command + "-" + config_hash(resolved));
  fs::create_directories(r.dir);
  write_text(r.dir / "config.json", resolved.dump(2) + "\n");
  return r;
}

// Opens a training run directory; derived commands record their own config next to it.
Run open_run(const std::string& command, const fs::path& dir, json resolved) {
  if (!fs::exists(dir / "config.json")) throw UsageError("--run: " + dir.string() + " has no config.json");
  Run r;
  r.command = command;
  r.dir = dir;
  r.config = std::move(resolved);
  write_text(dir / (command + ".config.json"), r.config.dump(2) + "\n");
  return r;
}

// ---- models and data -----------------------------------------------------------

struct Pipeline {
  std::string kind;
  std::optional<models::Model> sscnet, mcnet, direct;
};

Pipeline build_pipeline(const json& model, std::size_t frame_length, std::size_t classes) {
  Pipeline p;
  p.kind = model.at("kind").get<std::string>();
  if (p.kind == "c-amc") {
    const auto n = model.at("embedding").get<std::size_t>();
    p.sscnet = models::build_sscnet(frame_length, n);
    p.mcnet = models::build_mcnet(n, classes);
  } else if (p.kind == "sscnet-dc") {
    p.direct = models::build_sscnet_dc(frame_length, classes);
  } else if (p.kind == "lstmnet-dc") {
    p.direct = models::build_lstmnet_dc(frame_length, classes);
  } else {
    throw UsageError("model.kind: expected c-amc, sscnet-dc or lstmnet-dc, got " + p.kind);
  }
  return p;
}

std::vector<const models::Param*> all_params(const Pipeline& p) {
  std::vector<const models::Param*> out;
  for (const auto* m : {&p.sscnet, &p.mcnet, &p.direct})
    if (*m)
      for (const auto* prm : std::as_const(**m).params()) out.push_back(prm);
  return out;
}

void load_into(models::Model& m, const std::vector<nc::NamedTensor>& all) {
  std::vector<nc::NamedTensor> mine;
  const std::string prefix = m.id() + "/";
  for (const auto& t : all)
    if (t.name.rfind(prefix, 0) == 0) mine.push_back(t);
  nc::assign_checkpoint(mine, m.params());
}

fs::path dataset_path(const Run& run, const json& cfg) {
  const auto p = cfg.at("dataset").at("path").get<std::string>();
  if (!p.empty()) return p;
  return run.dir / kDatasetFile;
}

// Reads the run's dataset, synthesising it into the run directory when no path is configured.
datasetio::Dataset load_or_generate(Run& run) {
  const fs::path path = dataset_path(run, run.config);
  if (run.config.at("dataset").at("path").get<std::string>().empty() && !fs::exists(path)) {
    log::info("synthesising dataset into " + path.string());
    sigsyn::generate_dataset(dataset_config(run.config.at("dataset")), path);
    run.outputs.push_back(kDatasetFile);
  }
  return datasetio::read_dataset(path);
}

struct Trained {
  json config;
  datasetio::Dataset ds;
  train::Features features;
  train::Split split;
  Pipeline pipeline;
  std::uint32_t checkpoint_crc = 0;
};

Trained load_trained(const fs::path& dir) {
  Trained t;
  t.config = read_json(dir / "config.json");
  Run probe;
  probe.dir = dir;
  probe.config = t.config;
  t.ds = datasetio::read_dataset(dataset_path(probe, t.config));
  t.features = train::extract_features(t.ds);
  t.split = train::split_dataset(t.ds, train_config(t.config.at("train")));
  t.pipeline = build_pipeline(t.config.at("model"), t.ds.header.frame_length, t.ds.header.class_names.size());
  const auto bytes = nc::read_file(dir / kCheckpoint);
  t.checkpoint_crc = crc32(bytes);
  const auto tensors = nc::decode_checkpoint(bytes);
  for (auto* m : {&t.pipeline.sscnet, &t.pipeline.mcnet, &t.pipeline.direct})
    if (*m) load_into(**m, tensors);
  return t;
}

std::unique_ptr<eval::Classifier> classifier(Pipeline& p) {
  if (p.kind == "c-amc") return std::make_unique<eval::SplitClassifier>(*p.sscnet, *p.mcnet);
  return std::make_unique<eval::DirectClassifier>(*p.direct);
}

std::vector<int> sensing_grid(const json& cfg, const train::Features& f) {
  auto v = cfg.at("eval").at("sensing_snrs").get<std::vector<int>>();
  if (!v.empty()) return v;
  std::set<int> s(f.snr_db.begin(), f.snr_db.end());
  return {s.begin(), s.end()};
}

std::vector<double> snr_list(const json& arr, const std::string& key) {
  std::vector<double> out;
  for (const auto& v : arr) out.push_back(snr_value(v, key));
  return out;
}

// ---- flag plumbing -------------------------------------------------------------

struct Common {
  std::string config_path;
  std::vector<std::string> set;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("--set", c.set, "override a config value, e.g. train.lr=0.01");
}

// Applies "a.b.c=value" overrides; value is parsed as JSON, falling back to a string.
void apply_sets(json& cfg, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set: expected key=value, got " + s);
    json patch;
    json* node = &patch;
    std::stringstream keys(s.substr(0, eq));
    std::string key;
    while (std::getline(keys, key, '.')) node = &(*node)[key];
    const std::string raw = s.substr(eq + 1);
    try {
      *node = json::parse(raw);
    } catch (const json::exception&) {
      *node = raw;
    }
    merge_config(cfg, patch);
  }
}

json resolve(const Common& c) {
  json cfg = default_config();
  if (!c.config_path.empty()) merge_config(cfg, read_json(c.config_path));
  apply_sets(cfg, c.set);
  return cfg;
}

template <class T>
void override_if(CLI::Option* opt, json& node, const T& value) {
  if (opt != nullptr && opt->count() > 0) node = value;
}

void print_table(std::ostream& out, const eval::AccuracyTable& t) { out << eval::accuracy_csv(t); }

}  // namespace

// ---- public config helpers -------------------------------------------------------

json default_config() {
  json classes = json::array();
  for (auto n : sigsyn::class_names()) classes.push_back(std::string(n));
  json transmission_grid = json::array();
  for (int db = -10; db <= 18; db += 2) transmission_grid.push_back(static_cast<double>(db));
  return {
      {"dataset",
       {{"path", ""},
        {"classes", classes},
        {"frames_per_class_per_snr", 100},
        {"frame_length", 512},
        {"sps", 8},
        {"snr_grid_db", sigsyn::DatasetConfig::default_snr_grid()},
        {"seed", 1},
        {"max_freq_offset", 5e-4},
        {"random_phase", true},
        {"gain_model", "unit"},
        {"normalize_ap", true}}},
      {"model", {{"kind", "c-amc"}, {"embedding", 64}}},
      {"train",
       {{"lr", 0.001},
        {"batch_size", 200},
        {"patience", 30},
        {"max_epochs", 150},
        {"train_fraction", 0.6},
        {"val_fraction", 0.2},
        {"test_fraction", 0.2},
        {"seed", 1},
        {"schedule", {{"kind", "uniform"}, {"fixed_db", 0.0}, {"lo_db", -10.0}, {"hi_db", 18.0}}}}},
      {"eval",
       {{"sensing_snrs", json::array()},
        {"transmission_snr_db", 18.0},
        {"transmission_snrs", transmission_grid},
        {"rates", {8, 16, 32}},
        {"confusion_snr", 10},
        {"seed", 1}}},
  };
}

void merge_config(json& base, const json& user, const std::string& where) {
  if (!user.is_object()) throw UsageError((where.empty() ? "config" : where) + ": expected an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw UsageError("unknown config key: " + path);
    json& slot = base[key];
    if (slot.is_object()) {
      merge_config(slot, value, path);
      continue;
    }
    const bool ok = kind_name(slot) == kind_name(value) || (slot.is_number() && is_inf_token(value)) ||
                    (slot.is_string() && is_inf_token(slot) && value.is_number());
    if (!ok) throw UsageError(path + ": expected " + kind_name(slot) + ", got " + kind_name(value));
    slot = value;
  }
}

std::string config_hash(const json& resolved) {
  const std::string text = resolved.dump();
  const auto crc = crc32(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08x", crc);
  return buf;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Split-computing automatic modulation classification"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "only log warnings and errors");

  Common common;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "synthesise a dataset");
  add_common(gen, common);
  long long frames = 0;
  std::size_t gen_len = 0;
  std::uint64_t gen_seed = 0;
  std::vector<std::string> gen_classes;
  auto* o_frames = gen->add_option("--frames", frames, "frames per (class, SNR) cell");
  auto* o_len = gen->add_option("--L", gen_len, "frame length");
  auto* o_seed = gen->add_option("--seed", gen_seed, "dataset seed");
  auto* o_classes = gen->add_option("--classes", gen_classes, "class names")->delimiter(',');

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  add_common(tr, common);
  std::string data_path, model_kind;
  std::size_t tr_n = 0, epochs = 0, patience = 0, batch = 0;
  double tr_r = 0, lr = 0;
  std::uint64_t tr_seed = 0;
  auto* o_data = tr->add_option("--data", data_path, "dataset file (default: synthesise from config)")
                     ->check(CLI::ExistingFile);
  auto* o_model = tr->add_option("--model", model_kind, "c-amc, sscnet-dc or lstmnet-dc");
  auto* o_n = tr->add_option("--N", tr_n, "embedding length");
  auto* o_r = tr->add_option("--r", tr_r, "compression rate (sets N = 2L/r)");
  auto* o_epochs = tr->add_option("--epochs", epochs, "maximum epochs");
  auto* o_patience = tr->add_option("--patience", patience, "early-stopping patience");
  auto* o_batch = tr->add_option("--batch", batch, "batch size");
  auto* o_lr = tr->add_option("--lr", lr, "learning rate");
  auto* o_tseed = tr->add_option("--seed", tr_seed, "training seed");

  // eval, sweep-grid, confusion, serve, device share --run
  std::string run_dir;
  auto* ev = app.add_subcommand("eval", "accuracy against sensing SNR for a trained run");
  ev->add_option("--run", run_dir, "training run directory")->required()->check(CLI::ExistingDirectory);
  std::string ev_tx;
  std::vector<int> ev_snrs;
  auto* o_evtx = ev->add_option("--tx-snr", ev_tx, "transmission SNR in dB or inf");
  auto* o_evsnrs = ev->add_option("--snrs", ev_snrs, "sensing SNR bins")->delimiter(',');

  auto* sr = app.add_subcommand("sweep-r", "train and evaluate one pipeline per compression rate");
  add_common(sr, common);
  std::vector<double> rates;
  std::string sr_data;
  auto* o_rates = sr->add_option("--rates", rates, "compression rates")->delimiter(',');
  auto* o_srdata = sr->add_option("--data", sr_data, "dataset file")->check(CLI::ExistingFile);
  auto* o_srepochs = sr->add_option("--epochs", epochs, "maximum epochs");

  auto* sg = app.add_subcommand("sweep-grid", "sensing x transmission SNR grid for a trained run");
  sg->add_option("--run", run_dir, "training run directory")->required()->check(CLI::ExistingDirectory);
  std::vector<std::string> sg_tx;
  auto* o_sgtx = sg->add_option("--tx-snrs", sg_tx, "transmission SNRs")->delimiter(',');

  auto* cf = app.add_subcommand("confusion", "confusion matrix for a trained run");
  cf->add_option("--run", run_dir, "training run directory")->required()->check(CLI::ExistingDirectory);
  int cf_snr = 0;
  std::string cf_tx;
  auto* o_cfsnr = cf->add_option("--snr", cf_snr, "sensing SNR bin");
  auto* o_cftx = cf->add_option("--tx-snr", cf_tx, "transmission SNR in dB or inf");

  auto* sm = app.add_subcommand("summary", "parameter and FLOP accounting");
  std::string sm_model = "sscnet";
  std::size_t sm_l = 512, sm_n = 64, sm_m = models::kDefaultClasses;
  bool sm_csv = false;
  sm->add_option("--model", sm_model, "sscnet, mcnet, sscnet-dc or lstmnet-dc");
  sm->add_option("--L", sm_l, "frame length");
  sm->add_option("--N", sm_n, "embedding length");
  sm->add_option("--M", sm_m, "classes");
  sm->add_flag("--csv", sm_csv, "per-layer CSV instead of a table");

  auto* sv = app.add_subcommand("serve", "host the classifier of a trained run");
  sv->add_option("--run", run_dir, "training run directory")->required()->check(CLI::ExistingDirectory);
  std::string host = "127.0.0.1", sv_tx = "inf";
  std::uint16_t port = 7464;
  double duration = 0;
  sv->add_option("--host", host, "listen address");
  sv->add_option("--port", port, "listen port (0 picks one)");
  sv->add_option("--tx-snr", sv_tx, "server-side channel noise, dB or inf");
  sv->add_option("--duration", duration, "stop after this many seconds (0 runs until interrupted)");

  auto* dv = app.add_subcommand("device", "stream embeddings of test frames to a server");
  dv->add_option("--run", run_dir, "training run directory")->required()->check(CLI::ExistingDirectory);
  std::size_t dv_frames = 1000;
  std::string dv_tx = "inf";
  dv->add_option("--host", host, "server address");
  dv->add_option("--port", port, "server port");
  dv->add_option("--frames", dv_frames, "number of test frames");
  dv->add_option("--tx-snr", dv_tx, "device-side channel noise, dB or inf");

  auto* in = app.add_subcommand("inspect", "dataset statistics");
  std::string in_path;
  in->add_option("data", in_path, "dataset file")->required()->check(CLI::ExistingFile);

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  log::set_min_level(quiet ? log::Level::Warn : log::Level::Info);
  const std::vector<std::string>& argv = args;

  try {
    if (gen->parsed()) {
      json cfg = resolve(common);
      if (o_frames->count() > 0 && frames <= 0)
        throw UsageError("--frames: must be positive, got " + std::to_string(frames));
      override_if(o_frames, cfg["dataset"]["frames_per_class_per_snr"], frames);
      override_if(o_len, cfg["dataset"]["frame_length"], gen_len);
      override_if(o_seed, cfg["dataset"]["seed"], gen_seed);
      override_if(o_classes, cfg["dataset"]["classes"], gen_classes);
      const auto dc = dataset_config(cfg.at("dataset"));
      cfg["dataset"]["path"] = "";
      Run run = new_run("gen-data", cfg);
      const auto summary = sigsyn::generate_dataset(dc, run.file(kDatasetFile));
      out << summary.path.string() << "\n";
      log::info("wrote " + std::to_string(summary.frame_count) + " frames");
      run.finish(argv);
      return kExitOk;
    }

    if (tr->parsed()) {
      json cfg = resolve(common);
      if (o_data->count() > 0) cfg["dataset"]["path"] = fs::absolute(data_path).string();
      override_if(o_model, cfg["model"]["kind"], model_kind);
      override_if(o_epochs, cfg["train"]["max_epochs"], epochs);
      override_if(o_patience, cfg["train"]["patience"], patience);
      override_if(o_batch, cfg["train"]["batch_size"], batch);
      override_if(o_lr, cfg["train"]["lr"], lr);
      override_if(o_tseed, cfg["train"]["seed"], tr_seed);
      override_if(o_n, cfg["model"]["embedding"], tr_n);
      const auto tc = train_config(cfg.at("train"));

      // The frame length comes from the file when one is given.
      std::size_t frame_length = cfg["dataset"]["frame_length"].get<std::size_t>();
      if (o_data->count() > 0) frame_length = datasetio::DatasetReader(data_path).header().frame_length;
      if (o_r->count() > 0) {
        if (o_n->count() > 0) throw UsageError("--N and --r are mutually exclusive");
        try {
          cfg["model"]["embedding"] = eval::embedding_for_rate(frame_length, tr_r);
        } catch (const std::invalid_argument& e) {
          throw UsageError(std::string("--r: ") + e.what());
        }
      }
      if (cfg["dataset"]["path"].get<std::string>().empty()) dataset_config(cfg.at("dataset"));

      Run run = new_run("train", cfg);
      const auto ds = load_or_generate(run);
      Pipeline p = build_pipeline(cfg.at("model"), ds.header.frame_length, ds.header.class_names.size());
      const auto result = p.kind == "c-amc" ? train::train(*p.sscnet, *p.mcnet, ds, tc) : train::train_direct(*p.direct, ds, tc);
      nc::save_checkpoint(run.file(kCheckpoint), all_params(p));
      write_text(run.file("history.csv"), train::history_csv(result.history));
      json split;
      split["train"] = result.split.train.size();
      split["val"] = result.split.val.size();
      split["test"] = result.split.test.size();
      json summary{{"best_epoch", result.history.best_epoch},
                   {"best_val_loss", result.history.best_val_loss},
                   {"epochs", result.history.epochs.size()},
                   {"stop_reason", train::to_string(result.history.reason)},
                   {"split", split}};
      write_text(run.file("train_summary.json"), summary.dump(2) + "\n");
      out << run.dir.string() << "\n";
      run.finish(argv);
      return kExitOk;
    }

    if (ev->parsed() || sg->parsed() || cf->parsed()) {
      Trained t = load_trained(run_dir);
      json cfg = t.config;
      override_if(o_evsnrs, cfg["eval"]["sensing_snrs"], ev_snrs);
      if (o_evtx->count() > 0) cfg["eval"]["transmission_snr_db"] = snr_json(parse_snr_flag(ev_tx));
      if (o_cftx->count() > 0) cfg["eval"]["transmission_snr_db"] = snr_json(parse_snr_flag(cf_tx));
      override_if(o_cfsnr, cfg["eval"]["confusion_snr"], cf_snr);
      if (o_sgtx->count() > 0) {
        json list = json::array();
        for (const auto& s : sg_tx) list.push_back(snr_json(parse_snr_flag(s)));
        cfg["eval"]["transmission_snrs"] = list;
      }
      const std::string command = ev->parsed() ? "eval" : sg->parsed() ? "sweep-grid" : "confusion";
      Run run = open_run(command, run_dir, cfg);
      auto c = classifier(t.pipeline);
      const auto& e = cfg.at("eval");
      const auto seed = e.at("seed").get<std::uint64_t>();
      const auto sensing = sensing_grid(cfg, t.features);
      const double tx = snr_value(e.at("transmission_snr_db"), "eval.transmission_snr_db");
      eval::Report report;
      if (command == "eval") {
        const auto table = eval::accuracy_vs_snr(*c, t.features, t.split.test, sensing, tx, seed);
        report.curves.push_back({"accuracy", table});
        print_table(out, table);
      } else if (command == "sweep-grid") {
        const auto txs = snr_list(e.at("transmission_snrs"), "eval.transmission_snrs");
        const auto table = eval::sweep_snr_grid(*c, t.features, t.split.test, sensing, txs, seed);
        report.grids.push_back({"snr_grid", table});
        print_table(out, table);
      } else {
        const auto m = eval::confusion_matrix(*c, t.features, t.split.test, t.ds.header.class_names,
                                              e.at("confusion_snr").get<int>(), tx, seed);
        report.matrices.push_back(m);
        out << eval::confusion_csv(m);
      }
      for (const auto& p : eval::emit_report(report, run.dir)) run.outputs.push_back(p.filename().string());
      run.finish(argv);
      return kExitOk;
    }

    if (sr->parsed()) {
      json cfg = resolve(common);
      if (o_srdata->count() > 0) cfg["dataset"]["path"] = fs::absolute(sr_data).string();
      override_if(o_srepochs, cfg["train"]["max_epochs"], epochs);
      override_if(o_rates, cfg["eval"]["rates"], rates);
      const auto tc = train_config(cfg.at("train"));
      Run run = new_run("sweep-r", cfg);
      const auto ds = load_or_generate(run);
      const auto rs = cfg.at("eval").at("rates").get<std::vector<double>>();
      const auto f = train::extract_features(ds);
      std::vector<eval::CompressionRun> runs;
      try {
        for (double r : rs) eval::embedding_for_rate(ds.header.frame_length, r);
      } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("--rates: ") + e.what());
      }
      const auto table = eval::sweep_compression(ds, rs, tc, sensing_grid(cfg, f),
                                                 snr_value(cfg["eval"]["transmission_snr_db"], "eval.transmission_snr_db"),
                                                 cfg["eval"]["seed"].get<std::uint64_t>(), &runs);
      for (const auto& cr : runs)
        write_text(run.file("history_r" + eval::format_snr(cr.r) + ".csv"), train::history_csv(cr.history));
      eval::Report report;
      report.curves.push_back({"sweep_r", table});
      for (const auto& p : eval::emit_report(report, run.dir)) run.outputs.push_back(p.filename().string());
      print_table(out, table);
      run.finish(argv);
      return kExitOk;
    }

    if (sm->parsed()) {
      models::Model m = sm_model == "sscnet"       ? models::build_sscnet(sm_l, sm_n)
                        : sm_model == "mcnet"      ? models::build_mcnet(sm_n, sm_m)
                        : sm_model == "sscnet-dc"  ? models::build_sscnet_dc(sm_l, sm_m)
                        : sm_model == "lstmnet-dc" ? models::build_lstmnet_dc(sm_l, sm_m)
                                                   : throw UsageError("--model: unknown model " + sm_model);
      out << (sm_csv ? models::summary_csv(m) : models::summary_text(m));
      return kExitOk;
    }

    if (sv->parsed()) {
      Trained t = load_trained(run_dir);
      if (t.pipeline.kind != "c-amc") throw UsageError("serve: run " + run_dir + " is not a split model");
      splitnet::ServerConfig sc;
      sc.host = host;
      sc.port = port;
      sc.transmission_snr_db = parse_snr_flag(sv_tx);
      sc.seed = t.config["eval"]["seed"].get<std::uint64_t>();
      splitnet::Server server(*t.pipeline.mcnet, t.checkpoint_crc, sc);
      server.start();
      out << "listening on " << host << ":" << server.port() << "\n" << std::flush;
      g_interrupted = false;
      std::signal(SIGINT, [](int) { g_interrupted = true; });
      std::signal(SIGTERM, [](int) { g_interrupted = true; });
      const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(duration);
      while (!g_interrupted && (duration <= 0 || std::chrono::steady_clock::now() < until))
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
      const auto st = server.stats();
      out << "connections=" << st.connections << " results=" << st.results << " errors=" << st.errors << "\n";
      return kExitOk;
    }

    if (dv->parsed()) {
      Trained t = load_trained(run_dir);
      if (t.pipeline.kind != "c-amc") throw UsageError("device: run " + run_dir + " is not a split model");
      std::vector<std::size_t> idx(t.split.test.begin(),
                                   t.split.test.begin() + static_cast<std::ptrdiff_t>(std::min(dv_frames, t.split.test.size())));
      splitnet::DeviceConfig dc;
      dc.host = host;
      dc.port = port;
      dc.transmission_snr_db = parse_snr_flag(dv_tx);
      dc.seed = t.config["eval"]["seed"].get<std::uint64_t>();
      auto& enc = *t.pipeline.sscnet;
      splitnet::Device device(enc.output_shape().at(0), t.ds.header.class_names.size(), t.checkpoint_crc, dc);
      const auto z = splitnet::encode_frames(enc, train::gather(t.features, idx));
      const auto rep = device.run_embeddings(z);
      std::size_t correct = 0, agree = 0;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        if (!rep.results[i].ok) continue;
        if (rep.results[i].argmax == t.features.labels[idx[i]]) ++correct;
        models::Tensor row({1, z.dim(1)});
        std::copy_n(z.data() + i * z.dim(1), z.dim(1), row.data());
        const auto local = models::classify(*t.pipeline.mcnet, row).vec();
        if (models::argmax(local) == rep.results[i].argmax) ++agree;
      }
      const std::size_t n = idx.size();
      json j{{"frames", n},
             {"failed", rep.failed},
             {"retransmits", rep.retransmits},
             {"accuracy", n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n)},
             {"local_argmax_agreement", n == 0 ? 0.0 : static_cast<double>(agree) / static_cast<double>(n)},
             {"embedding_frame_bytes", rep.embedding_frame_bytes},
             {"raw_iq_bytes", 8 * t.ds.header.frame_length},
             {"transmission_ratio", splitnet::transmission_ratio(t.ds.header.frame_length, rep.embedding_frame_bytes)},
             {"bytes_sent", rep.bytes_sent},
             {"bytes_received", rep.bytes_received}};
      out << j.dump(2) << "\n";
      return rep.failed == 0 ? kExitOk : kExitRuntime;
    }

    if (in->parsed()) {
      const auto st = datasetio::dataset_stats(in_path);
      json per_class = json::object(), per_snr = json::object();
      for (std::size_t i = 0; i < st.per_class.size(); ++i) per_class[st.class_names.at(i)] = st.per_class[i];
      for (const auto& [snr, n] : st.per_snr) per_snr[std::to_string(snr)] = n;
      json j{{"frame_count", st.frame_count},
             {"frame_length", st.frame_length},
             {"classes", st.class_names},
             {"per_class", per_class},
             {"per_snr", per_snr},
             {"cells", st.cells.size()},
             {"power_mean", st.power_mean},
             {"power_variance", st.power_variance}};
      out << j.dump(2) << "\n";
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace camc::cli

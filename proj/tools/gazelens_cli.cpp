// Command-line front end. Each subcommand is a thin adapter over one library
// operation; every run records its effective parameters as run-<name>.json in
// the output directory.

#include <gazelens/gazelens.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
namespace gz = gazelens;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string resolve_path(const fs::path& base_dir, const std::string& p) {
  if (p.empty()) return p;
  fs::path pp(p);
  if (pp.is_absolute()) return pp.lexically_normal().string();
  return (base_dir / pp).lexically_normal().string();
}

std::string relativize(const std::string& target, const fs::path& new_base) {
  if (target.empty()) return target;
  const fs::path abs_t = fs::absolute(fs::path(target)).lexically_normal();
  const fs::path abs_b = fs::absolute(new_base).lexically_normal();
  return abs_t.lexically_proximate(abs_b).string();
}

void absolutize_manifest(gz::ingest::DatasetManifest& m, const fs::path& base) {
  for (auto& r : m.trials) {
    r.gaze_log_path = resolve_path(base, r.gaze_log_path);
    r.fixations_path = resolve_path(base, r.fixations_path);
    r.image_path = resolve_path(base, r.image_path);
  }
}

void save_manifest_relative(gz::ingest::DatasetManifest m, const std::string& out_dir) {
  for (auto& r : m.trials) {
    r.gaze_log_path = relativize(r.gaze_log_path, out_dir);
    r.fixations_path = relativize(r.fixations_path, out_dir);
    r.image_path = relativize(r.image_path, out_dir);
  }
  gz::ingest::save_manifest(m, (fs::path(out_dir) / "manifest.jsonl").string());
}

gz::ingest::DatasetManifest load_manifest_absolute(const std::string& path) {
  auto m = gz::ingest::load_manifest(path);
  absolutize_manifest(m, fs::absolute(fs::path(path)).parent_path());
  return m;
}

void write_run_config(const std::string& out_dir, const std::string& name, nlohmann::json j) {
  j["command"] = name;
  gz::csv::write_text_file((fs::path(out_dir) / ("run-" + name + ".json")).string(),
                           j.dump(2) + "\n");
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("GAZELENS_SEED");
  if (s == nullptr || *s == '\0') return std::nullopt;
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (errno != 0 || end == s || *end != '\0')
    throw UsageError("GAZELENS_SEED must be a nonnegative integer");
  return v;
}

bool usable(const gz::TrialRecord& r) {
  return r.fixation_count >= gz::ingest::kMinUsableFixations;
}

gz::Scanpath load_record_scanpath(const gz::TrialRecord& r, double screen_w, double screen_h) {
  if (r.fixations_path.empty())
    throw gz::Error("trial " + r.trial_id + " has no fixations file; run detect first");
  return gz::fixdet::load_fixations_csv(r.fixations_path, screen_w, screen_h);
}

template <class T>
std::vector<T> render_chw(const gz::Scanpath& sp, const gz::render::RenderConfig& rc) {
  const gz::render::ScanpathImage img = gz::render::render_scanpath(sp, rc);
  const std::size_t plane = static_cast<std::size_t>(rc.out_w) * static_cast<std::size_t>(rc.out_h);
  std::vector<T> out(plane * 3);
  for (std::size_t p = 0; p < plane; ++p) {
    out[p] = static_cast<T>(img.pixels[3 * p] / 255.0);
    out[plane + p] = static_cast<T>(img.pixels[3 * p + 1] / 255.0);
    out[2 * plane + p] = static_cast<T>(img.pixels[3 * p + 2] / 255.0);
  }
  return out;
}

// Shared by the training and evaluation commands: deterministic split
// assignment from the seed, then scanpaths loaded for every assigned trial.
struct LoadedSplits {
  gz::ingest::DatasetManifest manifest;
  std::vector<gz::Scanpath> paths;             // indexed like manifest.trials
  std::vector<std::size_t> split_idx[3];       // train, val, test
};

LoadedSplits prepare_splits(const std::string& manifest_path, std::uint64_t seed, bool balance,
                            double screen_w, double screen_h, unsigned jobs) {
  LoadedSplits L;
  L.manifest = load_manifest_absolute(manifest_path);
  gz::eval::SplitConfig sc;
  sc.seed = seed;
  sc.balance = balance;
  gz::eval::balance_and_split(L.manifest, sc);
  L.paths.resize(L.manifest.trials.size());
  gz::parallel_for(L.manifest.trials.size(), [&](std::size_t i) {
    const auto& r = L.manifest.trials[i];
    if (r.split == gz::Split::train || r.split == gz::Split::val || r.split == gz::Split::test)
      L.paths[i] = load_record_scanpath(r, screen_w, screen_h);
  }, jobs);
  for (std::size_t i = 0; i < L.manifest.trials.size(); ++i) {
    switch (L.manifest.trials[i].split) {
      case gz::Split::train: L.split_idx[0].push_back(i); break;
      case gz::Split::val: L.split_idx[1].push_back(i); break;
      case gz::Split::test: L.split_idx[2].push_back(i); break;
      default: break;
    }
  }
  return L;
}

template <class T>
gz::nn::Dataset<T> dataset_for(const LoadedSplits& L, int which,
                               const gz::render::RenderConfig& rc, unsigned jobs) {
  gz::nn::Dataset<T> ds;
  ds.c = 3;
  ds.h = rc.out_h;
  ds.w = rc.out_w;
  const auto& idx = L.split_idx[which];
  ds.images.resize(idx.size());
  ds.labels.resize(idx.size());
  gz::parallel_for(idx.size(), [&](std::size_t k) {
    const auto& r = L.manifest.trials[idx[k]];
    ds.images[k] = render_chw<T>(L.paths[idx[k]], rc);
    ds.labels[k] = r.label == gz::RelevanceLabel::relevant ? 1 : 0;
  }, jobs);
  return ds;
}

void features_for(const LoadedSplits& L, int which, unsigned jobs,
                  gz::baselines::Matrix& X, std::vector<int>& y) {
  const auto& idx = L.split_idx[which];
  X.assign(idx.size(), {});
  y.assign(idx.size(), 0);
  gz::parallel_for(idx.size(), [&](std::size_t k) {
    const auto arr = gz::features::extract_features(L.paths[idx[k]]).as_array();
    X[k].assign(arr.begin(), arr.end());
    y[k] = L.manifest.trials[idx[k]].label == gz::RelevanceLabel::relevant ? 1 : 0;
  }, jobs);
}

std::string importance_pairs_csv(const std::vector<std::pair<std::string, double>>& imp) {
  std::string out = "feature,importance\n";
  for (const auto& [name, w] : imp) {
    out += name;
    out += ',';
    out += gz::csv::format_double(w);
    out += '\n';
  }
  return out;
}

std::string render_report_table(const gz::eval::ExperimentReport& r) {
  std::ostringstream os;
  os << "trials: train " << r.n_train << ", val " << r.n_val << ", test " << r.n_test << "\n\n";
  os << std::left << std::setw(8) << "method" << std::setw(7) << "split" << std::right
     << std::setw(7) << "tpr%" << std::setw(7) << "tnr%" << std::setw(7) << "acc%"
     << std::setw(8) << "auc" << std::setw(8) << "f1" << "\n";
  const char* split_names[3] = {"train", "val", "test"};
  for (const gz::eval::MethodMetrics* m : {&r.cnn, &r.forest, &r.svm}) {
    const gz::eval::MetricsReport* per[3] = {&m->train, &m->val, &m->test};
    for (int s = 0; s < 3; ++s) {
      os << std::left << std::setw(8) << m->method << std::setw(7) << split_names[s]
         << std::right << std::fixed << std::setprecision(1)
         << std::setw(7) << per[s]->tpr * 100.0
         << std::setw(7) << per[s]->tnr * 100.0
         << std::setw(7) << per[s]->accuracy * 100.0;
      os << std::setprecision(3);
      if (per[s]->roc_auc.has_value())
        os << std::setw(8) << *per[s]->roc_auc;
      else
        os << std::setw(8) << "-";
      os << std::setw(8) << per[s]->f1 << "\n";
      os.unsetf(std::ios::fixed);
    }
  }
  if (!r.epochs.empty()) {
    const auto& e = r.epochs.back();
    os << "\ncnn training: " << r.epochs.size() << " epochs, final train loss "
       << std::fixed << std::setprecision(4) << e.train_loss << ", train acc "
       << std::setprecision(3) << e.train_acc << ", val acc " << e.val_acc << "\n";
    os.unsetf(std::ios::fixed);
  }
  if (!r.importances.empty()) {
    os << "top features:";
    const std::size_t top = std::min<std::size_t>(5, r.importances.size());
    for (std::size_t i = 0; i < top; ++i)
      os << (i == 0 ? " " : ", ") << r.importances[i].first << " "
         << std::fixed << std::setprecision(3) << r.importances[i].second;
    os.unsetf(std::ios::fixed);
    os << "\n";
  }
  return std::move(os).str();
}

// --config merge: values from the JSON file become defaults for options of the
// invoked subcommand that were not given on the command line. Unknown keys are
// ignored so a recorded run-<name>.json can be replayed across subcommands.
void merge_config_into_args(const CLI::App& app, std::vector<std::string>& args) {
  std::string config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (config_path.empty() || args.empty() || args[0].empty() || args[0][0] == '-') return;
  const CLI::App* sub = app.get_subcommand_no_throw(args[0]);
  if (sub == nullptr) return;

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(gz::csv::read_text_file(config_path));
  } catch (const std::exception& e) {
    throw UsageError("config file " + config_path + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file " + config_path + ": expected a JSON object");

  for (const auto& [key, value] : j.items()) {
    if (key == "command" || key == "config") continue;
    const std::string flag = "--" + key;
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (opt == nullptr) continue;
    bool present = false;
    for (const auto& a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) present = true;
    if (present) continue;

    if (opt->get_type_size_max() == 0) {  // plain flag
      const bool on = (value.is_boolean() && value.get<bool>()) ||
                      (value.is_number_integer() && value.get<long long>() != 0) ||
                      (value.is_string() && value.get<std::string>() == "true");
      if (on) args.push_back(flag);
      continue;
    }
    std::string text;
    if (value.is_string()) text = value.get<std::string>();
    else if (value.is_boolean()) text = value.get<bool>() ? "true" : "false";
    else if (value.is_number()) text = value.dump();
    else throw UsageError("config key " + key + ": expected a scalar value");
    args.push_back(flag + "=" + text);
  }
}

// ---------------------------------------------------------------------------
// Per-subcommand option bundles and actions.

struct SynthOpts {
  int n_per_class = 0;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string emit = "logs";
  double jitter_sigma = 6.0;
  bool no_dwell = false;
  double screen_w = gz::kDefaultScreenW;
  double screen_h = gz::kDefaultScreenH;
  unsigned jobs = 0;
  std::string config;
};

void run_synth(const SynthOpts& o) {
  fs::create_directories(o.out_dir);
  gz::synth::SynthConfig sc;
  sc.screen_w = o.screen_w;
  sc.screen_h = o.screen_h;
  sc.jitter_sigma = o.jitter_sigma;
  sc.terminal_dwell = !o.no_dwell;
  write_run_config(o.out_dir, "synth",
                   {{"n-per-class", o.n_per_class},
                    {"seed", o.seed},
                    {"out-dir", o.out_dir},
                    {"emit", o.emit},
                    {"jitter-sigma", o.jitter_sigma},
                    {"no-dwell", o.no_dwell},
                    {"screen-w", o.screen_w},
                    {"screen-h", o.screen_h},
                    {"jobs", o.jobs}});

  const auto trials = gz::synth::generate_dataset(o.n_per_class, sc, o.seed, o.jobs);
  const bool logs = o.emit == "logs";
  const std::string sub_name = logs ? "logs" : "fixations";
  const fs::path sub_dir = fs::path(o.out_dir) / sub_name;
  fs::create_directories(sub_dir);

  std::vector<gz::TrialRecord> recs(trials.size());
  gz::parallel_for(trials.size(), [&](std::size_t i) {
    const auto& t = trials[i];
    gz::TrialRecord r;
    r.trial_id = t.path.trial_id;
    r.participant_id = "synth";
    r.document_id = t.path.trial_id;
    r.label = t.label;
    r.fixation_count = static_cast<int>(t.path.fixations.size());
    const std::string rel = sub_name + "/" + t.path.trial_id + ".csv";
    const std::string abs = (sub_dir / (t.path.trial_id + ".csv")).string();
    if (logs) {
      gz::Rng rng(gz::derive_seed(o.seed, 0x8000000000000000ull + i));
      gz::csv::write_text_file(abs, gz::ingest::write_gaze_log(gz::synth::to_gaze_log(t.path, rng)));
      r.gaze_log_path = rel;
    } else {
      gz::fixdet::save_fixations_csv(t.path, abs);
      r.fixations_path = rel;
    }
    r.split = r.fixation_count < gz::ingest::kMinUsableFixations ? gz::Split::excluded
                                                                 : gz::Split::unassigned;
    recs[i] = std::move(r);
  }, o.jobs);

  gz::ingest::DatasetManifest m;
  m.trials = std::move(recs);
  gz::ingest::save_manifest(m, (fs::path(o.out_dir) / "manifest.jsonl").string());
  std::cout << "synth: wrote " << trials.size() << " trial " << sub_name << " and manifest to "
            << o.out_dir << "\n";
}

struct IngestOpts {
  std::string logs_dir;
  std::string labels;
  std::string out_dir;
  std::string delimiter = ",";
  bool no_header = false;
  int col_t = 0, col_x = 1, col_y = 2, col_valid = 3;
  unsigned jobs = 0;
  std::string config;
};

void run_ingest(const IngestOpts& o) {
  fs::create_directories(o.out_dir);
  if (o.delimiter.size() != 1) throw UsageError("--delimiter must be a single character");
  write_run_config(o.out_dir, "ingest",
                   {{"logs-dir", o.logs_dir},
                    {"labels", o.labels},
                    {"out-dir", o.out_dir},
                    {"delimiter", o.delimiter},
                    {"no-header", o.no_header},
                    {"col-t", o.col_t},
                    {"col-x", o.col_x},
                    {"col-y", o.col_y},
                    {"col-valid", o.col_valid},
                    {"jobs", o.jobs}});

  struct LabelRow {
    gz::RelevanceLabel label = gz::RelevanceLabel::irrelevant;
    std::string participant = "p0";
    std::string document;
  };
  std::map<std::string, LabelRow> labels;
  gz::csv::for_each_line(gz::csv::read_text_file(o.labels),
                         [&](std::size_t line_no, std::string_view line) {
    if (line_no == 1 || line.empty()) return;
    const auto fields = gz::csv::split_fields(line, ',');
    if (fields.size() < 2)
      throw gz::Error("labels line " + std::to_string(line_no) + ": expected trial_id,label");
    LabelRow row;
    row.label = gz::relevance_from_string(std::string(fields[1]));
    if (fields.size() > 2 && !fields[2].empty()) row.participant = std::string(fields[2]);
    if (fields.size() > 3 && !fields[3].empty()) row.document = std::string(fields[3]);
    labels[std::string(fields[0])] = std::move(row);
  });

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(o.logs_dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw gz::Error("no .csv gaze logs found in " + o.logs_dir);

  gz::ingest::GazeLogFormat fmt;
  fmt.delimiter = o.delimiter[0];
  fmt.header = !o.no_header;
  fmt.col_t = o.col_t;
  fmt.col_x = o.col_x;
  fmt.col_y = o.col_y;
  fmt.col_valid = o.col_valid;

  std::vector<gz::TrialRecord> recs(files.size());
  gz::parallel_for(files.size(), [&](std::size_t i) {
    const std::string trial_id = files[i].stem().string();
    const auto it = labels.find(trial_id);
    if (it == labels.end()) throw gz::Error("no label for trial " + trial_id + " in " + o.labels);
    try {
      gz::ingest::load_gaze_log(files[i].string(), fmt);
    } catch (const gz::Error& e) {
      throw gz::Error(files[i].string() + ": " + e.what());
    }
    gz::TrialRecord r;
    r.trial_id = trial_id;
    r.participant_id = it->second.participant;
    r.document_id = it->second.document.empty() ? trial_id : it->second.document;
    r.label = it->second.label;
    r.gaze_log_path = fs::absolute(files[i]).lexically_normal().string();
    recs[i] = std::move(r);
  }, o.jobs);

  gz::ingest::DatasetManifest m;
  std::set<std::string> seen;
  for (auto& r : recs) {
    if (!seen.insert(r.trial_id).second) throw gz::ingest::DuplicateTrialId(r.trial_id);
    m.trials.push_back(std::move(r));
  }
  save_manifest_relative(std::move(m), o.out_dir);
  std::cout << "ingest: " << files.size() << " gaze logs -> " << o.out_dir
            << "/manifest.jsonl (run detect next)\n";
}

struct DetectOpts {
  std::string manifest;
  std::string out_dir;
  double velocity_threshold = 1000.0;
  double min_duration = gz::kMinFixationMs;
  bool keep_invalid = false;
  double screen_w = gz::kDefaultScreenW;
  double screen_h = gz::kDefaultScreenH;
  unsigned jobs = 0;
  std::string config;
};

void run_detect(const DetectOpts& o) {
  fs::create_directories(fs::path(o.out_dir) / "fixations");
  write_run_config(o.out_dir, "detect",
                   {{"manifest", o.manifest},
                    {"out-dir", o.out_dir},
                    {"velocity-threshold", o.velocity_threshold},
                    {"min-duration", o.min_duration},
                    {"keep-invalid", o.keep_invalid},
                    {"screen-w", o.screen_w},
                    {"screen-h", o.screen_h},
                    {"jobs", o.jobs}});

  auto m = load_manifest_absolute(o.manifest);
  gz::fixdet::IvtConfig ivt;
  ivt.velocity_threshold = o.velocity_threshold;
  ivt.min_fixation_duration = o.min_duration;
  ivt.drop_invalid_samples = !o.keep_invalid;

  gz::parallel_for(m.trials.size(), [&](std::size_t i) {
    auto& r = m.trials[i];
    if (r.gaze_log_path.empty()) {
      if (r.fixations_path.empty())
        throw gz::Error("trial " + r.trial_id + " has neither a gaze log nor fixations");
      return;  // already detected elsewhere; keep as-is
    }
    try {
      const auto samples = gz::ingest::load_gaze_log(r.gaze_log_path);
      const auto fixes = gz::fixdet::detect_fixations(samples, ivt);
      const auto sp = gz::Scanpath::assemble(r.trial_id, fixes, o.screen_w, o.screen_h);
      const std::string abs =
          (fs::path(o.out_dir) / "fixations" / (r.trial_id + ".csv")).string();
      gz::fixdet::save_fixations_csv(sp, abs);
      r.fixation_count = static_cast<int>(fixes.size());
      r.fixations_path = abs;
      r.split = r.fixation_count < gz::ingest::kMinUsableFixations ? gz::Split::excluded
                                                                   : gz::Split::unassigned;
    } catch (const gz::Error& e) {
      throw gz::Error("trial " + r.trial_id + ": " + e.what());
    }
  }, o.jobs);

  int excluded = 0;
  for (const auto& r : m.trials) excluded += r.split == gz::Split::excluded ? 1 : 0;
  const std::size_t total = m.trials.size();
  save_manifest_relative(std::move(m), o.out_dir);
  std::cout << "detect: " << total << " trials, " << excluded
            << " excluded by the fixation-count floor\n";
}

struct RenderOpts {
  std::string manifest;
  std::string out_dir;
  int image_size = 224;
  double saccade_width = 2.0;
  bool antialias = false;
  bool from_screen = false;
  double screen_w = gz::kDefaultScreenW;
  double screen_h = gz::kDefaultScreenH;
  unsigned jobs = 0;
  std::string config;
};

void run_render(const RenderOpts& o) {
  fs::create_directories(fs::path(o.out_dir) / "images");
  write_run_config(o.out_dir, "render",
                   {{"manifest", o.manifest},
                    {"out-dir", o.out_dir},
                    {"image-size", o.image_size},
                    {"saccade-width", o.saccade_width},
                    {"antialias", o.antialias},
                    {"from-screen", o.from_screen},
                    {"screen-w", o.screen_w},
                    {"screen-h", o.screen_h},
                    {"jobs", o.jobs}});

  auto m = load_manifest_absolute(o.manifest);
  gz::render::RenderConfig rc;
  rc.out_w = rc.out_h = o.image_size;
  rc.saccade_width = o.saccade_width;
  rc.antialias = o.antialias;
  rc.downsample_from_screen = o.from_screen;

  std::size_t rendered = 0;
  std::vector<std::size_t> targets;
  for (std::size_t i = 0; i < m.trials.size(); ++i)
    if (usable(m.trials[i])) targets.push_back(i);
  gz::parallel_for(targets.size(), [&](std::size_t k) {
    auto& r = m.trials[targets[k]];
    const auto sp = load_record_scanpath(r, o.screen_w, o.screen_h);
    const auto img = gz::render::render_scanpath(sp, rc);
    const std::string abs = (fs::path(o.out_dir) / "images" / (r.trial_id + ".png")).string();
    gz::render::write_png(img, abs);
    r.image_path = abs;
  }, o.jobs);
  rendered = targets.size();

  save_manifest_relative(std::move(m), o.out_dir);
  std::cout << "render: " << rendered << " scanpath images at " << o.image_size << "x"
            << o.image_size << "\n";
}

struct FeaturesOpts {
  std::string manifest;
  std::string out_dir;
  double screen_w = gz::kDefaultScreenW;
  double screen_h = gz::kDefaultScreenH;
  unsigned jobs = 0;
  std::string config;
};

void run_features(const FeaturesOpts& o) {
  fs::create_directories(o.out_dir);
  write_run_config(o.out_dir, "features",
                   {{"manifest", o.manifest},
                    {"out-dir", o.out_dir},
                    {"screen-w", o.screen_w},
                    {"screen-h", o.screen_h},
                    {"jobs", o.jobs}});

  const auto m = load_manifest_absolute(o.manifest);
  std::vector<std::size_t> targets;
  for (std::size_t i = 0; i < m.trials.size(); ++i)
    if (usable(m.trials[i])) targets.push_back(i);
  std::vector<gz::features::FeatureVector> vals(targets.size());
  gz::parallel_for(targets.size(), [&](std::size_t k) {
    vals[k] = gz::features::extract_features(
        load_record_scanpath(m.trials[targets[k]], o.screen_w, o.screen_h));
  }, o.jobs);

  std::string out = gz::features::feature_csv_header();
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const auto& r = m.trials[targets[k]];
    gz::features::append_feature_row(out, vals[k], r.trial_id, r.label);
  }
  gz::csv::write_text_file((fs::path(o.out_dir) / "features.csv").string(), out);
  std::cout << "features: " << targets.size() << " trials -> " << o.out_dir << "/features.csv\n";
}

struct TrainCnnOpts {
  std::string manifest;
  std::string out_dir;
  int image_size = 96;
  int epochs = 6;
  int batch_size = 16;
  double momentum = 0.9;
  double lr = 0.01;
  std::string precision = "f32";
  std::uint64_t seed = 0;
  bool no_balance = false;
  double screen_w = gz::kDefaultScreenW;
  double screen_h = gz::kDefaultScreenH;
  unsigned jobs = 0;
  std::string config;
};

template <class T>
void train_cnn_impl(const TrainCnnOpts& o, const LoadedSplits& L) {
  gz::render::RenderConfig rc;
  rc.out_w = rc.out_h = o.image_size;
  auto train_set = dataset_for<T>(L, 0, rc, o.jobs);
  auto val_set = dataset_for<T>(L, 1, rc, o.jobs);
  if (val_set.images.empty()) val_set = train_set;  // tiny runs without a val split

  gz::nn::MiniVggSpec spec;
  spec.in_h = rc.out_h;
  spec.in_w = rc.out_w;
  gz::nn::MiniVgg<T> model(spec, o.seed);
  gz::nn::TrainConfig tc;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch_size;
  tc.momentum = o.momentum;
  tc.learning_rate = o.lr;
  tc.seed = o.seed;
  tc.precision = o.precision == "f32" ? gz::nn::Precision::f32 : gz::nn::Precision::f64;

  const auto log = gz::nn::train(model, train_set, val_set, tc, o.jobs);
  gz::nn::save_checkpoint(model, (fs::path(o.out_dir) / "model.ckpt").string());
  gz::csv::write_text_file((fs::path(o.out_dir) / "train_log.csv").string(),
                           gz::nn::train_log_csv(log));
  if (!log.empty()) {
    const auto& e = log.back();
    std::cout << "train-cnn: " << log.size() << " epochs, final train acc "
              << std::fixed << std::setprecision(3) << e.train_acc << ", val acc " << e.val_acc
              << "; checkpoint " << o.out_dir << "/model.ckpt\n";
  }
}

void run_train_cnn(const TrainCnnOpts& o) {
  fs::create_directories(o.out_dir);
  write_run_config(o.out_dir, "train-cnn",
                   {{"manifest", o.manifest},
                    {"out-dir", o.out_dir},
                    {"image-size", o.image_size},
                    {"epochs", o.epochs},
                    {"batch-size", o.batch_size},
                    {"momentum", o.momentum},
                    {"lr", o.lr},
                    {"precision", o.precision},
                    {"seed", o.seed},
                    {"no-balance", o.no_balance},
                    {"screen-w", o.screen_w},
                    {"screen-h", o.screen_h},
                    {"jobs", o.jobs}});
  const LoadedSplits L =
      prepare_splits(o.manifest, o.seed, !o.no_balance, o.screen_w, o.screen_h, o.jobs);
  if (o.precision == "f32")
    train_cnn_impl<float>(o, L);
  else
    train_cnn_impl<double>(o, L);
  save_manifest_relative(L.manifest, o.out_dir);
}

struct TrainBaselineOpts {
  std::string manifest;
  std::string out_dir;
  std::string model = "both";
  int trees = 200;
  int max_depth = 0;
  int min_samples_leaf = 1;
  int max_features = 4;
  bool no_bootstrap = false;
  double lambda = 1e-3;
  int svm_epochs = 100;
  std::uint64_t seed = 0;
  bool no_balance = false;
  double screen_w = gz::kDefaultScreenW;
  double screen_h = gz::kDefaultScreenH;
  unsigned jobs = 0;
  std::string config;
};

void run_train_baseline(const TrainBaselineOpts& o) {
  fs::create_directories(o.out_dir);
  write_run_config(o.out_dir, "train-baseline",
                   {{"manifest", o.manifest},
                    {"out-dir", o.out_dir},
                    {"model", o.model},
                    {"trees", o.trees},
                    {"max-depth", o.max_depth},
                    {"min-samples-leaf", o.min_samples_leaf},
                    {"max-features", o.max_features},
                    {"no-bootstrap", o.no_bootstrap},
                    {"lambda", o.lambda},
                    {"svm-epochs", o.svm_epochs},
                    {"seed", o.seed},
                    {"no-balance", o.no_balance},
                    {"screen-w", o.screen_w},
                    {"screen-h", o.screen_h},
                    {"jobs", o.jobs}});
  const LoadedSplits L =
      prepare_splits(o.manifest, o.seed, !o.no_balance, o.screen_w, o.screen_h, o.jobs);

  gz::baselines::Matrix X_train, X_val;
  std::vector<int> y_train, y_val;
  features_for(L, 0, o.jobs, X_train, y_train);
  features_for(L, 1, o.jobs, X_val, y_val);

  const auto val_line = [&](const char* name, const std::vector<double>& scores) {
    if (y_val.empty()) return;
    const auto mr = gz::eval::compute_metrics(scores, y_val);
    std::cout << "train-baseline: " << name << " val acc " << std::fixed << std::setprecision(3)
              << mr.accuracy << ", f1 " << mr.f1 << "\n";
  };

  if (o.model == "forest" || o.model == "both") {
    gz::baselines::ForestConfig fc;
    fc.n_trees = o.trees;
    fc.max_depth = o.max_depth;
    fc.min_samples_leaf = o.min_samples_leaf;
    fc.max_features = o.max_features;
    fc.bootstrap = !o.no_bootstrap;
    fc.seed = o.seed;
    const auto forest = gz::baselines::train_forest(X_train, y_train, fc, o.jobs);
    gz::baselines::save_forest(forest, (fs::path(o.out_dir) / "forest.json").string());
    const std::vector<std::string> names(gz::features::kFeatureNames.begin(),
                                         gz::features::kFeatureNames.end());
    gz::csv::write_text_file((fs::path(o.out_dir) / "importance.csv").string(),
                             gz::baselines::importance_csv(forest, names));
    std::vector<double> scores;
    scores.reserve(X_val.size());
    for (const auto& row : X_val) scores.push_back(forest.predict(row).score);
    val_line("forest", scores);
  }
  if (o.model == "svm" || o.model == "both") {
    gz::baselines::SvmConfig svc;
    svc.lambda = o.lambda;
    svc.epochs = o.svm_epochs;
    svc.seed = o.seed;
    const auto svm = gz::baselines::train_svm(X_train, y_train, svc);
    gz::baselines::save_svm(svm, (fs::path(o.out_dir) / "svm.json").string());
    std::vector<double> scores;
    scores.reserve(X_val.size());
    for (const auto& row : X_val)
      scores.push_back(1.0 / (1.0 + std::exp(-svm.margin(row))));
    val_line("svm", scores);
  }
  save_manifest_relative(L.manifest, o.out_dir);
  std::cout << "train-baseline: models saved to " << o.out_dir << "\n";
}

struct EvaluateOpts {
  std::string manifest;
  std::string out_dir;
  std::uint64_t seed = 0;
  int image_size = 96;
  int epochs = 6;
  int batch_size = 16;
  double momentum = 0.9;
  double lr = 0.01;
  std::string precision = "f32";
  int trees = 200;
  int max_depth = 0;
  int min_samples_leaf = 1;
  int max_features = 4;
  double lambda = 1e-3;
  int svm_epochs = 100;
  bool no_balance = false;
  double screen_w = gz::kDefaultScreenW;
  double screen_h = gz::kDefaultScreenH;
  unsigned jobs = 0;
  std::string config;
};

void run_evaluate(const EvaluateOpts& o) {
  fs::create_directories(o.out_dir);
  write_run_config(o.out_dir, "evaluate",
                   {{"manifest", o.manifest},
                    {"out-dir", o.out_dir},
                    {"seed", o.seed},
                    {"image-size", o.image_size},
                    {"epochs", o.epochs},
                    {"batch-size", o.batch_size},
                    {"momentum", o.momentum},
                    {"lr", o.lr},
                    {"precision", o.precision},
                    {"trees", o.trees},
                    {"max-depth", o.max_depth},
                    {"min-samples-leaf", o.min_samples_leaf},
                    {"max-features", o.max_features},
                    {"lambda", o.lambda},
                    {"svm-epochs", o.svm_epochs},
                    {"no-balance", o.no_balance},
                    {"screen-w", o.screen_w},
                    {"screen-h", o.screen_h},
                    {"jobs", o.jobs}});
  const LoadedSplits L =
      prepare_splits(o.manifest, o.seed, !o.no_balance, o.screen_w, o.screen_h, o.jobs);

  std::vector<gz::eval::ExperimentTrial> trials;
  for (int s = 0; s < 3; ++s)
    for (const std::size_t i : L.split_idx[s]) {
      const auto& r = L.manifest.trials[i];
      trials.push_back({r.trial_id, r.label, r.split, L.paths[i]});
    }

  gz::eval::ExperimentConfig cfg;
  cfg.render.out_w = cfg.render.out_h = o.image_size;
  cfg.train.epochs = o.epochs;
  cfg.train.batch_size = o.batch_size;
  cfg.train.momentum = o.momentum;
  cfg.train.learning_rate = o.lr;
  cfg.train.seed = o.seed;
  cfg.train.precision = o.precision == "f32" ? gz::nn::Precision::f32 : gz::nn::Precision::f64;
  cfg.forest.n_trees = o.trees;
  cfg.forest.max_depth = o.max_depth;
  cfg.forest.min_samples_leaf = o.min_samples_leaf;
  cfg.forest.max_features = o.max_features;
  cfg.forest.seed = o.seed;
  cfg.svm.lambda = o.lambda;
  cfg.svm.epochs = o.svm_epochs;
  cfg.svm.seed = o.seed;
  cfg.jobs = o.jobs;
  cfg.checkpoint_path = (fs::path(o.out_dir) / "model.ckpt").string();

  const auto report = gz::eval::run_experiment(trials, cfg);

  gz::csv::write_text_file((fs::path(o.out_dir) / "report.json").string(),
                           gz::eval::report_json(report).dump(2) + "\n");
  gz::csv::write_text_file((fs::path(o.out_dir) / "report.csv").string(),
                           gz::eval::report_csv(report));
  gz::csv::write_text_file((fs::path(o.out_dir) / "train_log.csv").string(),
                           gz::nn::train_log_csv(report.epochs));
  gz::csv::write_text_file((fs::path(o.out_dir) / "importance.csv").string(),
                           importance_pairs_csv(report.importances));
  save_manifest_relative(L.manifest, o.out_dir);
  std::cout << render_report_table(report);
  std::cout << "evaluate: report written to " << o.out_dir << "/report.json\n";
}

struct GradcamOpts {
  std::string manifest;
  std::string checkpoint;
  std::string out_dir;
  std::string target_class = "both";
  int block = 2;
  double alpha = 0.5;
  int samples = 4;
  double screen_w = gz::kDefaultScreenW;
  double screen_h = gz::kDefaultScreenH;
  unsigned jobs = 0;
  std::string config;
};

template <class T>
void gradcam_impl(const GradcamOpts& o, const gz::ingest::DatasetManifest& m, int in_h, int in_w) {
  gz::nn::MiniVggSpec spec;
  spec.in_h = in_h;
  spec.in_w = in_w;
  gz::nn::MiniVgg<T> model(spec, 0);
  gz::nn::load_checkpoint(model, o.checkpoint);

  bool have_test = false;
  for (const auto& r : m.trials) have_test |= r.split == gz::Split::test;
  if (!have_test)
    std::cout << "gradcam: manifest has no test split; using every usable trial\n";

  gz::render::RenderConfig rc;
  rc.out_w = in_w;
  rc.out_h = in_h;

  std::vector<std::pair<std::string, gz::gradcam::Heatmap>> region_rows;
  for (const gz::RelevanceLabel cls :
       {gz::RelevanceLabel::relevant, gz::RelevanceLabel::irrelevant}) {
    const std::string cls_name = gz::to_string(cls);
    if (o.target_class != "both" && o.target_class != cls_name) continue;

    std::vector<const gz::TrialRecord*> recs;
    for (const auto& r : m.trials) {
      if (r.label != cls || !usable(r)) continue;
      if (have_test && r.split != gz::Split::test) continue;
      recs.push_back(&r);
    }
    if (recs.empty()) throw gz::gradcam::EmptySet();

    std::vector<std::vector<T>> images(recs.size());
    std::vector<gz::render::ScanpathImage> previews(recs.size());
    gz::parallel_for(recs.size(), [&](std::size_t i) {
      const auto sp = load_record_scanpath(*recs[i], o.screen_w, o.screen_h);
      if (i < static_cast<std::size_t>(o.samples))
        previews[i] = gz::render::render_scanpath(sp, rc);
      images[i] = render_chw<T>(sp, rc);
    }, o.jobs);

    const auto maps = gz::gradcam::gradcam_batch(model, images, cls, o.block, o.jobs);
    const auto avg = gz::gradcam::average_heatmap(maps, o.jobs);
    const fs::path dir = fs::path(o.out_dir) / "gradcam";
    gz::render::write_png(gz::gradcam::heatmap_image(avg),
                          (dir / ("heatmap-" + cls_name + ".png")).string());
    const std::size_t n_overlay = std::min<std::size_t>(static_cast<std::size_t>(o.samples),
                                                        recs.size());
    for (std::size_t i = 0; i < n_overlay; ++i)
      gz::render::write_png(
          gz::gradcam::overlay(previews[i], maps[i], o.alpha),
          (dir / ("overlay-" + cls_name + "-" + recs[i]->trial_id + ".png")).string());
    region_rows.emplace_back("average-" + cls_name, avg);

    const auto rm = gz::gradcam::region_mass(avg);
    std::cout << "gradcam " << cls_name << " (" << recs.size() << " trials): left "
              << std::fixed << std::setprecision(3) << rm.left << ", right " << rm.right
              << ", top " << rm.top << ", bottom " << rm.bottom << "\n";
  }
  gz::csv::write_text_file((fs::path(o.out_dir) / "gradcam" / "region_mass.csv").string(),
                           gz::gradcam::region_mass_csv(region_rows));
}

void run_gradcam(const GradcamOpts& o) {
  fs::create_directories(fs::path(o.out_dir) / "gradcam");
  write_run_config(o.out_dir, "gradcam",
                   {{"manifest", o.manifest},
                    {"checkpoint", o.checkpoint},
                    {"out-dir", o.out_dir},
                    {"target-class", o.target_class},
                    {"block", o.block},
                    {"alpha", o.alpha},
                    {"samples", o.samples},
                    {"screen-w", o.screen_w},
                    {"screen-h", o.screen_h},
                    {"jobs", o.jobs}});
  if (!fs::exists(o.checkpoint))
    throw gz::gradcam::UntrainedModel("checkpoint not found: " + o.checkpoint);

  const auto header = gz::nn::read_checkpoint_header(gz::csv::read_text_file(o.checkpoint));
  const std::string precision = header.at("precision").get<std::string>();
  const int in_h = header.at("input").at(1).get<int>();
  const int in_w = header.at("input").at(2).get<int>();

  const auto m = load_manifest_absolute(o.manifest);
  if (precision == "f32")
    gradcam_impl<float>(o, m, in_h, in_w);
  else
    gradcam_impl<double>(o, m, in_h, in_w);
  std::cout << "gradcam: maps written to " << o.out_dir << "/gradcam\n";
}

struct ReportOpts {
  std::string report;
  std::string out_dir;
  std::string config;
};

void run_report(const ReportOpts& o) {
  fs::create_directories(o.out_dir);
  write_run_config(o.out_dir, "report", {{"report", o.report}, {"out-dir", o.out_dir}});
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(gz::csv::read_text_file(o.report));
  } catch (const nlohmann::json::exception& e) {
    throw gz::Error(o.report + ": " + e.what());
  }
  const auto r = gz::eval::report_from_json(j);
  gz::csv::write_text_file((fs::path(o.out_dir) / "report.csv").string(),
                           gz::eval::report_csv(r));
  const std::string table = render_report_table(r);
  gz::csv::write_text_file((fs::path(o.out_dir) / "report.txt").string(), table);
  std::cout << table;
}

}  // namespace

int main(int argc, char** argv) {
  std::ios::sync_with_stdio(false);
  try {
    const std::uint64_t seed_default = env_seed().value_or(0);

    CLI::App app{"gazelens: gaze scanpath analytics (detect, render, classify, explain)"};
    app.require_subcommand(1);
    app.footer("pipeline: synth -> detect -> render -> features -> train-cnn / train-baseline\n"
               "          -> evaluate -> gradcam -> report   (one --out-dir can serve all steps)");

    const auto add_common = [&](CLI::App* sub, std::string& config, unsigned* jobs,
                                double* screen_w, double* screen_h) {
      sub->add_option("--config", config, "JSON file merged under flags (flags win)");
      if (jobs) sub->add_option("--jobs", *jobs, "worker threads (0 = hardware)");
      if (screen_w) sub->add_option("--screen-w", *screen_w, "screen width in px");
      if (screen_h) sub->add_option("--screen-h", *screen_h, "screen height in px");
    };

    SynthOpts so;
    so.seed = seed_default;
    auto* synth = app.add_subcommand("synth", "generate a synthetic labeled gaze dataset");
    synth->add_option("--n-per-class", so.n_per_class, "trials per class")
        ->required()
        ->check(CLI::PositiveNumber);
    synth->add_option("--seed", so.seed, "master seed");
    synth->add_option("--out-dir", so.out_dir, "output directory")->required();
    synth->add_option("--emit", so.emit, "write gaze logs or fixation lists")
        ->check(CLI::IsMember({"logs", "fixations"}));
    synth->add_option("--jitter-sigma", so.jitter_sigma, "horizontal placement noise, px")
        ->check(CLI::NonNegativeNumber);
    synth->add_flag("--no-dwell", so.no_dwell, "disable the terminal dwell");
    add_common(synth, so.config, &so.jobs, &so.screen_w, &so.screen_h);
    synth->callback([&so] { run_synth(so); });

    IngestOpts io;
    auto* ingest = app.add_subcommand("ingest", "build a manifest from recorded gaze logs");
    ingest->add_option("--logs-dir", io.logs_dir, "directory of per-trial gaze CSVs")->required();
    ingest->add_option("--labels", io.labels,
                       "CSV of trial_id,label[,participant_id[,document_id]]")->required();
    ingest->add_option("--out-dir", io.out_dir, "output directory")->required();
    ingest->add_option("--delimiter", io.delimiter, "gaze log field delimiter");
    ingest->add_flag("--no-header", io.no_header, "gaze logs have no header row");
    ingest->add_option("--col-t", io.col_t, "timestamp column index");
    ingest->add_option("--col-x", io.col_x, "x column index");
    ingest->add_option("--col-y", io.col_y, "y column index");
    ingest->add_option("--col-valid", io.col_valid, "validity column index");
    add_common(ingest, io.config, &io.jobs, nullptr, nullptr);
    ingest->callback([&io] { run_ingest(io); });

    DetectOpts dto;
    auto* detect = app.add_subcommand("detect", "run fixation detection over manifest gaze logs");
    detect->add_option("--manifest", dto.manifest, "input manifest")->required();
    detect->add_option("--out-dir", dto.out_dir, "output directory")->required();
    detect->add_option("--velocity-threshold", dto.velocity_threshold,
                       "fixation/saccade velocity split, px/s")
        ->check(CLI::PositiveNumber);
    detect->add_option("--min-duration", dto.min_duration, "minimum fixation duration, ms")
        ->check(CLI::NonNegativeNumber);
    detect->add_flag("--keep-invalid", dto.keep_invalid, "keep invalid samples");
    add_common(detect, dto.config, &dto.jobs, &dto.screen_w, &dto.screen_h);
    detect->callback([&dto] { run_detect(dto); });

    RenderOpts ro;
    auto* render = app.add_subcommand("render", "render scanpath images for usable trials");
    render->add_option("--manifest", ro.manifest, "input manifest")->required();
    render->add_option("--out-dir", ro.out_dir, "output directory")->required();
    render->add_option("--image-size", ro.image_size, "output width and height, px")
        ->check(CLI::PositiveNumber);
    render->add_option("--saccade-width", ro.saccade_width, "saccade line width, px")
        ->check(CLI::PositiveNumber);
    render->add_flag("--antialias", ro.antialias, "4x supersampled rendering");
    render->add_flag("--from-screen", ro.from_screen,
                     "render at screen resolution, then area-downsample");
    add_common(render, ro.config, &ro.jobs, &ro.screen_w, &ro.screen_h);
    render->callback([&ro] { run_render(ro); });

    FeaturesOpts fo;
    auto* features = app.add_subcommand("features", "extract scanpath features for usable trials");
    features->add_option("--manifest", fo.manifest, "input manifest")->required();
    features->add_option("--out-dir", fo.out_dir, "output directory")->required();
    add_common(features, fo.config, &fo.jobs, &fo.screen_w, &fo.screen_h);
    features->callback([&fo] { run_features(fo); });

    TrainCnnOpts tco;
    tco.seed = seed_default;
    auto* train_cnn = app.add_subcommand("train-cnn", "train the scanpath CNN");
    train_cnn->add_option("--manifest", tco.manifest, "input manifest")->required();
    train_cnn->add_option("--out-dir", tco.out_dir, "output directory")->required();
    train_cnn->add_option("--image-size", tco.image_size, "network input width/height")
        ->check(CLI::PositiveNumber);
    train_cnn->add_option("--epochs", tco.epochs, "training epochs")->check(CLI::PositiveNumber);
    train_cnn->add_option("--batch-size", tco.batch_size, "minibatch size")
        ->check(CLI::PositiveNumber);
    train_cnn->add_option("--momentum", tco.momentum, "SGD momentum");
    train_cnn->add_option("--lr", tco.lr, "learning rate")->check(CLI::PositiveNumber);
    train_cnn->add_option("--precision", tco.precision, "f32 or f64")
        ->check(CLI::IsMember({"f32", "f64"}));
    train_cnn->add_option("--seed", tco.seed, "master seed (split + init + shuffle)");
    train_cnn->add_flag("--no-balance", tco.no_balance, "skip class downsampling before split");
    add_common(train_cnn, tco.config, &tco.jobs, &tco.screen_w, &tco.screen_h);
    train_cnn->callback([&tco] { run_train_cnn(tco); });

    TrainBaselineOpts tbo;
    tbo.seed = seed_default;
    auto* train_baseline =
        app.add_subcommand("train-baseline", "train feature-space baselines (forest, svm)");
    train_baseline->add_option("--manifest", tbo.manifest, "input manifest")->required();
    train_baseline->add_option("--out-dir", tbo.out_dir, "output directory")->required();
    train_baseline->add_option("--model", tbo.model, "forest, svm, or both")
        ->check(CLI::IsMember({"forest", "svm", "both"}));
    train_baseline->add_option("--trees", tbo.trees, "forest size")->check(CLI::PositiveNumber);
    train_baseline->add_option("--max-depth", tbo.max_depth, "tree depth cap (0 = unlimited)")
        ->check(CLI::NonNegativeNumber);
    train_baseline->add_option("--min-samples-leaf", tbo.min_samples_leaf, "leaf size floor")
        ->check(CLI::PositiveNumber);
    train_baseline->add_option("--max-features", tbo.max_features, "features tried per split")
        ->check(CLI::PositiveNumber);
    train_baseline->add_flag("--no-bootstrap", tbo.no_bootstrap, "train each tree on all rows");
    train_baseline->add_option("--lambda", tbo.lambda, "svm regularization")
        ->check(CLI::PositiveNumber);
    train_baseline->add_option("--svm-epochs", tbo.svm_epochs, "svm training epochs")
        ->check(CLI::PositiveNumber);
    train_baseline->add_option("--seed", tbo.seed, "master seed");
    train_baseline->add_flag("--no-balance", tbo.no_balance,
                             "skip class downsampling before split");
    add_common(train_baseline, tbo.config, &tbo.jobs, &tbo.screen_w, &tbo.screen_h);
    train_baseline->callback([&tbo] { run_train_baseline(tbo); });

    EvaluateOpts eo;
    eo.seed = seed_default;
    auto* evaluate =
        app.add_subcommand("evaluate", "train and score all methods on one deterministic split");
    evaluate->add_option("--manifest", eo.manifest, "input manifest")->required();
    evaluate->add_option("--out-dir", eo.out_dir, "output directory")->required();
    evaluate->add_option("--seed", eo.seed, "master seed");
    evaluate->add_option("--image-size", eo.image_size, "network input width/height")
        ->check(CLI::PositiveNumber);
    evaluate->add_option("--epochs", eo.epochs, "cnn epochs")->check(CLI::PositiveNumber);
    evaluate->add_option("--batch-size", eo.batch_size, "cnn minibatch size")
        ->check(CLI::PositiveNumber);
    evaluate->add_option("--momentum", eo.momentum, "cnn momentum");
    evaluate->add_option("--lr", eo.lr, "cnn learning rate")->check(CLI::PositiveNumber);
    evaluate->add_option("--precision", eo.precision, "f32 or f64")
        ->check(CLI::IsMember({"f32", "f64"}));
    evaluate->add_option("--trees", eo.trees, "forest size")->check(CLI::PositiveNumber);
    evaluate->add_option("--max-depth", eo.max_depth, "tree depth cap (0 = unlimited)")
        ->check(CLI::NonNegativeNumber);
    evaluate->add_option("--min-samples-leaf", eo.min_samples_leaf, "leaf size floor")
        ->check(CLI::PositiveNumber);
    evaluate->add_option("--max-features", eo.max_features, "features tried per split")
        ->check(CLI::PositiveNumber);
    evaluate->add_option("--lambda", eo.lambda, "svm regularization")
        ->check(CLI::PositiveNumber);
    evaluate->add_option("--svm-epochs", eo.svm_epochs, "svm training epochs")
        ->check(CLI::PositiveNumber);
    evaluate->add_flag("--no-balance", eo.no_balance, "skip class downsampling before split");
    add_common(evaluate, eo.config, &eo.jobs, &eo.screen_w, &eo.screen_h);
    evaluate->callback([&eo] { run_evaluate(eo); });

    GradcamOpts go;
    auto* gradcam = app.add_subcommand("gradcam", "class-activation heatmaps for a trained CNN");
    gradcam->add_option("--manifest", go.manifest, "input manifest")->required();
    gradcam->add_option("--checkpoint", go.checkpoint, "trained CNN checkpoint")->required();
    gradcam->add_option("--out-dir", go.out_dir, "output directory")->required();
    gradcam->add_option("--target-class", go.target_class, "relevant, irrelevant, or both")
        ->check(CLI::IsMember({"relevant", "irrelevant", "both"}));
    gradcam->add_option("--block", go.block, "conv block whose activations are explained (0-2)")
        ->check(CLI::Range(0, 2));
    gradcam->add_option("--alpha", go.alpha, "overlay blend weight")
        ->check(CLI::Range(0.0, 1.0));
    gradcam->add_option("--samples", go.samples, "per-class overlay examples")
        ->check(CLI::NonNegativeNumber);
    add_common(gradcam, go.config, &go.jobs, &go.screen_w, &go.screen_h);
    gradcam->callback([&go] { run_gradcam(go); });

    ReportOpts rpo;
    auto* report = app.add_subcommand("report", "format an evaluation report as CSV and text");
    report->add_option("--report", rpo.report, "report.json produced by evaluate")->required();
    report->add_option("--out-dir", rpo.out_dir, "output directory")->required();
    report->add_option("--config", rpo.config, "JSON file merged under flags (flags win)");
    report->callback([&rpo] { run_report(rpo); });

    std::vector<std::string> args(argv + 1, argv + argc);
    merge_config_into_args(app, args);
    std::reverse(args.begin(), args.end());
    try {
      app.parse(std::move(args));
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      app.exit(e);
      return 2;
    }
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const gz::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

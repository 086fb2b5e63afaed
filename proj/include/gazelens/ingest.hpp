#pragma once

// Gaze-log parsing and the dataset manifest.
//
// Log format: delimited UTF-8 text, by default comma-separated with a header
// row and columns t,x,y,valid (t in ms from trial onset, x/y in px, valid as
// 0/1). The manifest is JSON lines: a {"version": N} header line followed by
// one trial object per line.

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gazelens/core.hpp"
#include "gazelens/csv.hpp"

namespace gazelens::ingest {

inline constexpr int kManifestVersion = 1;
inline constexpr int kMinUsableFixations = 10;

struct GazeLogFormat {
  char delimiter = ',';
  int col_t = 0;
  int col_x = 1;
  int col_y = 2;
  int col_valid = 3;
  bool header = true;
};

struct MalformedRow : Error {
  std::size_t line_no;
  MalformedRow(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_no(line) {}
};

struct NonMonotonicTime : Error {
  std::size_t line_no;
  explicit NonMonotonicTime(std::size_t line)
      : Error("line " + std::to_string(line) + ": timestamp not increasing"),
        line_no(line) {}
};

struct DuplicateTrialId : Error {
  explicit DuplicateTrialId(const std::string& id)
      : Error("duplicate trial id: " + id) {}
};

struct SchemaVersionMismatch : Error {
  explicit SchemaVersionMismatch(const std::string& what) : Error(what) {}
};

inline std::vector<GazeSample> parse_gaze_log(std::string_view text,
                                              const GazeLogFormat& fmt = {}) {
  const int cols[4] = {fmt.col_t, fmt.col_x, fmt.col_y, fmt.col_valid};
  for (int i = 0; i < 4; ++i) {
    if (cols[i] < 0) throw Error("gaze log format: negative column index");
    for (int j = i + 1; j < 4; ++j)
      if (cols[i] == cols[j]) throw Error("gaze log format: duplicate column index");
  }
  const std::size_t need =
      static_cast<std::size_t>(std::max({fmt.col_t, fmt.col_x, fmt.col_y, fmt.col_valid})) + 1;

  std::vector<GazeSample> out;
  double prev_t = 0;
  bool have_prev = false;
  csv::for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (fmt.header && line_no == 1) return;
    if (line.empty()) return;
    const auto fields = csv::split_fields(line, fmt.delimiter);
    if (fields.size() != need)
      throw MalformedRow(line_no, "expected " + std::to_string(need) + " fields, got " +
                                      std::to_string(fields.size()));
    const auto t = csv::parse_double(fields[static_cast<std::size_t>(fmt.col_t)]);
    const auto x = csv::parse_double(fields[static_cast<std::size_t>(fmt.col_x)]);
    const auto y = csv::parse_double(fields[static_cast<std::size_t>(fmt.col_y)]);
    const auto v = csv::parse_double(fields[static_cast<std::size_t>(fmt.col_valid)]);
    if (!t || !x || !y || !v) throw MalformedRow(line_no, "unparseable number");
    if (!std::isfinite(*t) || *t < 0)
      throw MalformedRow(line_no, "timestamp must be finite and non-negative");
    if (have_prev && !(*t > prev_t)) throw NonMonotonicTime(line_no);
    prev_t = *t;
    have_prev = true;
    out.push_back(GazeSample{*t, *x, *y, *v != 0.0});
  });
  return out;
}

inline std::vector<GazeSample> load_gaze_log(const std::string& path,
                                             const GazeLogFormat& fmt = {}) {
  return parse_gaze_log(csv::read_text_file(path), fmt);
}

inline std::string write_gaze_log(const std::vector<GazeSample>& samples) {
  std::string out = "t,x,y,valid\n";
  for (const auto& s : samples) {
    out += csv::format_double(s.t);
    out += ',';
    out += csv::format_double(s.x);
    out += ',';
    out += csv::format_double(s.y);
    out += ',';
    out += s.valid ? '1' : '0';
    out += '\n';
  }
  return out;
}

struct DatasetManifest {
  std::vector<TrialRecord> trials;

  bool operator==(const DatasetManifest&) const = default;

  const TrialRecord* find(const std::string& trial_id) const {
    for (const auto& t : trials)
      if (t.trial_id == trial_id) return &t;
    return nullptr;
  }
};

// Fills in fixation_count and applies the usability rule: trials with fewer
// than 10 fixations are excluded, everything else starts unassigned.
inline DatasetManifest build_manifest(
    std::vector<std::pair<TrialRecord, std::vector<Fixation>>> trials) {
  std::set<std::string> seen;
  DatasetManifest m;
  m.trials.reserve(trials.size());
  for (auto& [rec, fixes] : trials) {
    if (!seen.insert(rec.trial_id).second) throw DuplicateTrialId(rec.trial_id);
    rec.fixation_count = static_cast<int>(fixes.size());
    rec.split = rec.fixation_count < kMinUsableFixations ? Split::excluded
                                                         : Split::unassigned;
    m.trials.push_back(std::move(rec));
  }
  return m;
}

namespace detail {

inline nlohmann::json record_to_json(const TrialRecord& r) {
  return nlohmann::json{{"trial_id", r.trial_id},
                        {"participant_id", r.participant_id},
                        {"document_id", r.document_id},
                        {"label", to_string(r.label)},
                        {"fixation_count", r.fixation_count},
                        {"gaze_log_path", r.gaze_log_path},
                        {"fixations_path", r.fixations_path},
                        {"image_path", r.image_path},
                        {"split", to_string(r.split)}};
}

inline TrialRecord record_from_json(const nlohmann::json& j) {
  TrialRecord r;
  r.trial_id = j.at("trial_id").get<std::string>();
  r.participant_id = j.at("participant_id").get<std::string>();
  r.document_id = j.at("document_id").get<std::string>();
  r.label = relevance_from_string(j.at("label").get<std::string>());
  r.fixation_count = j.at("fixation_count").get<int>();
  r.gaze_log_path = j.at("gaze_log_path").get<std::string>();
  r.fixations_path = j.at("fixations_path").get<std::string>();
  r.image_path = j.at("image_path").get<std::string>();
  r.split = split_from_string(j.at("split").get<std::string>());
  return r;
}

}  // namespace detail

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
  std::string out = nlohmann::json{{"version", kManifestVersion}}.dump();
  out += '\n';
  for (const auto& r : m.trials) {
    out += detail::record_to_json(r).dump();
    out += '\n';
  }
  csv::write_text_file(path, out);
}

inline DatasetManifest load_manifest(const std::string& path) {
  const std::string text = csv::read_text_file(path);
  DatasetManifest m;
  bool have_header = false;
  std::set<std::string> seen;
  try {
    csv::for_each_line(text, [&](std::size_t line_no, std::string_view line) {
      if (line.empty()) return;
      const auto j = nlohmann::json::parse(line);
      if (line_no == 1) {
        if (!j.contains("version"))
          throw SchemaVersionMismatch("manifest: missing version header");
        if (j.at("version").get<int>() != kManifestVersion)
          throw SchemaVersionMismatch("manifest: unsupported version " +
                                      j.at("version").dump());
        have_header = true;
        return;
      }
      auto rec = detail::record_from_json(j);
      if (!seen.insert(rec.trial_id).second) throw DuplicateTrialId(rec.trial_id);
      m.trials.push_back(std::move(rec));
    });
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest: " + std::string(e.what()));
  }
  if (!have_header) throw IoError("manifest: empty file");
  return m;
}

}  // namespace gazelens::ingest

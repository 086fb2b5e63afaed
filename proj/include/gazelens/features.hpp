#pragma once

// Hand-engineered aggregate features over a scanpath: 20 reals describing
// fixation durations, level counts, saccade geometry and direction-normalized
// movement totals.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "gazelens/core.hpp"
#include "gazelens/csv.hpp"

namespace gazelens::features {

inline constexpr double kDefaultHvRatioCap = 1e6;

struct TooFewFixations : Error {
  TooFewFixations() : Error("need at least 2 fixations") {}
};

struct FeatureVector {
  double fixation_count = 0;
  double mean_fix_dur = 0;   // ms
  double sd_fix_dur = 0;     // ms, population
  double total_fix_dur = 0;  // ms
  double task_duration = 0;  // ms, last t_end - first t_start
  double fixation_rate = 0;  // fixations per second of task
  double level1_count = 0;
  double level2_count = 0;
  double level3_count = 0;
  double level4_count = 0;
  double saccade_count = 0;
  double mean_sacc_len = 0;       // px
  double sd_sacc_len = 0;         // px, population
  double total_path_len = 0;      // px
  double mean_sacc_velocity = 0;  // px/s
  double mean_sacc_dur = 0;       // ms
  double total_h_move = 0;        // screen-widths
  double total_v_move = 0;        // screen-heights
  double hv_ratio = 0;            // h over v, capped when v is 0
  double vertical_scan_speed = 0; // screen-heights per second

  bool operator==(const FeatureVector&) const = default;

  std::array<double, 20> as_array() const {
    return {fixation_count, mean_fix_dur,      sd_fix_dur,    total_fix_dur,
            task_duration,  fixation_rate,     level1_count,  level2_count,
            level3_count,   level4_count,      saccade_count, mean_sacc_len,
            sd_sacc_len,    total_path_len,    mean_sacc_velocity,
            mean_sacc_dur,  total_h_move,      total_v_move,  hv_ratio,
            vertical_scan_speed};
  }

  static FeatureVector from_array(const std::array<double, 20>& a) {
    FeatureVector v;
    v.fixation_count = a[0];
    v.mean_fix_dur = a[1];
    v.sd_fix_dur = a[2];
    v.total_fix_dur = a[3];
    v.task_duration = a[4];
    v.fixation_rate = a[5];
    v.level1_count = a[6];
    v.level2_count = a[7];
    v.level3_count = a[8];
    v.level4_count = a[9];
    v.saccade_count = a[10];
    v.mean_sacc_len = a[11];
    v.sd_sacc_len = a[12];
    v.total_path_len = a[13];
    v.mean_sacc_velocity = a[14];
    v.mean_sacc_dur = a[15];
    v.total_h_move = a[16];
    v.total_v_move = a[17];
    v.hv_ratio = a[18];
    v.vertical_scan_speed = a[19];
    return v;
  }
};

inline constexpr std::array<const char*, 20> kFeatureNames = {
    "fixation_count", "mean_fix_dur",      "sd_fix_dur",    "total_fix_dur",
    "task_duration",  "fixation_rate",     "level1_count",  "level2_count",
    "level3_count",   "level4_count",      "saccade_count", "mean_sacc_len",
    "sd_sacc_len",    "total_path_len",    "mean_sacc_velocity",
    "mean_sacc_dur",  "total_h_move",      "total_v_move",  "hv_ratio",
    "vertical_scan_speed"};

inline FeatureVector extract_features(const Scanpath& sp,
                                      double hv_ratio_cap = kDefaultHvRatioCap) {
  const auto& fx = sp.fixations;
  if (fx.size() < 2) throw TooFewFixations();
  const std::size_t n = fx.size();
  const std::size_t s = n - 1;

  FeatureVector v;
  v.fixation_count = static_cast<double>(n);
  for (const auto& f : fx) v.total_fix_dur += f.duration();
  v.mean_fix_dur = v.total_fix_dur / static_cast<double>(n);
  double acc = 0;
  for (const auto& f : fx) {
    const double d = f.duration() - v.mean_fix_dur;
    acc += d * d;
  }
  v.sd_fix_dur = std::sqrt(acc / static_cast<double>(n));
  v.task_duration = fx.back().t_end - fx.front().t_start;
  v.fixation_rate = static_cast<double>(n) / (v.task_duration / 1000.0);
  for (const auto& f : fx) {
    if (f.level == 1) v.level1_count += 1;
    else if (f.level == 2) v.level2_count += 1;
    else if (f.level == 3) v.level3_count += 1;
    else v.level4_count += 1;
  }

  v.saccade_count = static_cast<double>(s);
  std::vector<double> lens(s);
  double vel_sum = 0;
  std::size_t vel_n = 0;
  for (std::size_t i = 0; i < s; ++i) {
    const double dx = fx[i + 1].cx - fx[i].cx;
    const double dy = fx[i + 1].cy - fx[i].cy;
    lens[i] = std::sqrt(dx * dx + dy * dy);
    v.total_path_len += lens[i];
    v.total_h_move += std::abs(dx) / sp.screen_w;
    v.total_v_move += std::abs(dy) / sp.screen_h;
    const double dur = fx[i + 1].t_start - fx[i].t_end;
    v.mean_sacc_dur += dur;
    // Zero-length gaps (hand-built fixation sequences) carry no velocity.
    if (dur > 0) {
      vel_sum += lens[i] / (dur / 1000.0);
      ++vel_n;
    }
  }
  v.mean_sacc_len = v.total_path_len / static_cast<double>(s);
  acc = 0;
  for (const double l : lens) {
    const double d = l - v.mean_sacc_len;
    acc += d * d;
  }
  v.sd_sacc_len = std::sqrt(acc / static_cast<double>(s));
  v.mean_sacc_velocity = vel_n > 0 ? vel_sum / static_cast<double>(vel_n) : 0.0;
  v.mean_sacc_dur /= static_cast<double>(s);
  v.hv_ratio = v.total_v_move > 0 ? v.total_h_move / v.total_v_move : hv_ratio_cap;
  v.vertical_scan_speed = v.total_v_move / (v.task_duration / 1000.0);
  return v;
}

// CSV export: 20 feature columns, then trial_id and label.
inline std::string feature_csv_header() {
  std::string h;
  for (const char* name : kFeatureNames) {
    h += name;
    h += ',';
  }
  h += "trial_id,label\n";
  return h;
}

inline void append_feature_row(std::string& out, const FeatureVector& v,
                               const std::string& trial_id, RelevanceLabel label) {
  for (const double x : v.as_array()) {
    out += csv::format_double(x);
    out += ',';
  }
  out += trial_id;
  out += ',';
  out += to_string(label);
  out += '\n';
}

struct FeatureRow {
  FeatureVector features;
  std::string trial_id;
  RelevanceLabel label = RelevanceLabel::irrelevant;
};

inline std::vector<FeatureRow> parse_feature_csv(std::string_view text) {
  std::vector<FeatureRow> rows;
  csv::for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (line.empty()) return;
    if (line_no == 1) {
      std::string expect = feature_csv_header();
      expect.pop_back();  // trailing newline
      if (line != expect) throw IoError("feature csv: unexpected header");
      return;
    }
    const auto fields = csv::split_fields(line, ',');
    if (fields.size() != 22)
      throw IoError("feature csv line " + std::to_string(line_no) + ": expected 22 fields");
    std::array<double, 20> vals{};
    for (std::size_t i = 0; i < 20; ++i) {
      const auto x = csv::parse_double(fields[i]);
      if (!x) throw IoError("feature csv line " + std::to_string(line_no) + ": bad number");
      vals[i] = *x;
    }
    FeatureRow r;
    r.features = FeatureVector::from_array(vals);
    r.trial_id = std::string(fields[20]);
    r.label = relevance_from_string(std::string(fields[21]));
    rows.push_back(std::move(r));
  });
  return rows;
}

}  // namespace gazelens::features

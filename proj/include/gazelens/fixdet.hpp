#pragma once

// Velocity-threshold fixation detection.
//
// Each sample is classified by its incoming point-to-point velocity: below
// the threshold it is a fixation sample, otherwise a saccade sample. Maximal
// runs of fixation samples become candidate fixations (centroid = mean of
// sample positions, span = first to last sample time), and candidates shorter
// than the minimum duration are dropped.

#include <cmath>
#include <string>
#include <vector>

#include "gazelens/core.hpp"
#include "gazelens/csv.hpp"

namespace gazelens::fixdet {

struct IvtConfig {
  double velocity_threshold = 1000.0;  // px/s
  double min_fixation_duration = kMinFixationMs;  // ms
  bool drop_invalid_samples = true;
};

struct ZeroTimeDelta : Error {
  ZeroTimeDelta() : Error("zero time delta between samples") {}
};

struct TooFewSamples : Error {
  TooFewSamples() : Error("need at least 2 usable samples") {}
};

inline double point_velocity(const GazeSample& s_prev, const GazeSample& s_next) {
  const double dt_ms = s_next.t - s_prev.t;
  if (!(dt_ms > 0)) throw ZeroTimeDelta();
  const double dx = s_next.x - s_prev.x;
  const double dy = s_next.y - s_prev.y;
  // sqrt is correctly rounded everywhere; hypot is not, and velocities feed
  // a threshold comparison that must not vary by platform.
  return std::sqrt(dx * dx + dy * dy) / dt_ms * 1000.0;
}

inline std::vector<Fixation> detect_fixations(const std::vector<GazeSample>& samples,
                                              const IvtConfig& cfg = {}) {
  if (!(cfg.velocity_threshold > 0)) throw Error("velocity_threshold must be > 0");
  if (cfg.min_fixation_duration < 0) throw Error("min_fixation_duration must be >= 0");

  std::vector<const GazeSample*> use;
  use.reserve(samples.size());
  for (const auto& s : samples)
    if (!cfg.drop_invalid_samples || s.valid) use.push_back(&s);
  if (use.size() < 2) throw TooFewSamples();

  // is_fix[i]: incoming velocity of sample i is below threshold; the first
  // sample inherits the first computed velocity's classification.
  std::vector<bool> is_fix(use.size());
  for (std::size_t i = 1; i < use.size(); ++i)
    is_fix[i] = point_velocity(*use[i - 1], *use[i]) < cfg.velocity_threshold;
  is_fix[0] = is_fix[1];

  std::vector<Fixation> out;
  std::size_t i = 0;
  while (i < use.size()) {
    if (!is_fix[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    double sx = 0, sy = 0;
    while (j < use.size() && is_fix[j]) {
      sx += use[j]->x;
      sy += use[j]->y;
      ++j;
    }
    const double n = static_cast<double>(j - i);
    const double duration = use[j - 1]->t - use[i]->t;
    if (duration >= cfg.min_fixation_duration)
      out.emplace_back(sx / n, sy / n, use[i]->t, use[j - 1]->t);
    i = j;
  }
  return out;
}

// CSV export: header plus one row per fixation.
inline std::string write_fixations_csv(const Scanpath& sp) {
  std::string out = "trial_id,index,cx,cy,t_start,t_end,duration\n";
  for (std::size_t i = 0; i < sp.fixations.size(); ++i) {
    const auto& f = sp.fixations[i];
    out += sp.trial_id;
    out += ',';
    out += std::to_string(i);
    out += ',';
    out += csv::format_double(f.cx);
    out += ',';
    out += csv::format_double(f.cy);
    out += ',';
    out += csv::format_double(f.t_start);
    out += ',';
    out += csv::format_double(f.t_end);
    out += ',';
    out += csv::format_double(f.duration());
    out += '\n';
  }
  return out;
}

inline Scanpath parse_fixations_csv(std::string_view text, double screen_w,
                                    double screen_h) {
  std::string trial_id;
  std::vector<Fixation> fixes;
  csv::for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (line_no == 1 || line.empty()) return;
    const auto fields = csv::split_fields(line, ',');
    if (fields.size() != 7)
      throw IoError("fixation csv line " + std::to_string(line_no) + ": expected 7 fields");
    const std::string id(fields[0]);
    if (trial_id.empty())
      trial_id = id;
    else if (id != trial_id)
      throw IoError("fixation csv line " + std::to_string(line_no) + ": mixed trial ids");
    const auto cx = csv::parse_double(fields[2]);
    const auto cy = csv::parse_double(fields[3]);
    const auto t0 = csv::parse_double(fields[4]);
    const auto t1 = csv::parse_double(fields[5]);
    if (!cx || !cy || !t0 || !t1)
      throw IoError("fixation csv line " + std::to_string(line_no) + ": unparseable number");
    fixes.emplace_back(*cx, *cy, *t0, *t1);
  });
  return Scanpath::assemble(trial_id, std::move(fixes), screen_w, screen_h);
}

inline Scanpath load_fixations_csv(const std::string& path, double screen_w,
                                   double screen_h) {
  return parse_fixations_csv(csv::read_text_file(path), screen_w, screen_h);
}

inline void save_fixations_csv(const Scanpath& sp, const std::string& path) {
  csv::write_text_file(path, write_fixations_csv(sp));
}

}  // namespace gazelens::fixdet

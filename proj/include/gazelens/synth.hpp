#pragma once

// Behavioural scanpath simulator.
//
// Two generators share a page layout (a headline line plus body lines inside
// fixed margins). The reading generator walks every line left to right with
// short forward saccades; the skimming generator reads the headline, drops
// through the body in multi-line sweeps with a brief upward regression, then
// settles on the last two lines. Both close with an optional long lower-right
// dwell so neither class owns that corner outright.
//
// All quantities are simulator design choices tuned to keep the classes
// statistically distinct (horizontal-dominant reading, vertical-dominant
// skimming) without hardcoding the label into any single pixel region.
//
// Timing is laid out on the 4 ms sample grid (250 Hz) so that a generated
// fixation sequence and the gaze log sampled from it describe identical
// spans: durations round up to the grid, inter-fixation gaps get at least
// two grid steps, and consecutive centroids keep a minimum distance, which
// together keep every planted fixation recoverable by the velocity-threshold
// detector.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gazelens/core.hpp"
#include "gazelens/parallel.hpp"
#include "gazelens/rng.hpp"

namespace gazelens::synth {

struct InvalidSynthConfig : Error {
  explicit InvalidSynthConfig(const std::string& what)
      : Error("invalid simulator config: " + what) {}
};

struct SynthConfig {
  double screen_w = kDefaultScreenW;
  double screen_h = kDefaultScreenH;
  double margin_x = 0.15;  // left/right text margins, fraction of width
  double margin_y = 0.12;  // top/bottom, fraction of height
  double line_height = 32.0;
  int n_lines_min = 12;  // 14 +/- 2
  int n_lines_max = 16;
  double read_mu_log = std::log(220.0);  // fixation duration, lognormal(mu, sigma)
  double read_sigma_log = 0.35;
  double skim_mu_log = std::log(160.0);
  double skim_sigma_log = 0.35;
  double saccade_min_px = 60.0;  // within-line forward step
  double saccade_max_px = 110.0;
  int sweep_min_lines = 2;  // skimming vertical hop
  int sweep_max_lines = 5;
  double jitter_sigma = 6.0;  // horizontal placement noise; vertical uses 1/6 of it
  bool terminal_dwell = true;
  double dwell_x_frac = 0.93;
  double dwell_y_frac = 0.93;
  double dwell_min_ms = 550.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(line_height > 0.0)) throw InvalidSynthConfig("line_height must be > 0");
    if (!(screen_w > 0.0 && screen_h > 0.0)) throw InvalidSynthConfig("screen must be positive");
    if (!(margin_x >= 0.0 && margin_x < 0.5 && margin_y >= 0.0 && margin_y < 0.5))
      throw InvalidSynthConfig("margins must lie in [0, 0.5)");
    if (n_lines_min < 3 || n_lines_max < n_lines_min)
      throw InvalidSynthConfig("need n_lines_max >= n_lines_min >= 3");
    if (!(saccade_min_px > 0.0 && saccade_max_px >= saccade_min_px))
      throw InvalidSynthConfig("saccade range must be positive and ordered");
    if (sweep_min_lines < 1 || sweep_max_lines < sweep_min_lines)
      throw InvalidSynthConfig("sweep range must be positive and ordered");
    if (!(jitter_sigma >= 0.0)) throw InvalidSynthConfig("jitter must be >= 0");
    if (!(dwell_min_ms >= kMinFixationMs))
      throw InvalidSynthConfig("dwell duration must be at least the fixation floor");
  }
};

struct SynthTrial {
  Scanpath path;
  RelevanceLabel label = RelevanceLabel::irrelevant;
  // Fixations below the headline and outside the terminal dwell; the class
  // contrast lives here (dense for reading, sparse for skimming).
  int body_fixations = 0;
};

namespace detail {

constexpr double kSampleStepMs = 4.0;  // 250 Hz
constexpr double kMinGapMs = 8.0;      // two grid steps, so every gap holds an interior sample
constexpr double kMinHopPx = 14.0;     // keeps inter-fixation speeds above the detector threshold

struct PlannedFixation {
  double x = 0.0;
  double y = 0.0;
  double duration_ms = 0.0;
};

inline double grid_ceil(double ms) {
  return std::ceil(ms / kSampleStepMs) * kSampleStepMs;
}

// Duration >= the 110 ms floor by resampling rejected draws.
inline double fixation_duration(Rng& rng, double mu_log, double sigma_log) {
  double d = 0.0;
  do {
    d = rng.lognormal(mu_log, sigma_log);
  } while (d < kMinFixationMs);
  return d;
}

struct PageLayout {
  int n_lines = 0;
  double x0 = 0.0;  // text region left edge
  double width = 0.0;
  double y_top = 0.0;
};

inline PageLayout make_layout(const SynthConfig& cfg, Rng& rng) {
  PageLayout pl;
  pl.n_lines = rng.uniform_int(cfg.n_lines_min, cfg.n_lines_max);
  pl.x0 = cfg.margin_x * cfg.screen_w;
  pl.width = cfg.screen_w - 2.0 * pl.x0;
  pl.y_top = cfg.margin_y * cfg.screen_h;
  return pl;
}

inline double line_y(const SynthConfig& cfg, const PageLayout& pl, int k) {
  return pl.y_top + (static_cast<double>(k) + 0.5) * cfg.line_height;
}

// One left-to-right pass over a line, stopping once the nominal position has
// covered end_frac of the line width.
inline void line_pass(const SynthConfig& cfg, const PageLayout& pl, int line, double end_frac,
                      double mu_log, double sigma_log, Rng& rng,
                      std::vector<PlannedFixation>& out) {
  const double y = line_y(cfg, pl, line);
  const double x_end = pl.x0 + end_frac * pl.width;
  double x = pl.x0 + rng.uniform(0.0, 15.0);
  while (true) {
    out.push_back({x + rng.normal(0.0, cfg.jitter_sigma),
                   y + rng.normal(0.0, cfg.jitter_sigma / 6.0),
                   fixation_duration(rng, mu_log, sigma_log)});
    if (x >= x_end) break;
    x += rng.uniform(cfg.saccade_min_px, cfg.saccade_max_px);
  }
}

inline void append_dwell(const SynthConfig& cfg, Rng& rng, std::vector<PlannedFixation>& out) {
  if (!cfg.terminal_dwell) return;
  const double dx = cfg.dwell_x_frac * cfg.screen_w;
  const double dy = cfg.dwell_y_frac * cfg.screen_h;
  for (int i = 0; i < 2; ++i) {
    double d = 0.0;
    do {
      d = rng.lognormal(std::log(1000.0), 0.2);
    } while (d < cfg.dwell_min_ms);
    const double off = i == 0 ? 0.0 : rng.uniform(16.0, 28.0);
    out.push_back({dx + off + rng.normal(0.0, cfg.jitter_sigma / 2.0),
                   dy + rng.normal(0.0, cfg.jitter_sigma / 2.0), d});
  }
}

// Enforces the minimum inter-centroid distance, lays fixations onto the
// sample grid and assembles the scanpath (assemble clamps to the screen).
inline Scanpath plan_to_scanpath(std::string trial_id, const SynthConfig& cfg,
                                 std::vector<PlannedFixation> plan, Rng& rng) {
  for (std::size_t i = 1; i < plan.size(); ++i) {
    const double dx = plan[i].x - plan[i - 1].x;
    const double dy = plan[i].y - plan[i - 1].y;
    const double d = std::sqrt(dx * dx + dy * dy);
    if (d < kMinHopPx) {
      if (d == 0.0) {
        plan[i].x = plan[i - 1].x + kMinHopPx;
      } else {
        plan[i].x = plan[i - 1].x + dx / d * kMinHopPx;
        plan[i].y = plan[i - 1].y + dy / d * kMinHopPx;
      }
    }
  }
  std::vector<Fixation> fixations;
  fixations.reserve(plan.size());
  double t = 0.0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (i > 0) {
      const double dx = plan[i].x - plan[i - 1].x;
      const double dy = plan[i].y - plan[i - 1].y;
      const double dist = std::sqrt(dx * dx + dy * dy);
      const double v_sacc = rng.uniform(3.0, 6.0);  // px/ms
      t += std::max(grid_ceil(std::max(dist / v_sacc, 5.0)), kMinGapMs);
    }
    const double dur = grid_ceil(plan[i].duration_ms);
    fixations.emplace_back(plan[i].x, plan[i].y, t, t + dur);
    t += dur;
  }
  return Scanpath::assemble(std::move(trial_id), std::move(fixations), cfg.screen_w, cfg.screen_h);
}

}  // namespace detail

// Reading: headline plus every body line traversed left to right (a small
// number of lines stop early), tight vertical placement, optional dwell.
inline SynthTrial generate_reading(const SynthConfig& cfg, Rng& rng, std::string trial_id = "reading") {
  cfg.validate();
  const detail::PageLayout pl = detail::make_layout(cfg, rng);
  std::vector<detail::PlannedFixation> plan;

  const int body = pl.n_lines - 1;
  const int partial_count = body / 7;
  std::vector<int> body_lines(static_cast<std::size_t>(body));
  for (int i = 0; i < body; ++i) body_lines[static_cast<std::size_t>(i)] = i + 1;
  for (int i = 0; i < partial_count; ++i) {
    const int j = rng.uniform_int(i, body - 1);
    std::swap(body_lines[static_cast<std::size_t>(i)], body_lines[static_cast<std::size_t>(j)]);
  }
  std::vector<bool> partial(static_cast<std::size_t>(pl.n_lines), false);
  for (int i = 0; i < partial_count; ++i) partial[static_cast<std::size_t>(body_lines[static_cast<std::size_t>(i)])] = true;

  std::size_t headline_fixations = 0;
  for (int line = 0; line < pl.n_lines; ++line) {
    const double end_frac = partial[static_cast<std::size_t>(line)] ? rng.uniform(0.55, 0.85)
                                                                    : rng.uniform(0.92, 0.99);
    detail::line_pass(cfg, pl, line, end_frac, cfg.read_mu_log, cfg.read_sigma_log, rng, plan);
    if (line == 0) headline_fixations = plan.size();
  }
  const std::size_t body_count = plan.size() - headline_fixations;
  detail::append_dwell(cfg, rng, plan);

  SynthTrial trial;
  trial.label = RelevanceLabel::relevant;
  trial.body_fixations = static_cast<int>(body_count);
  trial.path = detail::plan_to_scanpath(std::move(trial_id), cfg, std::move(plan), rng);
  return trial;
}

// Skimming: headline, sparse mid-body fixations reached by multi-line sweeps
// (the first two overshoot and correct), one upward regression, a few
// fixations on the last two lines, optional dwell.
inline SynthTrial generate_skimming(const SynthConfig& cfg, Rng& rng, std::string trial_id = "skimming") {
  cfg.validate();
  const detail::PageLayout pl = detail::make_layout(cfg, rng);
  std::vector<detail::PlannedFixation> plan;

  detail::line_pass(cfg, pl, 0, rng.uniform(0.92, 0.99), cfg.skim_mu_log, cfg.skim_sigma_log, rng, plan);
  const std::size_t headline_fixations = plan.size();

  const auto skim_duration = [&] {
    return detail::fixation_duration(rng, cfg.skim_mu_log, cfg.skim_sigma_log);
  };
  const auto sparse_x = [&] { return pl.x0 + rng.uniform(0.2, 0.8) * pl.width; };
  const double sigma_y = cfg.jitter_sigma / 6.0;

  const int last_body = std::max(1, pl.n_lines - 3);
  const int mid_targets = rng.uniform_int(3, 6);
  int line = 0;
  int deepest = 0;
  for (int j = 0; j < mid_targets; ++j) {
    line = std::min(line + rng.uniform_int(cfg.sweep_min_lines, cfg.sweep_max_lines), last_body);
    deepest = std::max(deepest, line);
    const double x = sparse_x();
    const double y = detail::line_y(cfg, pl, line);
    if (j < 2) {
      // Sweep overshoots below the target line, then corrects back up.
      plan.push_back({x + rng.normal(0.0, cfg.jitter_sigma),
                      y + rng.uniform(36.0, 80.0) + rng.normal(0.0, sigma_y), skim_duration()});
    }
    plan.push_back({x + rng.normal(0.0, cfg.jitter_sigma), y + rng.normal(0.0, sigma_y),
                    skim_duration()});
  }

  // One brief look back up the page before settling at the bottom.
  const int reg_line = std::max(1, deepest - rng.uniform_int(3, 5));
  plan.push_back({sparse_x() + rng.normal(0.0, cfg.jitter_sigma),
                  detail::line_y(cfg, pl, reg_line) + rng.normal(0.0, sigma_y), skim_duration()});

  const int tail = rng.uniform_int(2, 4);
  for (int j = 0; j < tail; ++j) {
    const int tail_line = pl.n_lines - 2 + (j % 2);
    plan.push_back({pl.x0 + rng.uniform(0.1, 0.9) * pl.width + rng.normal(0.0, cfg.jitter_sigma),
                    detail::line_y(cfg, pl, tail_line) + rng.normal(0.0, sigma_y), skim_duration()});
  }

  const std::size_t body_count = plan.size() - headline_fixations;
  detail::append_dwell(cfg, rng, plan);

  SynthTrial trial;
  trial.label = RelevanceLabel::irrelevant;
  trial.body_fixations = static_cast<int>(body_count);
  trial.path = detail::plan_to_scanpath(std::move(trial_id), cfg, std::move(plan), rng);
  return trial;
}

// n_per_class trials per label, ids "synth-{label}-{i}", relevant block
// first. Each trial draws from its own derived stream, so the set is
// deterministic in (cfg, seed) and independent of worker count.
inline std::vector<SynthTrial> generate_dataset(int n_per_class, const SynthConfig& cfg,
                                                std::uint64_t seed, unsigned jobs = 0) {
  if (n_per_class < 1) throw InvalidSynthConfig("n_per_class must be >= 1");
  cfg.validate();
  std::vector<SynthTrial> out(static_cast<std::size_t>(n_per_class) * 2);
  parallel_for(out.size(), [&](std::size_t i) {
    const bool relevant = i < static_cast<std::size_t>(n_per_class);
    const std::size_t index = relevant ? i : i - static_cast<std::size_t>(n_per_class);
    Rng rng(derive_seed(seed, 2 * index + (relevant ? 0 : 1)));
    std::string id = "synth-";
    id += to_string(relevant ? RelevanceLabel::relevant : RelevanceLabel::irrelevant);
    id += '-';
    id += std::to_string(index);
    out[i] = relevant ? generate_reading(cfg, rng, std::move(id))
                      : generate_skimming(cfg, rng, std::move(id));
  }, jobs);
  return out;
}

// Inverse-samples a scanpath into a 250 Hz gaze log: tremor around each
// centroid while a fixation is active, linear interpolation across gaps.
// Fixation boundaries lie on the grid by construction and each saccade lands
// one sample before the next fixation starts, so the incoming velocity at a
// planted start sample is already tremor-sized and a velocity-threshold pass
// over the log recovers the planted spans sample-exactly.
inline std::vector<GazeSample> to_gaze_log(const Scanpath& sp, Rng& rng) {
  std::vector<GazeSample> out;
  if (sp.fixations.empty()) return out;
  // Clamp keeps the worst-case 2D step (both axes swinging across the full
  // clamp width) at 990 px/s, under the 1000 px/s detector threshold.
  const auto tremor = [&rng] { return std::clamp(rng.normal(0.0, 0.8), -1.4, 1.4); };
  const double t_last = sp.fixations.back().t_end;
  std::size_t seg = 0;
  for (double t = sp.fixations.front().t_start; t <= t_last; t += detail::kSampleStepMs) {
    while (seg + 1 < sp.fixations.size() && t > sp.fixations[seg].t_end &&
           t >= sp.fixations[seg + 1].t_start)
      ++seg;
    const Fixation& f = sp.fixations[seg];
    if (t <= f.t_end) {
      out.push_back({t, f.cx + tremor(), f.cy + tremor(), true});
    } else {
      const Fixation& g = sp.fixations[seg + 1];
      const double arrival = g.t_start - detail::kSampleStepMs;
      if (t >= arrival) {
        out.push_back({t, g.cx + tremor(), g.cy + tremor(), true});
      } else {
        const double u = (t - f.t_end) / (arrival - f.t_end);
        out.push_back({t, f.cx + u * (g.cx - f.cx), f.cy + u * (g.cy - f.cy), true});
      }
    }
  }
  return out;
}

}  // namespace gazelens::synth

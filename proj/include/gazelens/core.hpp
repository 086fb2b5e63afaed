#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace gazelens {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : Error {
  using Error::Error;
};

// Shortest fixation kept anywhere in the pipeline, in ms.
inline constexpr double kMinFixationMs = 110.0;

// Default screen geometry of the recording setup.
inline constexpr double kDefaultScreenW = 1680.0;
inline constexpr double kDefaultScreenH = 1050.0;

// One raw tracker sample. t is ms from trial onset; y grows downward.
struct GazeSample {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  bool valid = true;

  friend bool operator==(const GazeSample&, const GazeSample&) = default;
};

struct BelowFloor : Error {
  explicit BelowFloor(double duration_ms)
      : Error("fixation duration " + std::to_string(duration_ms) +
              " ms is below the 110 ms floor"),
        duration_ms(duration_ms) {}
  double duration_ms;
};

namespace detail {

// Duration bin shared by Fixation and the renderer. Lenient: durations under
// the floor land in bin 1 so that out-of-contract fixations stay representable
// (validate_scanpath reports them instead of throwing).
inline int duration_level_bin(double duration_ms) {
  if (duration_ms >= 550.0) return 4;
  if (duration_ms >= 400.0) return 3;
  if (duration_ms >= 250.0) return 2;
  return 1;
}

}  // namespace detail

// Maps a fixation duration to its encoding level 1-4.
// [110,250) -> 1, [250,400) -> 2, [400,550) -> 3, >= 550 -> 4.
inline int level_of(double duration_ms) {
  if (!(duration_ms >= kMinFixationMs)) throw BelowFloor(duration_ms);
  return detail::duration_level_bin(duration_ms);
}

// A detected fixation: centroid in screen px, onset/offset in ms.
struct Fixation {
  double cx = 0.0;
  double cy = 0.0;
  double t_start = 0.0;
  double t_end = 0.0;
  int level = 1;

  Fixation() = default;
  Fixation(double cx, double cy, double t_start, double t_end)
      : cx(cx),
        cy(cy),
        t_start(t_start),
        t_end(t_end),
        level(detail::duration_level_bin(t_end - t_start)) {}

  double duration() const { return t_end - t_start; }

  friend bool operator==(const Fixation&, const Fixation&) = default;
};

// A named invariant violation. validate_scanpath reports these; nothing in
// core throws for bad data.
struct Violation {
  std::string field;
  std::size_t index = 0;
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

// Time-ordered fixation sequence for one trial.
struct Scanpath {
  std::string trial_id;
  std::vector<Fixation> fixations;
  double screen_w = kDefaultScreenW;
  double screen_h = kDefaultScreenH;
  // Set by assemble() for every centroid that had to be clamped to the screen.
  std::vector<Violation> clamp_notes;

  // Clamps out-of-screen centroids to [0, w) x [0, h) and records a note per
  // clamped fixation. Clamping preserves the fixation count, which the
  // >= 10-fixation trial filter depends on.
  static Scanpath assemble(std::string trial_id, std::vector<Fixation> fixations,
                           double screen_w = kDefaultScreenW,
                           double screen_h = kDefaultScreenH) {
    Scanpath sp;
    sp.trial_id = std::move(trial_id);
    sp.fixations = std::move(fixations);
    sp.screen_w = screen_w;
    sp.screen_h = screen_h;
    const double max_x = std::nextafter(screen_w, 0.0);
    const double max_y = std::nextafter(screen_h, 0.0);
    for (std::size_t i = 0; i < sp.fixations.size(); ++i) {
      auto& f = sp.fixations[i];
      const double cx = std::clamp(f.cx, 0.0, max_x);
      const double cy = std::clamp(f.cy, 0.0, max_y);
      if (cx != f.cx || cy != f.cy) {
        sp.clamp_notes.push_back(
            {"fixation.centroid", i, "clamped to screen rectangle"});
        f.cx = cx;
        f.cy = cy;
      }
    }
    return sp;
  }

  friend bool operator==(const Scanpath& a, const Scanpath& b) {
    return a.trial_id == b.trial_id && a.fixations == b.fixations &&
           a.screen_w == b.screen_w && a.screen_h == b.screen_h;
  }
};

enum class RelevanceLabel { irrelevant = 0, relevant = 1 };

inline const char* to_string(RelevanceLabel label) {
  return label == RelevanceLabel::relevant ? "relevant" : "irrelevant";
}

inline RelevanceLabel relevance_from_string(const std::string& s) {
  if (s == "relevant") return RelevanceLabel::relevant;
  if (s == "irrelevant") return RelevanceLabel::irrelevant;
  throw Error("unknown relevance label: " + s);
}

enum class Split { unassigned, train, val, test, excluded };

inline const char* to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::excluded: return "excluded";
    default: return "unassigned";
  }
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  if (s == "excluded") return Split::excluded;
  if (s == "unassigned") return Split::unassigned;
  throw Error("unknown split: " + s);
}

// One trial in the dataset manifest.
struct TrialRecord {
  std::string trial_id;
  std::string participant_id;
  std::string document_id;
  RelevanceLabel label = RelevanceLabel::irrelevant;
  int fixation_count = 0;
  std::string gaze_log_path;
  std::string fixations_path;
  std::string image_path;
  Split split = Split::unassigned;

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

// Pure check of every Scanpath invariant. Returns one descriptor per
// violation; an empty list means the scanpath is valid.
inline std::vector<Violation> validate_scanpath(const Scanpath& sp) {
  std::vector<Violation> out;
  const auto& fx = sp.fixations;
  for (std::size_t i = 0; i < fx.size(); ++i) {
    const Fixation& f = fx[i];
    if (!std::isfinite(f.cx) || !std::isfinite(f.cy) ||
        !std::isfinite(f.t_start) || !std::isfinite(f.t_end)) {
      out.push_back({"fixation", i, "non-finite field"});
      continue;
    }
    if (!(f.t_end > f.t_start))
      out.push_back({"fixation.t_end", i, "t_end not after t_start"});
    if (f.duration() < kMinFixationMs)
      out.push_back({"fixation.duration", i, "below 110 ms floor"});
    if (f.cx < 0.0 || f.cx >= sp.screen_w || f.cy < 0.0 || f.cy >= sp.screen_h)
      out.push_back({"fixation.centroid", i, "outside screen rectangle"});
    if (f.level != detail::duration_level_bin(f.duration()))
      out.push_back({"fixation.level", i, "level inconsistent with duration bin"});
    if (i > 0) {
      if (f.t_start < fx[i - 1].t_start)
        out.push_back({"fixation.t_start", i, "not ordered by t_start"});
      if (f.t_start < fx[i - 1].t_end)
        out.push_back({"fixation.t_start", i, "temporal overlap with previous fixation"});
    }
  }
  return out;
}

}  // namespace gazelens

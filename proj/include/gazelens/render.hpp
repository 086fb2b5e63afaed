#pragma once

// Scanpath rasterization.
//
// Saccades are drawn first as straight capsule-swept segments, coloured along
// a blue-to-green ramp in temporal order; fixation markers go on top: red
// circle, pink star, yellow pentagon, white cross for duration levels 1-4.
// Coverage is decided per pixel center with pure double arithmetic, so the
// output buffer is a deterministic function of (Scanpath, RenderConfig).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gazelens/core.hpp"
#include "gazelens/png.hpp"

namespace gazelens::render {

using gazelens::level_of;  // duration-to-level binning lives with the core types

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

inline constexpr Rgb kRed{255, 0, 0};
inline constexpr Rgb kPink{255, 105, 180};
inline constexpr Rgb kYellow{255, 255, 0};
inline constexpr Rgb kWhite{255, 255, 255};

inline constexpr double kReferenceScreenH = 1050.0;  // saccade width is quoted at this height
inline constexpr double kReferenceOutH = 224.0;      // marker radii are quoted at this height

struct RenderConfig {
  int out_w = 224;
  int out_h = 224;
  Rgb background{0, 0, 0};
  double saccade_width = 2.0;  // px at reference screen height 1050
  std::array<double, 4> marker_radius_base{3.0, 4.0, 5.0, 6.0};  // px at out_h 224
  bool antialias = false;
  // Render at the scanpath's native screen resolution, then area-downsample.
  bool downsample_from_screen = false;
};

struct ScanpathImage {
  int w = 0;
  int h = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB8, w*h*3

  bool operator==(const ScanpathImage&) const = default;

  void fill(Rgb c) {
    for (std::size_t i = 0; i + 2 < pixels.size(); i += 3) {
      pixels[i] = c.r;
      pixels[i + 1] = c.g;
      pixels[i + 2] = c.b;
    }
  }

  void set(int x, int y, Rgb c) {
    const std::size_t off = (static_cast<std::size_t>(y) * w + x) * 3;
    pixels[off] = c.r;
    pixels[off + 1] = c.g;
    pixels[off + 2] = c.b;
  }

  Rgb at(int x, int y) const {
    const std::size_t off = (static_cast<std::size_t>(y) * w + x) * 3;
    return Rgb{pixels[off], pixels[off + 1], pixels[off + 2]};
  }
};

struct EmptyScanpath : Error {
  EmptyScanpath() : Error("scanpath has no fixations") {}
};

struct IndexOutOfRange : Error {
  IndexOutOfRange() : Error("saccade index out of range") {}
};

// Blue-to-green ramp over saccade order; each saccade is one solid colour.
inline Rgb saccade_color(std::size_t i, std::size_t count) {
  if (count < 1 || i >= count) throw IndexOutOfRange();
  const double t = count > 1 ? static_cast<double>(i) / static_cast<double>(count - 1) : 0.0;
  return Rgb{0, static_cast<std::uint8_t>(std::lround(255.0 * t)),
             static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - t / 2.0)))};
}

namespace detail {

struct Vec2 {
  double x = 0, y = 0;
};

inline double dist_sq_to_segment(Vec2 p, Vec2 a, Vec2 b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double wx = p.x - a.x, wy = p.y - a.y;
  const double vv = vx * vx + vy * vy;
  double t = vv > 0 ? (wx * vx + wy * vy) / vv : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx);
  const double dy = p.y - (a.y + t * vy);
  return dx * dx + dy * dy;
}

inline bool point_in_polygon_evenodd(Vec2 p, const std::vector<Vec2>& poly) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xint = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < xint) inside = !inside;
    }
  }
  return inside;
}

template <class Covers>
void paint_bbox(ScanpathImage& img, Rgb c, double x0, double y0, double x1,
                double y1, Covers&& covers) {
  const int px0 = std::max(0, static_cast<int>(std::floor(x0)));
  const int py0 = std::max(0, static_cast<int>(std::floor(y0)));
  const int px1 = std::min(img.w - 1, static_cast<int>(std::ceil(x1)));
  const int py1 = std::min(img.h - 1, static_cast<int>(std::ceil(y1)));
  for (int y = py0; y <= py1; ++y)
    for (int x = px0; x <= px1; ++x)
      if (covers(Vec2{x + 0.5, y + 0.5})) img.set(x, y, c);
}

inline void draw_capsule(ScanpathImage& img, Vec2 a, Vec2 b, double half_width,
                         Rgb c) {
  // Sub-pixel nominal widths would leave strict center-coverage lines dotted
  // or empty, so the effective radius never drops below half a pixel.
  const double hw = std::max(half_width, 0.5);
  const double hw2 = hw * hw;
  paint_bbox(img, c, std::min(a.x, b.x) - hw - 1, std::min(a.y, b.y) - hw - 1,
             std::max(a.x, b.x) + hw + 1, std::max(a.y, b.y) + hw + 1,
             [&](Vec2 p) { return dist_sq_to_segment(p, a, b) <= hw2; });
}

inline void draw_disk(ScanpathImage& img, Vec2 c0, double r, Rgb c) {
  const double r2 = r * r;
  paint_bbox(img, c, c0.x - r - 1, c0.y - r - 1, c0.x + r + 1, c0.y + r + 1,
             [&](Vec2 p) {
               const double dx = p.x - c0.x, dy = p.y - c0.y;
               return dx * dx + dy * dy <= r2;
             });
}

inline void draw_polygon(ScanpathImage& img, const std::vector<Vec2>& poly, Rgb c) {
  double x0 = poly[0].x, y0 = poly[0].y, x1 = x0, y1 = y0;
  for (const auto& v : poly) {
    x0 = std::min(x0, v.x);
    y0 = std::min(y0, v.y);
    x1 = std::max(x1, v.x);
    y1 = std::max(y1, v.y);
  }
  paint_bbox(img, c, x0 - 1, y0 - 1, x1 + 1, y1 + 1,
             [&](Vec2 p) { return point_in_polygon_evenodd(p, poly); });
}

// Unit offsets at angles -pi/2 + k*pi/5, k = 0..9, i.e. a decagon starting at
// the top (y grows downward). Stored as literals rather than computed with
// libm trig, which is not bit-identical across platforms.
inline constexpr Vec2 kDecagonUnit[10] = {
    {6.123233995736766e-17, -1.0},
    {0.5877852522924731, -0.8090169943749475},
    {0.9510565162951535, -0.3090169943749474},
    {0.9510565162951535, 0.3090169943749474},
    {0.5877852522924731, 0.8090169943749475},
    {6.123233995736766e-17, 1.0},
    {-0.587785252292473, 0.8090169943749475},
    {-0.9510565162951535, 0.3090169943749475},
    {-0.9510565162951536, -0.3090169943749473},
    {-0.5877852522924732, -0.8090169943749473},
};

// Pentagram proportions: inner vertices sit where the star's edges cross,
// at cos(2pi/5)/cos(pi/5) of the outer radius.
inline constexpr double kStarInnerRatio = 0.38196601125010515;

inline std::vector<Vec2> star_points(Vec2 c, double r_outer) {
  const double r_inner = r_outer * kStarInnerRatio;
  std::vector<Vec2> pts;
  pts.reserve(10);
  for (int k = 0; k < 10; ++k) {
    const double r = (k % 2 == 0) ? r_outer : r_inner;
    pts.push_back(Vec2{c.x + r * kDecagonUnit[k].x, c.y + r * kDecagonUnit[k].y});
  }
  return pts;
}

inline std::vector<Vec2> pentagon_points(Vec2 c, double r) {
  std::vector<Vec2> pts;
  pts.reserve(5);
  for (int k = 0; k < 10; k += 2)
    pts.push_back(Vec2{c.x + r * kDecagonUnit[k].x, c.y + r * kDecagonUnit[k].y});
  return pts;
}

inline void draw_cross(ScanpathImage& img, Vec2 c0, double r, Rgb c) {
  const double arm = 2.0 * r;
  const double half_th = std::max(2.0, r / 2.0) / 2.0;
  paint_bbox(img, c, c0.x - arm - 1, c0.y - arm - 1, c0.x + arm + 1, c0.y + arm + 1,
             [&](Vec2 p) {
               const double dx = std::abs(p.x - c0.x), dy = std::abs(p.y - c0.y);
               return (dx <= arm && dy <= half_th) || (dx <= half_th && dy <= arm);
             });
}

inline ScanpathImage render_flat(const Scanpath& sp, int out_w, int out_h,
                                 const RenderConfig& cfg) {
  ScanpathImage img;
  img.w = out_w;
  img.h = out_h;
  img.pixels.assign(static_cast<std::size_t>(out_w) * out_h * 3, 0);
  img.fill(cfg.background);

  const double sx = out_w / sp.screen_w;
  const double sy = out_h / sp.screen_h;
  std::vector<Vec2> pos;
  pos.reserve(sp.fixations.size());
  for (const auto& f : sp.fixations) pos.push_back(Vec2{f.cx * sx, f.cy * sy});

  const double half_width = cfg.saccade_width * out_h / kReferenceScreenH / 2.0;
  const std::size_t n_sacc = sp.fixations.size() - 1;
  for (std::size_t i = 0; i < n_sacc; ++i)
    draw_capsule(img, pos[i], pos[i + 1], half_width, saccade_color(i, n_sacc));

  for (std::size_t i = 0; i < sp.fixations.size(); ++i) {
    const int level = sp.fixations[i].level;
    const double r = cfg.marker_radius_base[static_cast<std::size_t>(level - 1)] *
                     out_h / kReferenceOutH;
    switch (level) {
      case 1: draw_disk(img, pos[i], r, kRed); break;
      case 2: draw_polygon(img, star_points(pos[i], r), kPink); break;
      case 3: draw_polygon(img, pentagon_points(pos[i], r), kYellow); break;
      default: draw_cross(img, pos[i], r, kWhite); break;
    }
  }
  return img;
}

}  // namespace detail

// Area-weighted average downsample to an arbitrary smaller size; exact box
// filter, ties broken by IEEE double arithmetic so results are reproducible.
inline ScanpathImage downsample_area(const ScanpathImage& src, int out_w, int out_h) {
  ScanpathImage dst;
  dst.w = out_w;
  dst.h = out_h;
  dst.pixels.assign(static_cast<std::size_t>(out_w) * out_h * 3, 0);
  const double fx = static_cast<double>(src.w) / out_w;
  const double fy = static_cast<double>(src.h) / out_h;
  for (int oy = 0; oy < out_h; ++oy) {
    const double y0 = oy * fy, y1 = (oy + 1) * fy;
    for (int ox = 0; ox < out_w; ++ox) {
      const double x0 = ox * fx, x1 = (ox + 1) * fx;
      double acc[3] = {0, 0, 0};
      for (int sy = static_cast<int>(std::floor(y0)); sy < src.h && sy < y1; ++sy) {
        const double wy = std::min<double>(sy + 1, y1) - std::max<double>(sy, y0);
        if (wy <= 0) continue;
        for (int sx = static_cast<int>(std::floor(x0)); sx < src.w && sx < x1; ++sx) {
          const double wx = std::min<double>(sx + 1, x1) - std::max<double>(sx, x0);
          if (wx <= 0) continue;
          const Rgb c = src.at(sx, sy);
          acc[0] += wx * wy * c.r;
          acc[1] += wx * wy * c.g;
          acc[2] += wx * wy * c.b;
        }
      }
      const double area = fx * fy;
      dst.set(ox, oy,
              Rgb{static_cast<std::uint8_t>(std::lround(acc[0] / area)),
                  static_cast<std::uint8_t>(std::lround(acc[1] / area)),
                  static_cast<std::uint8_t>(std::lround(acc[2] / area))});
    }
  }
  return dst;
}

inline ScanpathImage render_scanpath(const Scanpath& sp, const RenderConfig& cfg = {}) {
  if (sp.fixations.empty()) throw EmptyScanpath();
  if (cfg.out_w < 32 || cfg.out_h < 32) throw Error("output size must be at least 32");
  if (cfg.saccade_width < 1) throw Error("saccade_width must be at least 1");

  if (cfg.downsample_from_screen) {
    const int nw = static_cast<int>(std::lround(sp.screen_w));
    const int nh = static_cast<int>(std::lround(sp.screen_h));
    return downsample_area(detail::render_flat(sp, nw, nh, cfg), cfg.out_w, cfg.out_h);
  }
  if (cfg.antialias)
    return downsample_area(detail::render_flat(sp, cfg.out_w * 2, cfg.out_h * 2, cfg),
                           cfg.out_w, cfg.out_h);
  return detail::render_flat(sp, cfg.out_w, cfg.out_h, cfg);
}

inline void write_png(const ScanpathImage& img, const std::string& path) {
  png::write_file(path, img.w, img.h, img.pixels.data());
}

inline ScanpathImage read_png(const std::string& path) {
  auto dec = png::read_file(path);
  return ScanpathImage{dec.w, dec.h, std::move(dec.rgb)};
}

}  // namespace gazelens::render

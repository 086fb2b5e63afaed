#pragma once

// Gradient-weighted class activation maps for the trained network.
//
// For a chosen conv block the gradient of the class score (logit for the
// relevant class, negated logit for the irrelevant one) is spatially averaged
// into per-channel weights, the weighted activation sum is rectified,
// bilinearly upsampled to input size and scaled so the peak is 1. Class
// averages renormalize the pixelwise mean of already-normalized maps.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "gazelens/core.hpp"
#include "gazelens/csv.hpp"
#include "gazelens/nn.hpp"
#include "gazelens/parallel.hpp"
#include "gazelens/render.hpp"

namespace gazelens::gradcam {

struct UntrainedModel : Error {
  UntrainedModel() : Error("explanation requires a trained model checkpoint") {}
  explicit UntrainedModel(const std::string& what) : Error(what) {}
};
struct EmptySet : Error {
  EmptySet() : Error("average of an empty heatmap set") {}
};
struct DimMismatch : Error {
  explicit DimMismatch(const std::string& what) : Error("dimension mismatch: " + what) {}
};

struct Heatmap {
  int w = 0;
  int h = 0;
  std::vector<double> values;  // row-major, in [0,1], peak 1 unless all-zero
  std::string trial_id;

  Heatmap() = default;
  Heatmap(int width, int height) : w(width), h(height), values(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0.0) {}

  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)]; }
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)]; }
};

// Scales so the maximum becomes exactly 1; an all-zero map stays all-zero.
// Idempotent: a second pass divides by 1.
inline void normalize(Heatmap& hm) {
  double mx = 0.0;
  for (double v : hm.values) mx = std::max(mx, v);
  if (mx > 0.0) {
    for (double& v : hm.values) v /= mx;
  }
}

inline Heatmap resize_bilinear(const Heatmap& src, int out_w, int out_h) {
  if (src.w <= 0 || src.h <= 0) throw DimMismatch("empty heatmap");
  Heatmap out(out_w, out_h);
  out.trial_id = src.trial_id;
  const double rx = static_cast<double>(src.w) / static_cast<double>(out_w);
  const double ry = static_cast<double>(src.h) / static_cast<double>(out_h);
  for (int oy = 0; oy < out_h; ++oy) {
    const double sy = (oy + 0.5) * ry - 0.5;
    const double fy = sy - std::floor(sy);
    int y0 = static_cast<int>(std::floor(sy));
    int y1 = y0 + 1;
    y0 = std::clamp(y0, 0, src.h - 1);
    y1 = std::clamp(y1, 0, src.h - 1);
    for (int ox = 0; ox < out_w; ++ox) {
      const double sx = (ox + 0.5) * rx - 0.5;
      const double fx = sx - std::floor(sx);
      int x0 = static_cast<int>(std::floor(sx));
      int x1 = x0 + 1;
      x0 = std::clamp(x0, 0, src.w - 1);
      x1 = std::clamp(x1, 0, src.w - 1);
      const double top = src.at(x0, y0) * (1.0 - fx) + src.at(x1, y0) * fx;
      const double bot = src.at(x0, y1) * (1.0 - fx) + src.at(x1, y1) * fx;
      out.at(ox, oy) = top * (1.0 - fy) + bot * fy;
    }
  }
  return out;
}

namespace detail {

// Weighted-activation map for one image of an already-run forward/backward
// pair, at the conv block's own resolution, rectified but not yet normalized.
template <class T>
Heatmap raw_map_for(const nn::Tensor<T>& acts, const nn::Tensor<T>& grads, int image) {
  Heatmap raw(acts.w, acts.h);
  const std::size_t plane = static_cast<std::size_t>(acts.h) * static_cast<std::size_t>(acts.w);
  for (int k = 0; k < acts.c; ++k) {
    const T* gp = grads.plane(image, k);
    const T* ap = acts.plane(image, k);
    double sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) sum += static_cast<double>(gp[i]);
    const double alpha = sum / static_cast<double>(plane);
    for (std::size_t i = 0; i < plane; ++i) raw.values[i] += alpha * static_cast<double>(ap[i]);
  }
  for (double& v : raw.values) v = std::max(v, 0.0);
  return raw;
}

}  // namespace detail

// Class activation maps for a batch of images, upsampled to the model input
// size and normalized. The class score is the logit for the relevant class
// and the negated logit for the irrelevant one. `block` picks the conv block
// whose pooled activations are explained (default: last).
template <class T>
std::vector<Heatmap> gradcam_batch(nn::MiniVgg<T>& model, const std::vector<std::vector<T>>& images,
                                   RelevanceLabel target, int block = 2, unsigned jobs = 0,
                                   std::size_t chunk = 16) {
  const nn::MiniVggSpec& spec = model.spec();
  const std::size_t pixels = static_cast<std::size_t>(spec.in_channels) * static_cast<std::size_t>(spec.in_h) * static_cast<std::size_t>(spec.in_w);
  if (chunk == 0) chunk = 16;
  std::vector<Heatmap> out;
  out.reserve(images.size());
  const double sign = target == RelevanceLabel::relevant ? 1.0 : -1.0;
  for (std::size_t base = 0; base < images.size(); base += chunk) {
    const int n = static_cast<int>(std::min(chunk, images.size() - base));
    nn::Tensor<T> x(n, spec.in_channels, spec.in_h, spec.in_w);
    for (int i = 0; i < n; ++i) {
      const std::vector<T>& img = images[base + static_cast<std::size_t>(i)];
      if (img.size() != pixels) throw DimMismatch("image does not match model input");
      std::copy(img.begin(), img.end(), x.data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(i) * pixels));
    }
    model.forward(x, false, jobs);
    nn::Tensor<T> grad_logit(n, 1, 1, 1);
    for (int i = 0; i < n; ++i) grad_logit.data[static_cast<std::size_t>(i)] = static_cast<T>(sign);
    const nn::Tensor<T> grads = model.backward_logit_to_block(grad_logit, block, jobs);
    const nn::Tensor<T>& acts = model.block_activations(block);
    for (int i = 0; i < n; ++i) {
      Heatmap raw = detail::raw_map_for(acts, grads, i);
      Heatmap up = resize_bilinear(raw, spec.in_w, spec.in_h);
      normalize(up);
      out.push_back(std::move(up));
    }
  }
  return out;
}

template <class T>
Heatmap gradcam(nn::MiniVgg<T>& model, const std::vector<T>& image, RelevanceLabel target,
                int block = 2, unsigned jobs = 0) {
  std::vector<std::vector<T>> one{image};
  return gradcam_batch(model, one, target, block, jobs, 1)[0];
}

// Same map at the conv block's own resolution, normalized but not upsampled.
template <class T>
Heatmap gradcam_raw(nn::MiniVgg<T>& model, const std::vector<T>& image, RelevanceLabel target,
                    int block = 2, unsigned jobs = 0) {
  const nn::MiniVggSpec& spec = model.spec();
  const std::size_t pixels = static_cast<std::size_t>(spec.in_channels) * static_cast<std::size_t>(spec.in_h) * static_cast<std::size_t>(spec.in_w);
  if (image.size() != pixels) throw DimMismatch("image does not match model input");
  nn::Tensor<T> x(1, spec.in_channels, spec.in_h, spec.in_w);
  std::copy(image.begin(), image.end(), x.data.begin());
  model.forward(x, false, jobs);
  nn::Tensor<T> grad_logit(1, 1, 1, 1);
  grad_logit.data[0] = static_cast<T>(target == RelevanceLabel::relevant ? 1.0 : -1.0);
  const nn::Tensor<T> grads = model.backward_logit_to_block(grad_logit, block, jobs);
  Heatmap raw = detail::raw_map_for(model.block_activations(block), grads, 0);
  normalize(raw);
  return raw;
}

// Pixelwise mean of equally-sized normalized maps, renormalized. Per-pixel
// addends are summed in sorted order so the result is exactly independent of
// the input ordering.
inline Heatmap average_heatmap(const std::vector<Heatmap>& maps, unsigned jobs = 0) {
  if (maps.empty()) throw EmptySet();
  const int w = maps.front().w;
  const int h = maps.front().h;
  for (const Heatmap& m : maps) {
    if (m.w != w || m.h != h) throw DimMismatch("heatmap sizes differ");
  }
  Heatmap avg(w, h);
  avg.trial_id = "average";
  const std::size_t pixels = avg.values.size();
  const double inv_n = 1.0 / static_cast<double>(maps.size());
  parallel_for(pixels, [&](std::size_t p) {
    thread_local std::vector<double> scratch;
    scratch.resize(maps.size());
    for (std::size_t m = 0; m < maps.size(); ++m) scratch[m] = maps[m].values[p];
    std::sort(scratch.begin(), scratch.end());
    double sum = 0.0;
    for (double v : scratch) sum += v;
    avg.values[p] = sum * inv_n;
  }, jobs);
  normalize(avg);
  return avg;
}

// Blue (0) to red (1) ramp used for rendering heatmaps over scanpath images.
inline render::Rgb ramp_color(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return render::Rgb{static_cast<std::uint8_t>(std::lround(255.0 * v)), 0,
                     static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - v)))};
}

inline render::ScanpathImage overlay(const render::ScanpathImage& img, const Heatmap& hm, double alpha) {
  if (img.w != hm.w || img.h != hm.h) throw DimMismatch("image and heatmap sizes differ");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("overlay alpha outside [0,1]");
  render::ScanpathImage out = img;
  for (int y = 0; y < hm.h; ++y) {
    for (int x = 0; x < hm.w; ++x) {
      const render::Rgb src = img.at(x, y);
      const render::Rgb ramp = ramp_color(hm.at(x, y));
      const auto blend = [alpha](std::uint8_t a, std::uint8_t b) {
        return static_cast<std::uint8_t>(std::lround((1.0 - alpha) * a + alpha * b));
      };
      out.set(x, y, render::Rgb{blend(src.r, ramp.r), blend(src.g, ramp.g), blend(src.b, ramp.b)});
    }
  }
  return out;
}

inline render::ScanpathImage heatmap_image(const Heatmap& hm) {
  render::ScanpathImage img;
  img.w = hm.w;
  img.h = hm.h;
  img.pixels.assign(static_cast<std::size_t>(hm.w) * static_cast<std::size_t>(hm.h) * 3, 0);
  return overlay(img, hm, 1.0);
}

// Mass fractions by horizontal and vertical thirds (all zero on a zero map).
struct RegionMass {
  double left = 0.0, middle_h = 0.0, right = 0.0;
  double top = 0.0, middle_v = 0.0, bottom = 0.0;
};

inline RegionMass region_mass(const Heatmap& hm) {
  RegionMass rm;
  const int x_lo = hm.w / 3;
  const int x_hi = 2 * hm.w / 3;
  const int y_lo = hm.h / 3;
  const int y_hi = 2 * hm.h / 3;
  double total = 0.0;
  double cols[3] = {0.0, 0.0, 0.0};
  double rows[3] = {0.0, 0.0, 0.0};
  for (int y = 0; y < hm.h; ++y) {
    for (int x = 0; x < hm.w; ++x) {
      const double v = hm.at(x, y);
      total += v;
      cols[x < x_lo ? 0 : (x < x_hi ? 1 : 2)] += v;
      rows[y < y_lo ? 0 : (y < y_hi ? 1 : 2)] += v;
    }
  }
  if (total > 0.0) {
    rm.left = cols[0] / total;
    rm.middle_h = cols[1] / total;
    rm.right = cols[2] / total;
    rm.top = rows[0] / total;
    rm.middle_v = rows[1] / total;
    rm.bottom = rows[2] / total;
  }
  return rm;
}

inline std::string region_mass_csv(const std::vector<std::pair<std::string, Heatmap>>& named) {
  std::string out = "name,left,middle_h,right,top,middle_v,bottom\n";
  for (const auto& [name, hm] : named) {
    const RegionMass rm = region_mass(hm);
    out += name;
    for (double v : {rm.left, rm.middle_h, rm.right, rm.top, rm.middle_v, rm.bottom}) {
      out += ',';
      out += csv::format_double(v);
    }
    out += '\n';
  }
  return out;
}

}  // namespace gazelens::gradcam

#pragma once

// Shared fixtures for the test suites: random scanpath construction and a
// self-cleaning temporary directory.

#include <gazelens/core.hpp>
#include <gazelens/rng.hpp>

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

namespace testutil {

// Random but well-formed scanpath: n fixations inside the screen, strictly
// increasing times, durations spread across all four duration levels.
inline gazelens::Scanpath make_random_scanpath(gazelens::Rng& rng, int n,
                                               double screen_w = gazelens::kDefaultScreenW,
                                               double screen_h = gazelens::kDefaultScreenH) {
  std::vector<gazelens::Fixation> fixes;
  fixes.reserve(static_cast<std::size_t>(n));
  double t = rng.uniform(0.0, 50.0);
  for (int i = 0; i < n; ++i) {
    const double x = rng.uniform(0.0, screen_w);
    const double y = rng.uniform(0.0, screen_h);
    double dur = 0.0;
    switch (rng.uniform_int(0, 3)) {
      case 0: dur = rng.uniform(110.0, 250.0); break;
      case 1: dur = rng.uniform(250.0, 400.0); break;
      case 2: dur = rng.uniform(400.0, 550.0); break;
      default: dur = rng.uniform(550.0, 900.0); break;
    }
    fixes.emplace_back(x, y, t, t + dur);
    t += dur + rng.uniform(10.0, 80.0);
  }
  return gazelens::Scanpath::assemble("t" + std::to_string(n), std::move(fixes), screen_w,
                                      screen_h);
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    base_ = std::filesystem::temp_directory_path() /
            ("gazelens-test-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(base_);
    std::filesystem::create_directories(base_);
  }
  ~TempDir() { std::filesystem::remove_all(base_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return base_; }
  std::string file(const std::string& name) const { return (base_ / name).string(); }

 private:
  std::filesystem::path base_;
};

}  // namespace testutil

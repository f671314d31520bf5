#pragma once

// Shared helpers for the test suites: temporary directories and hand-rolled
// random generators for property tests.

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>

#include "screen/core/grid.hpp"

namespace testing_support {

namespace fs = std::filesystem;

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("screen_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : engine_(seed) {}

  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  bool coin(double p = 0.5) { return real(0.0, 1.0) < p; }
  std::uint64_t bits() { return engine_(); }

  screen::Mask mask(int h, int w, double density) {
    screen::Mask m(h, w);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = coin(density) ? 1 : 0;
    return m;
  }

  screen::Image image(int h, int w) {
    screen::Image img(h, w);
    for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = static_cast<float>(real(0.0, 1.0));
    return img;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace testing_support

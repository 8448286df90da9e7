#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "overopt/world.hpp"

namespace testing_helpers {

inline overopt::WorldConfig small_config(int C = 4, int M = 64, int F = 6, std::uint64_t seed = 7) {
  overopt::WorldConfig c;
  c.contexts = C;
  c.outcomes = M;
  c.features = F;
  c.seed = seed;
  return c;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("overopt_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_helpers

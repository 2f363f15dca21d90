#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "ouro/config.hpp"
#include "ouro/grid.hpp"
#include "ouro/rng.hpp"

namespace testutil {

inline ouro::Grid random_grid(ouro::Shape s, std::uint64_t seed, const char* stream = "test") {
  ouro::NoiseStream rng(seed, stream);
  return rng.sample(s);
}

inline double max_abs_diff(const ouro::Grid& a, const ouro::Grid& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Small but complete pipeline configuration that runs in well under a second.
inline ouro::RunConfig small_config() {
  ouro::RunConfig c;
  c.T = 8;
  c.f = 4;
  c.n_frames = 20;
  c.head_span = 4;
  c.tail_span = 4;
  c.sacfa_frame_span = 4;
  c.bank_rows = 4;
  c.scene.shape = ouro::Shape{4, 16, 16};
  c.scene.subjects[0].radius = 4.0;
  c.scene.subjects[0].position[0] = 6.0;
  c.scene.subjects[0].position[1] = 5.0;
  c.beta_start = 1e-3;
  c.beta_end = 0.2;
  return c;
}

inline std::filesystem::path tmp_dir(const std::string& name) {
  auto p = std::filesystem::path(OURO_TEST_TMP) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testutil

#pragma once

#include "ouro/attention.hpp"
#include "ouro/grid.hpp"

namespace ouro {

// Non-overlapping p x p patches in raster order; each token is the patch
// flattened as [channel][dy][dx].
inline TokenMatrix patchify(const Grid& g, int p) {
  if (p < 1 || g.height() % p != 0 || g.width() % p != 0) {
    throw DimensionError("patchify: " + to_string(g.shape()) + " is not divisible by patch " +
                         std::to_string(p));
  }
  const int gh = g.height() / p;
  const int gw = g.width() / p;
  TokenMatrix t{Matrix(gh * gw, g.channels() * p * p), gh, gw};
  for (int py = 0; py < gh; ++py) {
    for (int px = 0; px < gw; ++px) {
      const int row = py * gw + px;
      int col = 0;
      for (int ch = 0; ch < g.channels(); ++ch) {
        for (int dy = 0; dy < p; ++dy) {
          for (int dx = 0; dx < p; ++dx) t.tokens(row, col++) = g(ch, py * p + dy, px * p + dx);
        }
      }
    }
  }
  return t;
}

inline Grid unpatchify(const Matrix& tokens, const Shape& shape, int p) {
  const int gh = shape.h / p;
  const int gw = shape.w / p;
  if (tokens.rows() != gh * gw || tokens.cols() != shape.c * p * p) {
    throw DimensionError("unpatchify: token matrix does not match " + to_string(shape));
  }
  Grid g(shape);
  for (int py = 0; py < gh; ++py) {
    for (int px = 0; px < gw; ++px) {
      const int row = py * gw + px;
      int col = 0;
      for (int ch = 0; ch < shape.c; ++ch) {
        for (int dy = 0; dy < p; ++dy) {
          for (int dx = 0; dx < p; ++dx) g(ch, py * p + dy, px * p + dx) = tokens(row, col++);
        }
      }
    }
  }
  return g;
}

}  // namespace ouro

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "embal/world.hpp"

namespace embal::testing {

/// Empty rectangular room of w x h cells (boundary included). Walls are
/// class 0 with zero texture; class codes are random unit vectors.
inline GridWorld::Layout room_layout(int w, int h, int classes = 13, int dim = 8,
                                     std::uint64_t seed = 1) {
  GridWorld::Layout l;
  l.seed = seed;
  l.cell_size = 0.25;
  l.width = w;
  l.height = h;
  l.class_count = classes;
  l.appearance_dim = dim;
  l.wall.assign(static_cast<std::size_t>(w) * h, 0);
  l.surface_class.assign(l.wall.size(), -1);
  l.texture.assign(l.wall.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (x == 0 || y == 0 || x == w - 1 || y == h - 1) {
        l.wall[y * w + x] = 1;
        l.surface_class[y * w + x] = 0;
      }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  l.embeddings.resize(static_cast<std::size_t>(classes) * dim);
  for (int c = 0; c < classes; ++c) {
    double s = 0.0;
    for (int d = 0; d < dim; ++d) s += std::pow(l.embeddings[c * dim + d] = n(rng), 2);
    for (int d = 0; d < dim; ++d) l.embeddings[c * dim + d] /= std::sqrt(s);
  }
  l.texture_dir.assign(dim, 0.0);
  return l;
}

/// Turns the inclusive cell rectangle into wall cells of class cls.
inline void fill_block(GridWorld::Layout& l, int x0, int y0, int x1, int y1, int cls) {
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      l.wall[y * l.width + x] = 1;
      l.surface_class[y * l.width + x] = cls;
    }
}

/// Repaints existing wall cells in the rectangle.
inline void paint(GridWorld::Layout& l, int x0, int y0, int x1, int y1, int cls) {
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (l.wall[y * l.width + x]) l.surface_class[y * l.width + x] = cls;
}

inline GridWorld room(int w, int h) { return GridWorld(room_layout(w, h)); }

/// Step counts from `from` by a plain queue flood fill, -1 where unreachable.
inline std::vector<int> flood_fill(const GridWorld& w, CellIndex from) {
  std::vector<int> dist(static_cast<std::size_t>(w.width()) * w.height(), -1);
  std::vector<CellIndex> frontier{from};
  dist[w.index(from)] = 0;
  for (int d = 1; !frontier.empty(); ++d) {
    std::vector<CellIndex> next;
    for (CellIndex c : frontier) {
      for (CellIndex n : {CellIndex{c.x + 1, c.y}, CellIndex{c.x - 1, c.y}, CellIndex{c.x, c.y + 1},
                          CellIndex{c.x, c.y - 1}}) {
        if (w.is_wall(n) || dist[w.index(n)] >= 0) continue;
        dist[w.index(n)] = d;
        next.push_back(n);
      }
    }
    frontier.swap(next);
  }
  return dist;
}

/// True when a wall cell of class `cls` lies within half a cell of `p`:
/// the label sits on a patch boundary the hit point straddles.
inline bool boundary_tie(const GridWorld& w, Vec2 p, int cls) {
  const double r = 0.5 * w.cell_size();
  for (double dx : {-r, 0.0, r})
    for (double dy : {-r, 0.0, r}) {
      const CellIndex c = w.cell_of(Vec2{p.x + dx, p.y + dy});
      if (w.in_bounds(c) && w.is_wall(c) && w.surface_class(c) == cls) return true;
    }
  return false;
}

}  // namespace embal::testing

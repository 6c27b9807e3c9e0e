#include "embal/world.hpp"

#include <algorithm>
#include <deque>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <string>

#include "embal/hash.hpp"

namespace embal {

namespace {

struct Rect {
  int x0, y0, x1, y1;  // half-open [x0, x1) x [y0, y1)
  int w() const { return x1 - x0; }
  int h() const { return y1 - y0; }
  int cx() const { return (x0 + x1) / 2; }
  int cy() const { return (y0 + y1) / 2; }
};

bool overlaps_with_gap(const Rect& a, const Rect& b, int gap) {
  return !(a.x1 + gap <= b.x0 || b.x1 + gap <= a.x0 || a.y1 + gap <= b.y0 ||
           b.y1 + gap <= a.y0);
}

int flood_count(const std::vector<std::uint8_t>& wall, int width, int height, int start) {
  std::vector<std::uint8_t> seen(wall.size(), 0);
  std::vector<int> stack{start};
  seen[start] = 1;
  int count = 0;
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    ++count;
    const int x = i % width;
    const int y = i / width;
    const int nbrs[4][2] = {{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}};
    for (const auto& n : nbrs) {
      if (n[0] < 0 || n[1] < 0 || n[0] >= width || n[1] >= height) continue;
      const int j = n[1] * width + n[0];
      if (!wall[j] && !seen[j]) {
        seen[j] = 1;
        stack.push_back(j);
      }
    }
  }
  return count;
}

bool free_space_connected(const std::vector<std::uint8_t>& wall, int width, int height) {
  int total = 0;
  int first = -1;
  for (std::size_t i = 0; i < wall.size(); ++i) {
    if (!wall[i]) {
      ++total;
      if (first < 0) first = static_cast<int>(i);
    }
  }
  if (total == 0) return false;
  return flood_count(wall, width, height, first) == total;
}

std::vector<double> random_unit(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> v(dim);
  double n2 = 0.0;
  for (auto& x : v) {
    x = gauss(rng);
    n2 += x * x;
  }
  const double n = std::sqrt(n2);
  for (auto& x : v) x /= n;
  return v;
}

void validate_params(const GenParams& p) {
  if (p.cell_size <= 0.0 || p.width_m <= 4 * p.cell_size || p.height_m <= 4 * p.cell_size)
    throw Error("generate_world: world extent too small");
  if (p.class_count < 2) throw Error("generate_world: need at least 2 classes");
  if (p.appearance_dim < 1) throw Error("generate_world: appearance_dim must be positive");
  if (p.min_rooms < 1 || p.max_rooms < p.min_rooms)
    throw Error("generate_world: invalid room count range");
  if (p.min_room_m <= 0.0 || p.max_room_m < p.min_room_m)
    throw Error("generate_world: invalid room size range");
  if (p.max_retries < 1) throw Error("generate_world: max_retries must be positive");
}

std::optional<GridWorld::Layout> try_generate(std::uint64_t seed, const GenParams& p,
                                              std::mt19937_64& rng) {
  const int width = static_cast<int>(std::lround(p.width_m / p.cell_size));
  const int height = static_cast<int>(std::lround(p.height_m / p.cell_size));
  const int min_room = std::max(2, static_cast<int>(std::lround(p.min_room_m / p.cell_size)));
  const int max_room = std::max(min_room, static_cast<int>(std::lround(p.max_room_m / p.cell_size)));
  const int corridor = std::max(1, static_cast<int>(std::lround(p.corridor_width_m / p.cell_size)));
  const int classes = p.class_count;

  std::uniform_int_distribution<int> room_count_dist(p.min_rooms, p.max_rooms);
  const int target_rooms = room_count_dist(rng);

  // Rooms: non-overlapping rectangles separated by at least two wall cells.
  std::vector<Rect> rooms;
  std::uniform_int_distribution<int> size_dist(min_room, max_room);
  for (int attempt = 0; attempt < 400 && static_cast<int>(rooms.size()) < target_rooms; ++attempt) {
    const int w = size_dist(rng);
    const int h = size_dist(rng);
    if (w + 2 > width - 1 || h + 2 > height - 1) continue;
    std::uniform_int_distribution<int> xd(1, width - 1 - w);
    std::uniform_int_distribution<int> yd(1, height - 1 - h);
    const Rect r{xd(rng), yd(rng), 0, 0};
    const Rect room{r.x0, r.y0, r.x0 + w, r.y0 + h};
    bool ok = true;
    for (const auto& other : rooms) {
      if (overlaps_with_gap(room, other, 2)) {
        ok = false;
        break;
      }
    }
    if (ok) rooms.push_back(room);
  }
  if (static_cast<int>(rooms.size()) < p.min_rooms) return std::nullopt;

  GridWorld::Layout l;
  l.seed = seed;
  l.cell_size = p.cell_size;
  l.width = width;
  l.height = height;
  l.class_count = classes;
  l.appearance_dim = p.appearance_dim;
  l.wall.assign(static_cast<std::size_t>(width) * height, 1);
  l.surface_class.assign(l.wall.size(), 0);
  l.texture.assign(l.wall.size(), 0.0);

  auto idx = [&](int x, int y) { return y * width + x; };
  auto carve = [&](int x0, int y0, int x1, int y1) {
    for (int y = std::max(1, y0); y < std::min(height - 1, y1); ++y)
      for (int x = std::max(1, x0); x < std::min(width - 1, x1); ++x) l.wall[idx(x, y)] = 0;
  };
  for (const auto& r : rooms) carve(r.x0, r.y0, r.x1, r.y1);

  // Corridors along a minimum spanning tree over room centres (Prim).
  const std::size_t n = rooms.size();
  std::vector<std::uint8_t> in_tree(n, 0);
  in_tree[0] = 1;
  for (std::size_t added = 1; added < n; ++added) {
    long best = -1;
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < n; ++a) {
      if (!in_tree[a]) continue;
      for (std::size_t b = 0; b < n; ++b) {
        if (in_tree[b]) continue;
        const long dx = rooms[a].cx() - rooms[b].cx();
        const long dy = rooms[a].cy() - rooms[b].cy();
        const long d = dx * dx + dy * dy;
        if (best < 0 || d < best) {
          best = d;
          ba = a;
          bb = b;
        }
      }
    }
    in_tree[bb] = 1;
    const int ax = rooms[ba].cx(), ay = rooms[ba].cy();
    const int bx = rooms[bb].cx(), by = rooms[bb].cy();
    const int half = corridor / 2;
    carve(std::min(ax, bx) - half, ay - half, std::max(ax, bx) - half + corridor, ay - half + corridor);
    carve(bx - half, std::min(ay, by) - half, bx - half + corridor, std::max(ay, by) - half + corridor);
  }

  // Each room draws its own subset of object classes.
  std::vector<int> class_pool;
  for (int c = 1; c < classes; ++c) class_pool.push_back(c);
  std::shuffle(class_pool.begin(), class_pool.end(), rng);
  std::vector<std::vector<int>> themes(n);
  if (!class_pool.empty()) {
    int cursor = 0;
    for (std::size_t r = 0; r < n; ++r) {
      for (int k = 0; k < p.classes_per_room; ++k) {
        themes[r].push_back(class_pool[cursor % class_pool.size()]);
        ++cursor;
      }
    }
  }

  // Wall patches: strips of object class painted onto the wall rows bordering a room.
  std::uniform_int_distribution<int> side_dist(0, 3);
  std::uniform_int_distribution<int> len_dist(3, 8);
  std::uniform_int_distribution<int> depth_dist(1, 2);
  for (std::size_t r = 0; r < n && !themes[r].empty(); ++r) {
    const Rect& room = rooms[r];
    std::uniform_int_distribution<std::size_t> theme_dist(0, themes[r].size() - 1);
    for (int k = 0; k < p.patches_per_room; ++k) {
      const int cls = themes[r][theme_dist(rng)];
      const int side = side_dist(rng);
      const int len = len_dist(rng);
      const int depth = depth_dist(rng);
      const bool horizontal = side < 2;
      const int span = horizontal ? room.w() : room.h();
      std::uniform_int_distribution<int> off_dist(0, std::max(0, span - len));
      const int off = off_dist(rng);
      for (int t = off; t < std::min(span, off + len); ++t) {
        for (int d = 0; d < depth; ++d) {
          int x, y;
          switch (side) {
            case 0: x = room.x0 + t; y = room.y0 - 1 - d; break;
            case 1: x = room.x0 + t; y = room.y1 + d; break;
            case 2: x = room.x0 - 1 - d; y = room.y0 + t; break;
            default: x = room.x1 + d; y = room.y0 + t; break;
          }
          if (x < 0 || y < 0 || x >= width || y >= height) continue;
          if (l.wall[idx(x, y)]) l.surface_class[idx(x, y)] = cls;
        }
      }
    }
  }

  // Free-standing obstacle blocks; rejected if they would split free space.
  std::uniform_int_distribution<int> block_dist(2, 4);
  for (std::size_t r = 0; r < n && !themes[r].empty(); ++r) {
    const Rect& room = rooms[r];
    std::uniform_int_distribution<std::size_t> theme_dist(0, themes[r].size() - 1);
    for (int k = 0; k < p.obstacles_per_room; ++k) {
      const int bw = block_dist(rng);
      const int bh = block_dist(rng);
      const int cls = themes[r][theme_dist(rng)];
      const int margin = 3;
      if (room.w() < bw + 2 * margin || room.h() < bh + 2 * margin) continue;
      std::uniform_int_distribution<int> xd(room.x0 + margin, room.x1 - margin - bw);
      std::uniform_int_distribution<int> yd(room.y0 + margin, room.y1 - margin - bh);
      const int x0 = xd(rng), y0 = yd(rng);
      std::vector<std::pair<int, std::uint8_t>> saved;
      for (int y = y0; y < y0 + bh; ++y) {
        for (int x = x0; x < x0 + bw; ++x) {
          saved.emplace_back(idx(x, y), l.wall[idx(x, y)]);
          l.wall[idx(x, y)] = 1;
        }
      }
      if (!free_space_connected(l.wall, width, height)) {
        for (const auto& [i, w] : saved) l.wall[i] = w;
      } else {
        for (const auto& [i, w] : saved) l.surface_class[i] = cls;
      }
    }
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < l.wall.size(); ++i) {
    if (l.wall[i]) {
      l.texture[i] = unit(rng);
    } else {
      l.surface_class[i] = -1;
      l.texture[i] = 0.0;
    }
  }

  // Appearance: blend of a code shared by all worlds and a per-world code.
  std::mt19937_64 shared_rng(0x5eed'c1a5'5c0d'e5ULL);
  const double s = std::clamp(p.shared_appearance, 0.0, 1.0);
  const double t = std::sqrt(1.0 - s * s);
  l.embeddings.resize(static_cast<std::size_t>(classes) * p.appearance_dim);
  for (int c = 0; c < classes; ++c) {
    const auto shared = random_unit(shared_rng, p.appearance_dim);
    const auto own = random_unit(rng, p.appearance_dim);
    double n2 = 0.0;
    std::vector<double> e(p.appearance_dim);
    for (int d = 0; d < p.appearance_dim; ++d) {
      e[d] = s * shared[d] + t * own[d];
      n2 += e[d] * e[d];
    }
    const double nrm = std::sqrt(n2);
    for (int d = 0; d < p.appearance_dim; ++d)
      l.embeddings[static_cast<std::size_t>(c) * p.appearance_dim + d] = e[d] / nrm;
  }
  l.texture_dir = random_unit(rng, p.appearance_dim);
  for (auto& v : l.texture_dir) v *= p.texture_scale;

  if (!free_space_connected(l.wall, width, height)) return std::nullopt;
  return l;
}

void check_unit_stream(std::istream& in, const char* what) {
  if (!in) throw Error(std::string("GridWorld::load: malformed ") + what);
}

}  // namespace

GridWorld::GridWorld(Layout layout) : l_(std::move(layout)) {
  const std::size_t cells = static_cast<std::size_t>(l_.width) * l_.height;
  if (l_.width < 3 || l_.height < 3 || l_.cell_size <= 0.0)
    throw Error("GridWorld: degenerate dimensions");
  if (l_.class_count < 1 || l_.appearance_dim < 1)
    throw Error("GridWorld: class_count and appearance_dim must be positive");
  if (l_.wall.size() != cells || l_.surface_class.size() != cells || l_.texture.size() != cells)
    throw Error("GridWorld: per-cell arrays have wrong size");
  if (l_.embeddings.size() != static_cast<std::size_t>(l_.class_count) * l_.appearance_dim ||
      l_.texture_dir.size() != static_cast<std::size_t>(l_.appearance_dim))
    throw Error("GridWorld: appearance arrays have wrong size");
  for (int x = 0; x < l_.width; ++x) {
    if (!l_.wall[x] || !l_.wall[(l_.height - 1) * l_.width + x])
      throw Error("GridWorld: boundary must be walls");
  }
  for (int y = 0; y < l_.height; ++y) {
    if (!l_.wall[y * l_.width] || !l_.wall[y * l_.width + l_.width - 1])
      throw Error("GridWorld: boundary must be walls");
  }
  for (std::size_t i = 0; i < cells; ++i) {
    const int c = l_.surface_class[i];
    if (l_.wall[i]) {
      if (c < 0 || c >= l_.class_count) throw Error("GridWorld: wall cell class out of range");
      if (l_.texture[i] < 0.0 || l_.texture[i] > 1.0) throw Error("GridWorld: texture out of [0,1]");
    } else {
      if (c != -1) throw Error("GridWorld: free cell carries a surface class");
      ++free_count_;
    }
  }
  if (!free_space_connected(l_.wall, l_.width, l_.height))
    throw Error("GridWorld: free space must be a single connected component");
}

std::vector<CellIndex> GridWorld::free_cells() const {
  std::vector<CellIndex> out;
  out.reserve(free_count_);
  for (int i = 0; i < l_.width * l_.height; ++i)
    if (!l_.wall[i]) out.push_back(cell_at(i));
  return out;
}

bool operator==(const GridWorld& a, const GridWorld& b) {
  const auto& x = a.l_;
  const auto& y = b.l_;
  return x.seed == y.seed && x.cell_size == y.cell_size && x.width == y.width &&
         x.height == y.height && x.class_count == y.class_count &&
         x.appearance_dim == y.appearance_dim && x.wall == y.wall &&
         x.surface_class == y.surface_class && x.texture == y.texture &&
         x.embeddings == y.embeddings && x.texture_dir == y.texture_dir;
}

// Text format, version 1:
//   embal-world 1
//   <seed> <cell_size> <width> <height> <class_count> <appearance_dim>
//   class_count lines of appearance_dim embedding values
//   one line of appearance_dim texture direction values
//   width*height lines "<wall> <class> <texture>" in row-major order
void GridWorld::save(std::ostream& out) const {
  const auto prec = out.precision(17);
  out << "embal-world 1\n";
  out << l_.seed << ' ' << l_.cell_size << ' ' << l_.width << ' ' << l_.height << ' '
      << l_.class_count << ' ' << l_.appearance_dim << '\n';
  for (int c = 0; c < l_.class_count; ++c) {
    for (int d = 0; d < l_.appearance_dim; ++d)
      out << (d ? " " : "") << l_.embeddings[static_cast<std::size_t>(c) * l_.appearance_dim + d];
    out << '\n';
  }
  for (int d = 0; d < l_.appearance_dim; ++d) out << (d ? " " : "") << l_.texture_dir[d];
  out << '\n';
  for (std::size_t i = 0; i < l_.wall.size(); ++i)
    out << int(l_.wall[i]) << ' ' << l_.surface_class[i] << ' ' << l_.texture[i] << '\n';
  out.precision(prec);
}

GridWorld GridWorld::load(std::istream& in) {
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "embal-world" || version != 1) throw Error("GridWorld::load: not a version-1 world file");
  Layout l;
  in >> l.seed >> l.cell_size >> l.width >> l.height >> l.class_count >> l.appearance_dim;
  check_unit_stream(in, "header");
  if (l.width <= 0 || l.height <= 0 || l.class_count <= 0 || l.appearance_dim <= 0 ||
      static_cast<long long>(l.width) * l.height > (1LL << 26))
    throw Error("GridWorld::load: bad dimensions");
  l.embeddings.resize(static_cast<std::size_t>(l.class_count) * l.appearance_dim);
  for (auto& v : l.embeddings) in >> v;
  l.texture_dir.resize(l.appearance_dim);
  for (auto& v : l.texture_dir) in >> v;
  check_unit_stream(in, "appearance block");
  const std::size_t cells = static_cast<std::size_t>(l.width) * l.height;
  l.wall.resize(cells);
  l.surface_class.resize(cells);
  l.texture.resize(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    int w = 0;
    in >> w >> l.surface_class[i] >> l.texture[i];
    l.wall[i] = static_cast<std::uint8_t>(w != 0);
  }
  check_unit_stream(in, "cell records");
  return GridWorld(std::move(l));
}

GridWorld generate_world(std::uint64_t seed, const GenParams& params) {
  validate_params(params);
  for (int attempt = 0; attempt < params.max_retries; ++attempt) {
    std::mt19937_64 rng(hash_combine(seed, static_cast<std::uint64_t>(attempt)));
    if (auto layout = try_generate(seed, params, rng)) return GridWorld(std::move(*layout));
  }
  throw Error("generate_world: no valid layout after " + std::to_string(params.max_retries) +
              " attempts; parameters are degenerate");
}

namespace {

double snap(double v) {
  if (std::abs(v) < 1e-12) return 0.0;
  if (std::abs(v - 1.0) < 1e-12) return 1.0;
  if (std::abs(v + 1.0) < 1e-12) return -1.0;
  return v;
}

}  // namespace

StepResult step_pose(const GridWorld& world, const Pose& pose, Action action) {
  StepResult res{pose, false};
  switch (action) {
    case Action::RotateLeft:
      res.pose.heading = wrap_heading(pose.heading + 1);
      return res;
    case Action::RotateRight:
      res.pose.heading = wrap_heading(pose.heading - 1);
      return res;
    case Action::MoveForward:
    case Action::MoveLeft:
    case Action::MoveRight:
      break;
    default:
      return res;
  }
  double angle = pose.heading_rad();
  if (action == Action::MoveLeft) angle += kPi / 2.0;
  if (action == Action::MoveRight) angle -= kPi / 2.0;
  const Vec2 delta{kMoveStep * snap(std::cos(angle)), kMoveStep * snap(std::sin(angle))};
  constexpr int kSamples = 5;  // 0.05 m spacing over a 0.25 m step
  for (int s = 1; s <= kSamples; ++s) {
    const Vec2 p = pose.position() + (static_cast<double>(s) / kSamples) * delta;
    if (world.is_wall(world.cell_of(p))) {
      res.collided = true;
      return res;
    }
  }
  res.pose.x = pose.x + delta.x;
  res.pose.y = pose.y + delta.y;
  return res;
}

std::vector<int> distance_field(const GridWorld& world, CellIndex from) {
  std::vector<int> dist(static_cast<std::size_t>(world.width()) * world.height(), -1);
  if (world.is_wall(from)) return dist;
  std::deque<int> queue{world.index(from)};
  dist[world.index(from)] = 0;
  const int w = world.width();
  while (!queue.empty()) {
    const int i = queue.front();
    queue.pop_front();
    const int nbrs[4] = {i + 1, i - 1, i + w, i - w};
    for (int j : nbrs) {
      // Boundary walls keep neighbour indices in range.
      if (dist[j] < 0 && world.is_free(world.cell_at(j))) {
        dist[j] = dist[i] + 1;
        queue.push_back(j);
      }
    }
  }
  return dist;
}

double geodesic_distance(const GridWorld& world, Vec2 a, Vec2 b) {
  const CellIndex ca = world.cell_of(a);
  const CellIndex cb = world.cell_of(b);
  if (world.is_wall(ca) || world.is_wall(cb)) return kUnreachable;
  if (ca == cb) return 0.0;
  const auto dist = distance_field(world, ca);
  const int d = dist[world.index(cb)];
  return d < 0 ? kUnreachable : d * world.cell_size();
}

std::vector<CellIndex> shortest_path(const GridWorld& world, CellIndex a, CellIndex b,
                                     const std::vector<std::uint8_t>* allowed) {
  auto passable = [&](int i) {
    return world.is_free(world.cell_at(i)) && (!allowed || (*allowed)[i]);
  };
  if (!world.in_bounds(a) || !world.in_bounds(b)) return {};
  const int ia = world.index(a), ib = world.index(b);
  if (!passable(ia) || !passable(ib)) return {};
  const int w = world.width();
  const int offset[4] = {1, -1, w, -w};

  // Breadth-first layers from a, stopping at b's layer.
  std::vector<int> dist(static_cast<std::size_t>(w) * world.height(), -1);
  std::vector<int> order{ia};
  dist[ia] = 0;
  for (std::size_t head = 0; head < order.size() && dist[ib] < 0; ++head) {
    const int i = order[head];
    for (int o : offset) {
      const int j = i + o;
      if (dist[j] < 0 && passable(j)) {
        dist[j] = dist[i] + 1;
        order.push_back(j);
      }
    }
  }
  if (dist[ib] < 0) return {};

  // Among shortest paths, fewest direction changes: turns[i*4+d] counts the
  // turns of the best path reaching i by a step in direction d.
  constexpr int kNone = std::numeric_limits<int>::max();
  std::vector<int> turns(dist.size() * 4, kNone);
  for (int i : order) {
    for (int d = 0; d < 4; ++d) {
      const int p = i - offset[d];
      if (i == ia || dist[p] != dist[i] - 1) continue;
      int best = kNone;
      if (p == ia) best = 0;
      for (int e = 0; e < 4 && p != ia; ++e)
        if (turns[p * 4 + e] != kNone) best = std::min(best, turns[p * 4 + e] + (e != d));
      turns[i * 4 + d] = best;
    }
  }
  std::vector<CellIndex> path{b};
  int i = ib, d = -1;
  while (i != ia) {
    int pick = -1;
    for (int e = 0; e < 4; ++e) {
      const int t = turns[i * 4 + e];
      if (t == kNone) continue;
      const int cost = t + (d >= 0 && e != d);
      if (pick < 0 || cost < turns[i * 4 + pick] + (d >= 0 && pick != d)) pick = e;
    }
    i -= offset[pick];
    d = pick;
    path.push_back(world.cell_at(i));
  }
  std::reverse(path.begin(), path.end());
  return path;
}

Pose sample_start_pose(const GridWorld& world, std::uint64_t seed) {
  const auto cells = world.free_cells();
  const std::uint64_t h = splitmix64(seed ^ 0x57a27ULL);
  const CellIndex c = cells[h % cells.size()];
  const Vec2 p = world.center_of(c);
  return Pose{p.x, p.y, static_cast<int>(splitmix64(h) % kHeadingCount)};
}

}  // namespace embal

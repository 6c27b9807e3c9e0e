#include "embal/tsp.hpp"

#include <algorithm>
#include <limits>

#include "embal/types.hpp"

namespace embal::tsp {

double path_length(const DistanceMatrix& d, const Tour& tour) {
  double len = 0.0;
  for (std::size_t i = 1; i < tour.size(); ++i) len += d(tour[i - 1], tour[i]);
  return len;
}

namespace {

// Greedily appends the nearest unvisited node to a fixed prefix.
Tour extend_nearest(const DistanceMatrix& d, Tour tour) {
  const int n = static_cast<int>(d.rows());
  std::vector<std::uint8_t> used(n, 0);
  for (int v : tour) used[v] = 1;
  while (static_cast<int>(tour.size()) < n) {
    const int cur = tour.back();
    int best = -1;
    double bd = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (!used[j] && d(cur, j) < bd) {
        bd = d(cur, j);
        best = j;
      }
    }
    if (best < 0) {  // remaining nodes unreachable: append in index order
      for (int j = 0; j < n; ++j)
        if (!used[j]) best = j;
    }
    used[best] = 1;
    tour.push_back(best);
  }
  return tour;
}

}  // namespace

Tour nearest_neighbor(const DistanceMatrix& d, int start) {
  const int n = static_cast<int>(d.rows());
  if (n == 0) return {};
  if (start < 0 || start >= n) throw Error("nearest_neighbor: start out of range");
  return extend_nearest(d, {start});
}

namespace {

// Length change from reversing tour[i..k] of an open path.
double reversal_gain(const DistanceMatrix& d, const Tour& t, int i, int k) {
  const int n = static_cast<int>(t.size());
  double before = 0.0, after = 0.0;
  if (i > 0) {
    before += d(t[i - 1], t[i]);
    after += d(t[i - 1], t[k]);
  }
  if (k < n - 1) {
    before += d(t[k], t[k + 1]);
    after += d(t[i], t[k + 1]);
  }
  return before - after;
}

}  // namespace

bool has_improving_two_opt(const DistanceMatrix& d, const Tour& tour, bool fixed_start,
                           double tol) {
  const int n = static_cast<int>(tour.size());
  for (int i = fixed_start ? 1 : 0; i < n - 1; ++i)
    for (int k = i + 1; k < n; ++k)
      if (reversal_gain(d, tour, i, k) > tol) return true;
  return false;
}

Tour two_opt(const DistanceMatrix& d, Tour tour, bool fixed_start) {
  const int n = static_cast<int>(tour.size());
  constexpr double kTol = 1e-9;
  for (;;) {
    double best = kTol;
    int bi = -1, bk = -1;
    for (int i = fixed_start ? 1 : 0; i < n - 1; ++i) {
      for (int k = i + 1; k < n; ++k) {
        const double g = reversal_gain(d, tour, i, k);
        if (g > best) {
          best = g;
          bi = i;
          bk = k;
        }
      }
    }
    if (bi < 0) break;
    std::reverse(tour.begin() + bi, tour.begin() + bk + 1);
  }
  return tour;
}

Tour or_opt(const DistanceMatrix& d, Tour tour, bool fixed_start) {
  const int n = static_cast<int>(tour.size());
  constexpr double kTol = 1e-9;
  const int lo = fixed_start ? 1 : 0;
  auto edge = [&](int a, int b) { return a < 0 || b < 0 ? 0.0 : d(a, b); };
  for (;;) {
    double best = kTol;
    int bi = -1, blen = 0, bgap = 0;
    bool brev = false;
    for (int len = 1; len <= 3 && len < n - lo; ++len) {
      for (int i = lo; i + len <= n; ++i) {
        const int j = i + len - 1;
        const int p = i > 0 ? tour[i - 1] : -1;
        const int q = j < n - 1 ? tour[j + 1] : -1;
        const double removed = edge(p, tour[i]) + edge(tour[j], q) - edge(p, q);
        const int m = n - len;
        auto rest = [&](int x) { return x < i ? tour[x] : tour[x + len]; };
        for (int g = lo; g <= m; ++g) {
          const int u = g > 0 ? rest(g - 1) : -1;
          const int v = g < m ? rest(g) : -1;
          const double bridge = edge(u, v);
          for (const bool rev : {false, true}) {
            const int first = rev ? tour[j] : tour[i];
            const int last = rev ? tour[i] : tour[j];
            const double gain = removed - (edge(u, first) + edge(last, v) - bridge);
            if (gain > best) {
              best = gain;
              bi = i;
              blen = len;
              bgap = g;
              brev = rev;
            }
          }
        }
      }
    }
    if (bi < 0) break;
    Tour seg(tour.begin() + bi, tour.begin() + bi + blen);
    if (brev) std::reverse(seg.begin(), seg.end());
    tour.erase(tour.begin() + bi, tour.begin() + bi + blen);
    tour.insert(tour.begin() + bgap, seg.begin(), seg.end());
  }
  return tour;
}

Tour local_search(const DistanceMatrix& d, Tour tour, bool fixed_start) {
  for (;;) {
    const double before = path_length(d, tour);
    tour = or_opt(d, two_opt(d, std::move(tour), fixed_start), fixed_start);
    if (path_length(d, tour) >= before - 1e-12) return tour;
  }
}

Tour solve_open(const DistanceMatrix& d, std::optional<int> start) {
  const int n = static_cast<int>(d.rows());
  if (d.cols() != n) throw Error("solve_open: distance matrix must be square");
  if (n == 0) return {};
  if (start && (*start < 0 || *start >= n)) throw Error("solve_open: start out of range");
  if (n == 1) return {0};
  Tour best;
  double best_len = std::numeric_limits<double>::infinity();
  auto keep = [&](Tour t) {
    const double len = path_length(d, t);
    if (len < best_len - 1e-12) {
      best_len = len;
      best = std::move(t);
    }
  };
  if (start) {
    for (int b = 0; b < n; ++b)
      if (b != *start) keep(local_search(d, extend_nearest(d, {*start, b}), true));
  } else {
    for (int s = 0; s < n; ++s) keep(local_search(d, extend_nearest(d, {s}), false));
  }
  return best;
}

}  // namespace embal::tsp

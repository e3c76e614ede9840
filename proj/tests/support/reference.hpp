#pragma once

// Independent oracles shared by the unit tests and the acceptance binary.
// They restate the rules directly and never call the code they check.

#include "lamarl/env/grid_world.hpp"
#include "lamarl/lang/vocabulary.hpp"
#include "lamarl/nn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace lamarl::reference {

using nn::Matrix;
using nn::Real;

// ---- language ------------------------------------------------------------------

// Zone words from fractional thirds of the grid.
inline std::string zone_words(env::Cell c, int size) {
  const double third = size / 3.0;
  std::string v = c.row < third ? "North" : (c.row >= 2 * third ? "South" : "");
  std::string h = c.col >= 2 * third ? "East" : (c.col < third ? "West" : "");
  if (v.empty() && h.empty()) return "Center";
  if (v.empty()) return h;
  if (h.empty()) return v;
  return v + " " + h;
}

inline int word_count(const std::string& s) {
  std::istringstream in(s);
  std::string w;
  int n = 0;
  while (in >> w) ++n;
  return n;
}

inline std::string level_color(int level) { return level == 1 ? "Yellow" : level == 2 ? "Green" : "Purple"; }

// Scans the 5x5 window row by row and keeps whole phrases while they fit.
inline std::string expected_description(const env::GridState& s, int agent) {
  const env::Cell me = s.agents[static_cast<std::size_t>(agent)];
  const int size = s.config.width;
  std::string out;
  int used = 0;
  bool full = false;
  auto add = [&](const std::string& phrase) {
    if (full) return;
    const int n = word_count(phrase);
    if (used + n + 1 > lang::kMaxDescriptionLength) {
      full = true;
      return;
    }
    out += (out.empty() ? "" : " ") + phrase;
    used += n;
  };
  if (s.config.task == env::Task::CoordinatedPlacement) {
    for (const env::Landmark& l : s.landmarks)
      if (l.covers(me)) add(std::string(env::to_string(l.color)) + " " + zone_words(me, size));
    return out;
  }
  for (int r = me.row - 2; r <= me.row + 2; ++r)
    for (int c = me.col - 2; c <= me.col + 2; ++c) {
      const env::Cell cell{r, c};
      for (const env::Prey& p : s.preys)
        if (!p.captured && p.pos == cell) add("Prey " + zone_words(cell, size));
      for (const env::Resource& g : s.resources)
        if (!g.foraged && g.pos == cell) add("Gem " + level_color(g.level) + " " + zone_words(cell, size));
    }
  return out;
}

// One agent at `agent` with task entities scattered in its view.
inline env::GridState scene(env::Task task, int size, env::Cell agent, std::mt19937_64& rng) {
  env::GridState s;
  s.config.task = task;
  s.config.width = s.config.height = size;
  s.config.n_agents = 1;
  s.agents = {agent};
  std::uniform_int_distribution<int> near(-2, 2);
  auto nearby = [&]() {
    for (;;) {
      const env::Cell c{agent.row + near(rng), agent.col + near(rng)};
      if (s.in_bounds(c) && c != agent && !s.blocked_by_entity(c)) return c;
    }
  };
  if (task == env::Task::PredatorPrey) {
    for (int i = 0; i < 3; ++i) s.preys.push_back({nearby(), i == 2});
  } else if (task == env::Task::Foraging) {
    for (int level : {1, 2, 3, 1}) s.resources.push_back({nearby(), level, false});
  } else {
    std::uniform_int_distribution<int> color(0, env::kNumLandmarkColors - 1);
    std::uniform_int_distribution<int> off(-1, 0);
    if (color(rng) % 2 == 0)
      s.landmarks.push_back({{agent.row + off(rng), agent.col + off(rng)}, static_cast<env::LandmarkColor>(color(rng))});
  }
  return s;
}

// ---- environment ---------------------------------------------------------------

inline env::GridState blank(env::Task task, int size, std::vector<env::Cell> agents) {
  env::GridState s;
  s.config.task = task;
  s.config.width = s.config.height = size;
  s.config.n_agents = static_cast<int>(agents.size());
  s.agents = std::move(agents);
  s.rng.seed(0);
  return s;
}

// Neighbours counted by listing the four cells, not by distance.
inline int count_neighbours(const std::vector<env::Cell>& agents, env::Cell c) {
  const env::Cell around[] = {{c.row - 1, c.col}, {c.row + 1, c.col}, {c.row, c.col - 1}, {c.row, c.col + 1}};
  int n = 0;
  for (const env::Cell& a : around) n += static_cast<int>(std::count(agents.begin(), agents.end(), a));
  return n;
}

// Visits every set of at most `max_agents` cells of a 5x5 grid other than the centre.
template <class Visit>
long for_each_placement(int max_agents, Visit&& visit) {
  const env::Cell centre{2, 2};
  std::vector<env::Cell> cells;
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c)
      if (env::Cell{r, c} != centre) cells.push_back({r, c});
  long placements = 0;
  std::vector<env::Cell> chosen;
  auto rec = [&](auto&& self, std::size_t start) -> void {
    visit(chosen);
    ++placements;
    if (static_cast<int>(chosen.size()) == max_agents) return;
    for (std::size_t i = start; i < cells.size(); ++i) {
      chosen.push_back(cells[i]);
      self(self, i + 1);
      chosen.pop_back();
    }
  };
  rec(rec, 0);
  return placements;
}

// ---- formulas ------------------------------------------------------------------

// A_t = sum_l (gamma lambda)^l delta_{t+l}, cut at the first terminal.
inline std::vector<Real> brute_force_gae(const std::vector<Real>& r, const std::vector<Real>& v,
                                         const std::vector<int>& done, Real gamma, Real lambda) {
  const std::size_t n = r.size();
  std::vector<Real> adv(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    Real coef = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      const Real next = (done[k] || k + 1 == n) ? 0.0 : v[k + 1];
      adv[t] += coef * (r[k] + gamma * next - v[k]);
      if (done[k]) break;
      coef *= gamma * lambda;
    }
  }
  return adv;
}

// sum_j [ -cos(v_j, l_j) + sum_{k != j} cos(v_j, l_k) ].
inline Real brute_force_clip(const Matrix& v, const Matrix& l) {
  auto norm = [](const Matrix& m, nn::Index r) {
    Real s = 0;
    for (nn::Index c = 0; c < m.cols(); ++c) s += m(r, c) * m(r, c);
    return std::sqrt(s);
  };
  Real total = 0;
  for (nn::Index j = 0; j < v.rows(); ++j) {
    for (nn::Index k = 0; k < l.rows(); ++k) {
      Real dot = 0;
      for (nn::Index c = 0; c < v.cols(); ++c) dot += v(j, c) * l(k, c);
      const Real cos = dot / (norm(v, j) * norm(l, k));
      total += (j == k) ? -cos : cos;
    }
  }
  return total;
}

// Mean over points of (b - a) / max(a, b); points alone in their cluster count 0.
inline Real brute_force_silhouette(const std::vector<std::vector<Real>>& pts, const std::vector<std::string>& labels) {
  auto dist = [&](std::size_t i, std::size_t j) {
    Real s = 0;
    for (std::size_t k = 0; k < pts[i].size(); ++k) s += (pts[i][k] - pts[j][k]) * (pts[i][k] - pts[j][k]);
    return std::sqrt(s);
  };
  auto mean_to = [&](std::size_t i, const std::string& name) {
    Real d = 0;
    int c = 0;
    for (std::size_t j = 0; j < pts.size(); ++j)
      if (j != i && labels[j] == name) {
        d += dist(i, j);
        ++c;
      }
    return std::pair<Real, int>{d, c};
  };
  const std::set<std::string> names(labels.begin(), labels.end());
  Real total = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto [own_sum, own] = mean_to(i, labels[i]);
    if (own == 0) continue;
    const Real a = own_sum / own;
    Real b = std::numeric_limits<Real>::infinity();
    for (const auto& name : names)
      if (name != labels[i]) {
        const auto [d, c] = mean_to(i, name);
        b = std::min(b, d / c);
      }
    const Real m = std::max(a, b);
    total += m > 0 ? (b - a) / m : 0.0;
  }
  return total / static_cast<Real>(pts.size());
}

// ---- data ----------------------------------------------------------------------

inline Matrix random_matrix(nn::Index r, nn::Index c, std::uint64_t seed, Real lo = -1, Real hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> u(lo, hi);
  Matrix m(r, c);
  for (nn::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

}  // namespace lamarl::reference

#pragma once

// Brute-force reference implementations used as test oracles. They favour
// obviousness over speed.

#include "phaseseg/core/raster.hpp"
#include "phaseseg/maskops/binary_mask.hpp"
#include "phaseseg/maskops/metrics.hpp"
#include "phaseseg/rng.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <vector>

namespace oracle {

using phaseseg::BinaryMask;
using phaseseg::LabelMap;

struct Counts {
  long inter = 0, uni = 0, pred = 0, gt = 0;
};

inline Counts count_pixels(const BinaryMask& p, const BinaryMask& g) {
  Counts c;
  for (int y = 0; y < p.height(); ++y)
    for (int x = 0; x < p.width(); ++x) {
      const bool a = p.get(y, x), b = g.get(y, x);
      c.inter += a && b;
      c.uni += a || b;
      c.pred += a;
      c.gt += b;
    }
  return c;
}

inline double iou(const BinaryMask& p, const BinaryMask& g) {
  const Counts c = count_pixels(p, g);
  return c.uni == 0 ? 1.0 : static_cast<double>(c.inter) / static_cast<double>(c.uni);
}

inline double dsc(const BinaryMask& p, const BinaryMask& g) {
  const Counts c = count_pixels(p, g);
  return c.pred + c.gt == 0 ? 1.0 : 2.0 * static_cast<double>(c.inter) / static_cast<double>(c.pred + c.gt);
}

struct ClassResult {
  double iou = 1.0, dsc = 1.0;
  std::size_t support = 0;
};

/// Per-class scores over frames and their unweighted mean over supported classes.
inline std::pair<std::map<int, ClassResult>, std::pair<double, double>> evaluate(
    const std::vector<LabelMap>& preds, const std::vector<LabelMap>& gts, int tools, bool pooled) {
  std::map<int, ClassResult> out;
  double mi = 0, md = 0;
  int n = 0;
  for (int c = 1; c <= tools; ++c) {
    ClassResult r;
    double si = 0, sd = 0;
    long inter = 0, uni = 0, ps = 0, gs = 0;
    for (std::size_t f = 0; f < preds.size(); ++f) {
      const auto pm = BinaryMask::from_labels(preds[f], c);
      const auto gm = BinaryMask::from_labels(gts[f], c);
      const Counts k = count_pixels(pm, gm);
      if (k.uni == 0) continue;
      ++r.support;
      si += static_cast<double>(k.inter) / static_cast<double>(k.uni);
      sd += 2.0 * static_cast<double>(k.inter) / static_cast<double>(k.pred + k.gt);
      inter += k.inter;
      uni += k.uni;
      ps += k.pred;
      gs += k.gt;
    }
    if (r.support > 0) {
      if (pooled) {
        r.iou = static_cast<double>(inter) / static_cast<double>(uni);
        r.dsc = 2.0 * static_cast<double>(inter) / static_cast<double>(ps + gs);
      } else {
        r.iou = si / static_cast<double>(r.support);
        r.dsc = sd / static_cast<double>(r.support);
      }
      mi += r.iou;
      md += r.dsc;
      ++n;
    }
    out[c] = r;
  }
  return {out, n == 0 ? std::pair(1.0, 1.0) : std::pair(mi / n, md / n)};
}

/// Square window of radius r, clipped at the border.
inline BinaryMask window_op(const BinaryMask& m, int r, bool dilate) {
  BinaryMask out(m.height(), m.width());
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      bool any = false, all = true;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || xx < 0 || yy >= m.height() || xx >= m.width()) continue;
          any = any || m.get(yy, xx);
          all = all && m.get(yy, xx);
        }
      out.set(y, x, dilate ? any : all);
    }
  return out;
}

/// Pixel sets of the connected components, each sorted, in raster order of first pixel.
inline std::vector<std::vector<int>> components(const BinaryMask& m, bool eight) {
  std::vector<int> seen(m.size(), 0);
  std::vector<std::vector<int>> out;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      const int start = y * m.width() + x;
      if (!m.get(y, x) || seen[start]) continue;
      std::vector<int> comp;
      std::deque<int> q{start};
      seen[start] = 1;
      while (!q.empty()) {
        const int p = q.front();
        q.pop_front();
        comp.push_back(p);
        const int py = p / m.width(), px = p % m.width();
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if ((dy == 0 && dx == 0) || (!eight && dy != 0 && dx != 0)) continue;
            const int ny = py + dy, nx = px + dx;
            if (ny < 0 || nx < 0 || ny >= m.height() || nx >= m.width()) continue;
            const int ni = ny * m.width() + nx;
            if (m.get(ny, nx) && !seen[ni]) {
              seen[ni] = 1;
              q.push_back(ni);
            }
          }
      }
      std::sort(comp.begin(), comp.end());
      out.push_back(std::move(comp));
    }
  return out;
}

inline BinaryMask random_mask(phaseseg::Rng& rng, int h, int w, double density) {
  BinaryMask m(h, w);
  for (std::size_t i = 0; i < m.size(); ++i) m.set_flat(i, rng.uniform() < density);
  return m;
}

/// Random rectangles and disks plus salt noise: realistic shapes with debris.
inline BinaryMask random_blobs(phaseseg::Rng& rng, int h, int w, int shapes, double noise) {
  BinaryMask m(h, w);
  for (int s = 0; s < shapes; ++s) {
    const int cy = static_cast<int>(rng.index(static_cast<std::size_t>(h)));
    const int cx = static_cast<int>(rng.index(static_cast<std::size_t>(w)));
    const int r = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(std::max(2, h / 5))));
    const bool disk = rng.uniform() < 0.5;
    for (int y = std::max(0, cy - r); y < std::min(h, cy + r + 1); ++y)
      for (int x = std::max(0, cx - r); x < std::min(w, cx + r + 1); ++x)
        if (!disk || (y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) m.set(y, x);
  }
  for (std::size_t i = 0; i < m.size(); ++i)
    if (rng.uniform() < noise) m.set_flat(i, !m[i]);
  return m;
}

}  // namespace oracle

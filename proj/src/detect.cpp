#include "fingervision/detect.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace fv {

void DetectorConfig::validate() const {
  if (threshold <= 0.0 || threshold > 1.0) throw Error(Errc::Config, "detector threshold must be in (0, 1]");
  if (min_area < 0.0 || !(min_area < max_area)) throw Error(Errc::Config, "detector requires 0 <= min_area < max_area");
  if (min_circularity < 0.0 || min_circularity > 1.0) {
    throw Error(Errc::Config, "detector min_circularity must be in [0, 1]");
  }
}

namespace {

struct DisjointSet {
  std::vector<int> parent;

  int make() {
    parent.push_back(static_cast<int>(parent.size()));
    return parent.back();
  }
  int find(int a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    // Smaller root wins so the final root is the earliest label in raster order.
    if (a < b) parent[b] = a;
    else if (b < a) parent[a] = b;
  }
};

struct Component {
  int first_x = 0;
  int first_y = 0;
  int area = 0;
  int crack_edges = 0;
  double weight = 0.0;
  double wx = 0.0;
  double wy = 0.0;
  bool seen = false;
};

}  // namespace

MarkerSet detect_markers(const GrayImage& image, const DetectorConfig& cfg) {
  if (image.empty()) throw Error(Errc::EmptyImage, "detect_markers received a zero-sized image");
  const int w = image.width;
  const int h = image.height;
  // Pixel is foreground iff value/255 < threshold.
  const double cut = cfg.threshold * 255.0;
  auto fg = [&](int x, int y) { return image.at(x, y) < cut; };

  std::vector<int> labels(static_cast<std::size_t>(w) * h, -1);
  DisjointSet sets;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!fg(x, y)) continue;
      int label = -1;
      // Already-visited 8-neighbors: W, NW, N, NE.
      const int nbr[4][2] = {{-1, 0}, {-1, -1}, {0, -1}, {1, -1}};
      for (const auto& d : nbr) {
        const int nx = x + d[0];
        const int ny = y + d[1];
        if (nx < 0 || ny < 0 || nx >= w) continue;
        const int other = labels[static_cast<std::size_t>(ny) * w + nx];
        if (other < 0) continue;
        if (label < 0) label = other;
        else sets.unite(label, other);
      }
      if (label < 0) label = sets.make();
      labels[static_cast<std::size_t>(y) * w + x] = label;
    }
  }

  std::vector<int> root_of(sets.parent.size());
  for (std::size_t i = 0; i < root_of.size(); ++i) root_of[i] = sets.find(static_cast<int>(i));

  std::vector<Component> comps(sets.parent.size());
  auto same = [&](int x, int y, int root) {
    if (x < 0 || y < 0 || x >= w || y >= h) return false;
    const int l = labels[static_cast<std::size_t>(y) * w + x];
    return l >= 0 && root_of[l] == root;
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int l = labels[static_cast<std::size_t>(y) * w + x];
      if (l < 0) continue;
      const int root = root_of[l];
      Component& comp = comps[root];
      if (!comp.seen) {
        comp.seen = true;
        comp.first_x = x;
        comp.first_y = y;
      }
      ++comp.area;
      comp.crack_edges += !same(x - 1, y, root) + !same(x + 1, y, root) + !same(x, y - 1, root) +
                          !same(x, y + 1, root);
      // Coordinates local to the first pixel keep the centroid exactly
      // translation-equivariant under integer shifts.
      const double weight = std::max(0.0, cfg.threshold - image.at(x, y) / 255.0);
      comp.weight += weight;
      comp.wx += weight * (x - comp.first_x);
      comp.wy += weight * (y - comp.first_y);
    }
  }

  MarkerSet out;
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const Component& comp = comps[i];
    if (!comp.seen || root_of[i] != static_cast<int>(i)) continue;
    if (comp.area < cfg.min_area || comp.area > cfg.max_area) continue;
    // Crack-edge length overestimates a curve's length by 4/pi on average.
    const double perimeter = comp.crack_edges * std::numbers::pi / 4.0;
    const double circularity = 4.0 * std::numbers::pi * comp.area / (perimeter * perimeter);
    if (circularity < cfg.min_circularity) continue;
    if (comp.weight <= 0.0) continue;
    out.points.push_back({comp.first_x + comp.wx / comp.weight, comp.first_y + comp.wy / comp.weight});
  }
  return out;
}

}  // namespace fv

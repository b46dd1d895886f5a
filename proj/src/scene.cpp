#include "promptfocus/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "promptfocus/errors.hpp"

namespace pf {

std::vector<std::string> street_ontology() {
  return {"road", "car", "person", "building", "sky", "vegetation", "minibus", "minivan"};
}

ToyTask ToyTask::make(std::vector<std::string> classes, std::size_t raw_dim, std::size_t grid,
                      std::size_t classes_per_scene, RngState& rng) {
  if (classes.empty()) throw ConfigError("toy task needs at least one class");
  if (raw_dim < 2 || grid == 0) throw ConfigError("toy task extents too small");
  if (classes_per_scene == 0 || classes_per_scene > classes.size() ||
      classes_per_scene > grid * grid) {
    throw ConfigError("classes_per_scene must lie in [1, min(#classes, grid²)]");
  }
  ToyTask t{std::move(classes), raw_dim, grid, classes_per_scene, {}};
  t.prototypes.resize(t.classes.size() * raw_dim);
  for (std::size_t c = 0; c < t.classes.size(); ++c) {
    auto v = rng.normal_vector(raw_dim, 1.0);
    const auto n = l2_norm(v);
    for (std::size_t i = 0; i < raw_dim; ++i) t.prototypes[c * raw_dim + i] = v[i] / n;
  }
  // minivan looks like a minibus: cosine about 0.8 between their prototypes
  auto find = [&](const char* name) {
    return std::find(t.classes.begin(), t.classes.end(), name) - t.classes.begin();
  };
  const auto bus = static_cast<std::size_t>(find("minibus"));
  const auto van = static_cast<std::size_t>(find("minivan"));
  if (bus < t.classes.size() && van < t.classes.size()) {
    std::vector<double> mix(raw_dim);
    for (std::size_t i = 0; i < raw_dim; ++i) {
      mix[i] = 0.8 * t.prototypes[bus * raw_dim + i] + 0.6 * t.prototypes[van * raw_dim + i];
    }
    const auto n = l2_norm(mix);
    for (std::size_t i = 0; i < raw_dim; ++i) t.prototypes[van * raw_dim + i] = mix[i] / n;
  }
  return t;
}

std::span<const double> ToyTask::prototype(std::size_t c) const {
  return std::span<const double>(prototypes).subspan(c * raw_dim, raw_dim);
}

std::vector<double> styled_prototype(const ToyTask& task, std::size_t c, const SceneStyle& style) {
  const auto p = task.prototype(c);
  std::vector<double> out(p.begin(), p.end());
  if (style.rotation == 0.0) return out;
  const double cs = std::cos(style.rotation), sn = std::sin(style.rotation);
  for (std::size_t i = 0; i + 1 < out.size(); i += 2) {
    const double x = out[i], y = out[i + 1];
    out[i] = cs * x - sn * y;
    out[i + 1] = sn * x + cs * y;
  }
  return out;
}

ToyScene generate_scene(const ToyTask& task, const SceneStyle& style, RngState& rng) {
  const std::size_t g = task.grid, cells = g * g, k = task.classes_per_scene;

  std::vector<int> pool(task.num_classes());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
  }
  std::vector<std::size_t> cell_pool(cells);
  for (std::size_t i = 0; i < cells; ++i) cell_pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(cell_pool[i], cell_pool[i + rng.below(cells - i)]);
  }

  ToyScene s;
  s.grid = g;
  s.labels.resize(cells);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const double r = static_cast<double>(cell / g), c = static_cast<double>(cell % g);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      const double sr = static_cast<double>(cell_pool[j] / g);
      const double sc = static_cast<double>(cell_pool[j] % g);
      const double d = (r - sr) * (r - sr) + (c - sc) * (c - sc);
      if (d < best) {
        best = d;
        s.labels[cell] = pool[j];
      }
    }
  }
  s.present.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(s.present.begin(), s.present.end());

  std::vector<std::vector<double>> styled(task.num_classes());
  for (int c : s.present) styled[c] = styled_prototype(task, static_cast<std::size_t>(c), style);
  s.features.resize(cells * task.raw_dim);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const auto& proto = styled[static_cast<std::size_t>(s.labels[cell])];
    for (std::size_t i = 0; i < task.raw_dim; ++i) {
      const double n = style.noise > 0.0 ? rng.normal(0.0, style.noise) : 0.0;
      s.features[cell * task.raw_dim + i] = proto[i] + n;
    }
  }
  return s;
}

std::vector<double> scene_image_embedding(const ToyScene& scene, const ToyTask& task,
                                          const EmbeddingTable& table, double noise,
                                          RngState& rng) {
  const double cells = static_cast<double>(scene.labels.size());
  std::vector<double> area(task.num_classes(), 0.0);
  for (int l : scene.labels) area[static_cast<std::size_t>(l)] += 1.0 / cells;
  std::vector<double> v(table.dim(), 0.0);
  for (int c : scene.present) {
    const auto row = table.row(task.classes[static_cast<std::size_t>(c)]);
    const double w = 0.5 + 0.5 * area[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += w * row[i];
  }
  if (noise > 0.0) {
    for (auto& x : v) x += rng.normal(0.0, noise);
  }
  return normalized(v);
}

}  // namespace pf

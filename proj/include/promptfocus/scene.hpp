#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "promptfocus/embedding_store.hpp"
#include "promptfocus/rng.hpp"

namespace pf {

/// Domain parameters of a scene generator. The knowledge set and the
/// application set share prototypes and differ only here.
struct SceneStyle {
  double rotation = 0.0;  // radians, applied to every coordinate pair of a prototype
  double noise = 0.0;     // per-coordinate Gaussian noise std
};

/// Class ontology and per-class raw feature prototypes.
struct ToyTask {
  std::vector<std::string> classes;
  std::size_t raw_dim = 16;
  std::size_t grid = 8;               // grid×grid cells, one patch each
  std::size_t classes_per_scene = 3;
  std::vector<double> prototypes;     // classes × raw_dim

  static ToyTask make(std::vector<std::string> classes, std::size_t raw_dim, std::size_t grid,
                      std::size_t classes_per_scene, RngState& rng);
  std::size_t num_classes() const { return classes.size(); }
  std::size_t patches() const { return grid * grid; }
  std::span<const double> prototype(std::size_t c) const;
};

/// Eight-class street ontology used by the toy segmentation task.
std::vector<std::string> street_ontology();

struct ToyScene {
  std::size_t grid = 0;
  std::vector<int> labels;       // grid² class ids, row-major
  std::vector<double> features;  // grid² × raw_dim
  std::vector<int> present;      // sorted class ids appearing in labels
};

/// Prototype after the style rotation (no noise).
std::vector<double> styled_prototype(const ToyTask& task, std::size_t c, const SceneStyle& style);

/// Voronoi layout over `classes_per_scene` random classes; each cell's feature
/// is its class prototype under the style plus noise. Deterministic per rng.
ToyScene generate_scene(const ToyTask& task, const SceneStyle& style, RngState& rng);

/// Scene-level embedding in the text-embedding space: present classes'
/// rows weighted by 0.5 + 0.5·area, plus noise, unit-normalized. This is the
/// image-side input to prompt selection.
std::vector<double> scene_image_embedding(const ToyScene& scene, const ToyTask& task,
                                          const EmbeddingTable& table, double noise,
                                          RngState& rng);

}  // namespace pf

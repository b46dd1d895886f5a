#include "promptfocus/fixtures.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "promptfocus/errors.hpp"
#include "promptfocus/rng.hpp"

namespace pf {

namespace {

constexpr std::uint64_t kStreetSeed = 20;
constexpr double kSharedVehicle = 0.6;
constexpr double kMinibusMinivanDistance = 0.25;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// `count` orthonormal vectors of width dim (Gram-Schmidt on Gaussian draws).
std::vector<std::vector<double>> orthonormal_basis(std::size_t count, std::size_t dim, RngState& rng) {
  if (count > dim) throw ContractError("cannot build more orthonormal vectors than dimensions");
  std::vector<std::vector<double>> basis;
  while (basis.size() < count) {
    auto v = rng.normal_vector(dim, 1.0);
    for (const auto& b : basis) {
      const double p = dot(v, b);
      for (std::size_t i = 0; i < dim; ++i) v[i] -= p * b[i];
    }
    if (l2_norm(v) < 1e-6) continue;
    basis.push_back(normalized(v));
  }
  return basis;
}

bool is_vehicle(const std::string& name) {
  for (const char* v : {"car", "truck", "bus", "motorcycle", "bicycle", "minibus", "minivan"}) {
    if (name == v) return true;
  }
  return false;
}

}  // namespace

std::vector<std::string> street_library_names() {
  return {"road",  "sidewalk",   "building", "wall",         "fence",         "pole",
          "traffic light", "traffic sign", "vegetation", "terrain", "sky",  "person",
          "rider", "car",        "truck",    "bus",          "motorcycle",    "bicycle",
          "minibus", "minivan"};
}

std::vector<std::string> street_supplement_names() { return {"minibus", "minivan", "car", "tram"}; }

Fixture make_street_fixture(std::size_t dim) {
  const auto names = street_library_names();
  RngState rng(kStreetSeed);
  // One direction per class, one shared by vehicles, one spare for minivan.
  const auto basis = orthonormal_basis(names.size() + 2, dim, rng);
  const auto& shared = basis[names.size()];
  const auto& spare = basis[names.size() + 1];
  const double own = std::sqrt(1.0 - kSharedVehicle * kSharedVehicle);

  std::vector<std::vector<double>> rows(names.size());
  std::size_t minibus = 0;
  for (std::size_t c = 0; c < names.size(); ++c) {
    rows[c] = basis[c];
    if (is_vehicle(names[c])) {
      for (std::size_t i = 0; i < dim; ++i) rows[c][i] = kSharedVehicle * shared[i] + own * basis[c][i];
    }
    if (names[c] == "minibus") minibus = c;
  }
  // |a − b|² = 2 − 2cos for unit rows.
  const double cos_pair = 1.0 - 0.5 * kMinibusMinivanDistance * kMinibusMinivanDistance;
  const double off = std::sqrt(1.0 - cos_pair * cos_pair);
  auto& minivan = rows[names.size() - 1];
  for (std::size_t i = 0; i < dim; ++i) minivan[i] = cos_pair * rows[minibus][i] + off * spare[i];

  std::vector<double> flat;
  for (const auto& r : rows) {
    const auto u = normalized(r);
    flat.insert(flat.end(), u.begin(), u.end());
  }
  return {CategoryLibrary(names), EmbeddingTable(names, dim, std::move(flat))};
}

std::vector<double> street_scene_embedding(const Fixture& fixture) {
  const std::vector<std::string> present{"road", "car", "building", "sky", "minibus", "minivan"};
  const auto& table = fixture.table;
  // Reweight the present rows until the image is about equally close to each.
  std::vector<double> weight(present.size(), 1.0);
  std::vector<double> image(table.dim());
  for (int iter = 0; iter < 200; ++iter) {
    std::fill(image.begin(), image.end(), 0.0);
    for (std::size_t k = 0; k < present.size(); ++k) {
      const auto row = table.row(present[k]);
      for (std::size_t i = 0; i < image.size(); ++i) image[i] += weight[k] * row[i];
    }
    for (std::size_t k = 0; k < present.size(); ++k) {
      weight[k] /= std::sqrt(std::max(dot(image, table.row(present[k])), 1e-12));
    }
  }
  return normalized(image);
}

Fixture make_synthetic_fixture(std::size_t count, std::size_t dim, std::uint64_t seed) {
  if (count == 0 || dim == 0) throw ContractError("synthetic fixture needs positive count and dim");
  RngState rng(seed);
  std::vector<std::string> names;
  std::vector<double> flat;
  char buf[32];
  for (std::size_t c = 0; c < count; ++c) {
    std::snprintf(buf, sizeof buf, "class_%03zu", c);
    names.emplace_back(buf);
    const auto row = normalized(rng.normal_vector(dim, 1.0));
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return {CategoryLibrary(names), EmbeddingTable(names, dim, std::move(flat))};
}

std::vector<double> synthetic_image_embedding(const Fixture& fixture) {
  const auto row = fixture.table.row(0);
  return {row.begin(), row.end()};
}

void write_street_data(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const Fixture f = make_street_fixture();
  write_fixture(dir / "street20", f.library, f.table);
  write_vector(dir / "street_scene.vec", street_scene_embedding(f));
  std::ofstream out(dir / "street_supplement.txt", std::ios::trunc);
  out << "# extra street classes, one per line\n";
  for (const auto& n : street_supplement_names()) out << n << '\n';
  if (!out) throw Error("cannot write " + (dir / "street_supplement.txt").string());
}

}  // namespace pf

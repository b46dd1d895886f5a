#include "promptfocus/dcp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "promptfocus/kernels.hpp"

namespace pf::dcp {

namespace {

// Cosine-to-centroid values closer than this count as a tie. Two-member
// clusters tie exactly in exact arithmetic.
constexpr double kCentralityTie = 1e-12;
constexpr double kSimRelativeTie = 1e-9;

bool within_schedule(std::size_t k, double lo, double hi, double step) {
  return lo + static_cast<double>(k) * step <= hi + 1e-9 * step;
}

}  // namespace

void DcpConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("dcp config: " + m); };
  if (!(tau_f_min > 0.0 && tau_f_min < 1.0) || !(tau_f_max > 0.0 && tau_f_max < 1.0)) {
    fail("filter thresholds must lie in (0, 1)");
  }
  if (tau_f_min > tau_f_max) fail("tau_f_min > tau_f_max");
  if (tau_c_min > tau_c_max) fail("tau_c_min > tau_c_max");
  if (!(delta_tau_f > 0.0) || !(delta_tau_c > 0.0)) fail("threshold increments must be positive");
  if (max_classes == 0) fail("max_classes must be positive");
  if (!(tau_c_scale > 0.0)) fail("tau_c_scale must be positive");
  if (!(temperature > 0.0)) fail("temperature must be positive");
}

std::size_t DcpConfig::max_iterations() const {
  const double steps_f = std::ceil((tau_f_max - tau_f_min) / delta_tau_f - 1e-9);
  const double steps_c = std::ceil((tau_c_max - tau_c_min) / delta_tau_c - 1e-9);
  return static_cast<std::size_t>(std::max(0.0, std::min(steps_f, steps_c))) + 1;
}

std::vector<Merge> average_linkage(std::span<const double> distances, std::size_t n) {
  if (distances.size() != n * n) throw DimensionError("average_linkage: distance matrix size mismatch");
  std::vector<double> d(distances.begin(), distances.end());
  std::vector<std::size_t> size(n, 1), id(n);
  std::iota(id.begin(), id.end(), 0);
  std::vector<bool> active(n, true);
  std::vector<Merge> merges;
  merges.reserve(n > 0 ? n - 1 : 0);

  for (std::size_t step = 0; step + 1 < n; ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (active[j] && d[i * n + j] < best) {
          best = d[i * n + j];
          bi = i;
          bj = j;
        }
      }
    }
    // Lance-Williams update for average linkage; bj folds into slot bi.
    const double wi = static_cast<double>(size[bi]);
    const double wj = static_cast<double>(size[bj]);
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == bi || k == bj) continue;
      const double v = (wi * d[bi * n + k] + wj * d[bj * n + k]) / (wi + wj);
      d[bi * n + k] = d[k * n + bi] = v;
    }
    const std::size_t new_id = n + step;
    merges.push_back({std::min(id[bi], id[bj]), std::max(id[bi], id[bj]), best, new_id});
    size[bi] += size[bj];
    id[bi] = new_id;
    active[bj] = false;
  }
  return merges;
}

std::vector<std::vector<std::size_t>> cut_dendrogram(std::span<const Merge> merges,
                                                     std::size_t n, double threshold) {
  // owner[id] = representative leaf of the cluster created as `id`
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<std::size_t> leaf_of(n + merges.size());
  std::iota(leaf_of.begin(), leaf_of.begin() + static_cast<std::ptrdiff_t>(n), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& m : merges) {
    if (m.distance > threshold) break;
    const std::size_t a = find(leaf_of[m.left]);
    const std::size_t b = find(leaf_of[m.right]);
    parent[std::max(a, b)] = std::min(a, b);
    leaf_of[m.id] = std::min(a, b);
  }
  std::vector<std::vector<std::size_t>> clusters;
  std::vector<std::size_t> slot(n, std::numeric_limits<std::size_t>::max());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = find(i);
    if (slot[r] == std::numeric_limits<std::size_t>::max()) {
      slot[r] = clusters.size();
      clusters.emplace_back();
    }
    clusters[slot[r]].push_back(i);
  }
  return clusters;
}

PromptSelection category_filter(const SimilarityScores& scores, const CategoryLibrary& lib,
                                 double tau_f) {
  if (!scores.normalized) throw ContractError("category_filter needs softmax-normalized scores");
  if (scores.values.size() != lib.size()) {
    throw ContractError("category_filter: " + std::to_string(scores.values.size()) +
                        " scores for a library of " + std::to_string(lib.size()));
  }
  PromptSelection out;
  for (std::size_t l = 0; l < lib.size(); ++l) {
    if (scores.values[l] > tau_f) {
      out.cls.push_back(lib.names()[l]);
      out.sim.push_back(scores.values[l]);
    }
  }
  out.final_tau_f = tau_f;
  return out;
}

ClusterResult hierarchical_cluster(const PromptSelection& selection, const EmbeddingTable& table,
                                   double distance_threshold) {
  if (selection.empty()) throw ContractError("hierarchical_cluster on an empty selection");
  if (selection.cls.size() != selection.sim.size()) {
    throw ContractError("selection has mismatched cls/sim lengths");
  }
  const std::size_t n = selection.size();
  const std::size_t dim = table.dim();
  std::vector<std::size_t> table_idx(n);
  std::vector<double> x(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto idx = table.index_of(selection.cls[i]);
    if (!idx) throw DataError("class '" + selection.cls[i] + "' not found in embedding table");
    table_idx[i] = *idx;
    const auto row = table.row(*idx);
    std::copy(row.begin(), row.end(), x.begin() + static_cast<std::ptrdiff_t>(i * dim));
  }

  const auto dist = kernels::pairwise_euclidean(x, n, dim);
  const auto merges = average_linkage(dist, n);
  auto clusters = cut_dendrogram(merges, n, distance_threshold);

  ClusterResult result;
  result.tree.leaves = selection.cls;
  for (const auto& m : merges) {
    if (m.distance > distance_threshold) break;
    result.tree.merges.push_back(m);
  }

  struct Pick {
    std::size_t member;
    std::size_t cluster;
  };
  std::vector<Pick> picks;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    const auto& members = clusters[c];
    std::vector<double> centroid(dim, 0.0);
    for (auto i : members)
      for (std::size_t t = 0; t < dim; ++t) centroid[t] += x[i * dim + t];
    const double cn = l2_norm(centroid);
    std::size_t best = members.front();
    double best_cos = -2.0;
    for (auto i : members) {
      double dot = 0.0;
      for (std::size_t t = 0; t < dim; ++t) dot += x[i * dim + t] * centroid[t];
      const double cos = cn > 0.0 ? dot / cn : 0.0;
      bool take = false;
      if (cos > best_cos + kCentralityTie) {
        take = true;
      } else if (cos >= best_cos - kCentralityTie) {
        // equally central: higher image probability, then lower library index
        const double si = selection.sim[i], sb = selection.sim[best];
        const double tol = kSimRelativeTie * std::max(si, sb);
        if (si > sb + tol) take = true;
        else if (si >= sb - tol && table_idx[i] < table_idx[best]) take = true;
      }
      if (take) {
        best = i;
        best_cos = std::max(best_cos, cos);
      }
    }
    picks.push_back({best, c});
  }

  std::sort(picks.begin(), picks.end(), [&](const Pick& a, const Pick& b) {
    const double sa = selection.sim[a.member], sb = selection.sim[b.member];
    if (sa != sb) return sa > sb;
    return table_idx[a.member] < table_idx[b.member];
  });

  result.selection = selection;
  result.selection.cls.clear();
  result.selection.sim.clear();
  for (const auto& p : picks) {
    result.selection.cls.push_back(selection.cls[p.member]);
    result.selection.sim.push_back(selection.sim[p.member]);
    result.clusters.push_back(clusters[p.cluster]);
  }
  result.selection.final_tau_c = distance_threshold;
  return result;
}

SimilarityScores library_scores(std::span<const double> image_embedding,
                                const CategoryLibrary& lib, const EmbeddingTable& table,
                                double temperature) {
  if (lib.names() == table.names()) {
    return image_class_similarity(image_embedding, table, temperature);
  }
  std::vector<double> rows;
  rows.reserve(lib.size() * table.dim());
  for (const auto& name : lib.names()) {
    const auto r = table.row(name);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  const EmbeddingTable aligned(lib.names(), table.dim(), std::move(rows));
  return image_class_similarity(image_embedding, aligned, temperature);
}

EmptySelection::EmptySelection(const ScoreSummary& s, double tau_f_min)
    : Error([&] {
        std::ostringstream os;
        os << "no class passed the filter at any threshold >= " << tau_f_min << " (scores: n="
           << s.count << ", max=" << s.max << ", min=" << s.min << ", mean=" << s.mean << ")";
        return os.str();
      }()),
      summary_(s) {}

PromptSelection select_from_scores(const SimilarityScores& scores, const CategoryLibrary& lib,
                                   const EmbeddingTable& table, const DcpConfig& cfg) {
  cfg.validate();
  std::size_t remaining = lib.size();
  PromptSelection last;
  bool have = false;
  std::size_t k = 0;
  // At least one filter/cluster pass runs even when the library already fits in N.
  do {
    const double tau_f = cfg.tau_f_min + static_cast<double>(k) * cfg.delta_tau_f;
    const double tau_c = cfg.tau_c_min + static_cast<double>(k) * cfg.delta_tau_c;
    auto filtered = category_filter(scores, lib, tau_f);
    ++k;
    if (filtered.empty()) continue;
    auto clustered = hierarchical_cluster(filtered, table, tau_c * cfg.tau_c_scale);
    last = std::move(clustered.selection);
    last.final_tau_f = tau_f;
    last.final_tau_c = tau_c;
    remaining = last.size();
    have = true;
  } while (remaining > cfg.max_classes &&
           within_schedule(k, cfg.tau_f_min, cfg.tau_f_max, cfg.delta_tau_f) &&
           within_schedule(k, cfg.tau_c_min, cfg.tau_c_max, cfg.delta_tau_c));

  if (!have) {
    ScoreSummary s;
    s.count = scores.values.size();
    s.max = *std::max_element(scores.values.begin(), scores.values.end());
    s.min = *std::min_element(scores.values.begin(), scores.values.end());
    s.mean = std::accumulate(scores.values.begin(), scores.values.end(), 0.0) /
             static_cast<double>(s.count);
    throw EmptySelection(s, cfg.tau_f_min);
  }
  last.iterations_used = k;
  last.exited_by_count = last.size() <= cfg.max_classes;
  return last;
}

PromptSelection select_prompts(std::span<const double> image_embedding,
                               const CategoryLibrary& lib, const EmbeddingTable& table,
                               const DcpConfig& cfg) {
  cfg.validate();
  return select_from_scores(library_scores(image_embedding, lib, table, cfg.temperature), lib,
                            table, cfg);
}

nlohmann::json to_json(const PromptSelection& s) {
  return {{"cls", s.cls},
          {"sim", s.sim},
          {"iterations_used", s.iterations_used},
          {"final_tau_f", s.final_tau_f},
          {"final_tau_c", s.final_tau_c},
          {"exited_by_count", s.exited_by_count}};
}

PromptSelection selection_from_json(const nlohmann::json& j) {
  PromptSelection s;
  try {
    s.cls = j.at("cls").get<std::vector<std::string>>();
    s.sim = j.at("sim").get<std::vector<double>>();
    s.iterations_used = j.at("iterations_used").get<std::size_t>();
    s.final_tau_f = j.at("final_tau_f").get<double>();
    s.final_tau_c = j.at("final_tau_c").get<double>();
    s.exited_by_count = j.value("exited_by_count", true);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("selection JSON: ") + e.what(), 0);
  }
  if (s.cls.size() != s.sim.size()) throw DataError("selection JSON: cls/sim length mismatch");
  return s;
}

nlohmann::json to_json(const DcpConfig& c) {
  return {{"tau_f_min", c.tau_f_min},     {"tau_f_max", c.tau_f_max},
          {"delta_tau_f", c.delta_tau_f}, {"tau_c_min", c.tau_c_min},
          {"tau_c_max", c.tau_c_max},     {"delta_tau_c", c.delta_tau_c},
          {"max_classes", c.max_classes}, {"tau_c_scale", c.tau_c_scale},
          {"temperature", c.temperature}};
}

}  // namespace pf::dcp

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptfocus/embedding_store.hpp"
#include "promptfocus/errors.hpp"

// Dynamic class-aware prompter: per-image selection of class prompts by
// iterated probability filtering and agglomerative clustering.
namespace pf::dcp {

struct DcpConfig {
  double tau_f_min = 0.002;
  double tau_f_max = 0.005;
  double delta_tau_f = 0.001;
  double tau_c_min = 3.0;
  double tau_c_max = 7.0;
  double delta_tau_c = 0.5;
  std::size_t max_classes = 30;
  // Effective merge distance is tau_c * tau_c_scale on unit-norm embeddings.
  double tau_c_scale = 0.1;
  // Softmax temperature applied to image/class cosines.
  double temperature = 0.01;

  void validate() const;
  /// Upper bound on filter/cluster passes for this schedule.
  std::size_t max_iterations() const;
};

struct PromptSelection {
  std::vector<std::string> cls;
  std::vector<double> sim;
  std::size_t iterations_used = 0;
  double final_tau_f = 0.0;
  double final_tau_c = 0.0;
  // False when the schedule ran out while more than max_classes remained.
  bool exited_by_count = true;

  std::size_t size() const { return cls.size(); }
  bool empty() const { return cls.empty(); }
};

struct Merge {
  std::size_t left;
  std::size_t right;
  double distance;
  std::size_t id;
};

/// Merges performed, scipy-style ids: leaves 0..n-1, merge t creates n+t.
struct ClusterTree {
  std::vector<std::string> leaves;
  std::vector<Merge> merges;
};

struct ClusterResult {
  PromptSelection selection;
  ClusterTree tree;
  // Members of each cluster as indices into the input selection, in the
  // order of the output representatives.
  std::vector<std::vector<std::size_t>> clusters;
};

/// Full average-linkage dendrogram (n-1 merges) over a symmetric n×n
/// distance matrix. Ties pick the lowest cluster slot pair.
std::vector<Merge> average_linkage(std::span<const double> distances, std::size_t n);

/// Cluster membership after applying every merge with distance <= threshold.
std::vector<std::vector<std::size_t>> cut_dendrogram(std::span<const Merge> merges,
                                                     std::size_t n, double threshold);

/// Classes with probability strictly above tau_f, in library order.
PromptSelection category_filter(const SimilarityScores& scores, const CategoryLibrary& lib,
                                 double tau_f);

/// Average-linkage clustering of the selected embeddings (Euclidean), cut at
/// `distance_threshold`; keeps the member closest (cosine) to each cluster
/// centroid. Output is ordered by descending probability.
ClusterResult hierarchical_cluster(const PromptSelection& selection, const EmbeddingTable& table,
                                   double distance_threshold);

/// Scores every library class against the image embedding.
SimilarityScores library_scores(std::span<const double> image_embedding,
                                const CategoryLibrary& lib, const EmbeddingTable& table,
                                double temperature);

struct ScoreSummary {
  std::size_t count = 0;
  double max = 0.0;
  double min = 0.0;
  double mean = 0.0;
};

/// Raised when no class passes the filter at any point of the schedule.
class EmptySelection : public Error {
 public:
  EmptySelection(const ScoreSummary& summary, double tau_f_min);
  const ScoreSummary& summary() const { return summary_; }

 private:
  ScoreSummary summary_;
};

/// Iterated filter/cluster schedule over the whole library.
PromptSelection select_prompts(std::span<const double> image_embedding,
                               const CategoryLibrary& lib, const EmbeddingTable& table,
                               const DcpConfig& cfg);

/// Same schedule from precomputed, library-aligned scores.
PromptSelection select_from_scores(const SimilarityScores& scores, const CategoryLibrary& lib,
                                   const EmbeddingTable& table, const DcpConfig& cfg);

nlohmann::json to_json(const PromptSelection& s);
PromptSelection selection_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DcpConfig& c);

}  // namespace pf::dcp

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

namespace pf {

struct MetricsReport {
  int num_classes = 0;
  std::vector<std::int64_t> confusion;         // row = truth, column = prediction
  std::vector<std::optional<double>> iou;      // empty for classes absent from the ground truth
  std::vector<int> excluded;                   // classes left out of the mean
  double miou = 0.0;
};

/// IoU_c = TP/(TP+FP+FN) from a confusion matrix; mIoU averages the classes
/// that occur in the ground truth.
MetricsReport metrics_from_confusion(std::vector<std::int64_t> confusion, int num_classes);

MetricsReport evaluate_labels(std::span<const int> prediction, std::span<const int> truth,
                              int num_classes);

nlohmann::json to_json(const MetricsReport& m);

}  // namespace pf

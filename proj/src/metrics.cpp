#include "promptfocus/metrics.hpp"

#include "promptfocus/errors.hpp"
#include "promptfocus/kernels.hpp"

namespace pf {

MetricsReport metrics_from_confusion(std::vector<std::int64_t> confusion, int num_classes) {
  const auto c = static_cast<std::size_t>(num_classes);
  if (confusion.size() != c * c) throw DimensionError("confusion matrix size mismatch");
  MetricsReport r;
  r.num_classes = num_classes;
  r.confusion = std::move(confusion);
  r.iou.resize(c);
  double total = 0.0;
  int counted = 0;
  for (std::size_t k = 0; k < c; ++k) {
    std::int64_t tp = r.confusion[k * c + k], fn = 0, fp = 0;
    for (std::size_t j = 0; j < c; ++j) {
      if (j == k) continue;
      fn += r.confusion[k * c + j];
      fp += r.confusion[j * c + k];
    }
    if (tp + fn == 0) {
      r.excluded.push_back(static_cast<int>(k));
      continue;
    }
    const double iou = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    r.iou[k] = iou;
    total += iou;
    ++counted;
  }
  r.miou = counted > 0 ? total / counted : 0.0;
  return r;
}

MetricsReport evaluate_labels(std::span<const int> prediction, std::span<const int> truth,
                              int num_classes) {
  return metrics_from_confusion(kernels::confusion_matrix(prediction, truth, num_classes),
                                num_classes);
}

nlohmann::json to_json(const MetricsReport& m) {
  nlohmann::json iou = nlohmann::json::array();
  for (const auto& v : m.iou) iou.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
  return {{"miou", m.miou}, {"iou", iou}, {"excluded", m.excluded}};
}

}  // namespace pf

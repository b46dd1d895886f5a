#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptfocus/config.hpp"
#include "promptfocus/dcp.hpp"
#include "promptfocus/embedding_store.hpp"
#include "promptfocus/errors.hpp"
#include "promptfocus/metrics.hpp"
#include "promptfocus/model.hpp"
#include "promptfocus/scene.hpp"

namespace pf {

/// A scene with its cached prompt selection and model inputs.
struct PreparedScene {
  ToyScene scene;
  Tensor raw;                         // [P×raw_dim]
  dcp::PromptSelection selection;
  pff::PromptFeatures prompts;
};

/// Scenes of one style with their DCP selections (run once per scene).
std::vector<PreparedScene> prepare_scenes(const ToyTask& task, const SceneStyle& style,
                                          std::size_t count, const Fixture& fixture,
                                          const TrainConfig& cfg, const SegmentationModel& model,
                                          RngState& rng);

/// Argmax predictions of `model` over `scenes`, scored against their labels.
MetricsReport evaluate(const SegmentationModel& model, std::span<const PreparedScene> scenes);

/// Concatenated logits of all scenes, for bitwise comparisons.
std::vector<double> collect_logits(const SegmentationModel& model,
                                   std::span<const PreparedScene> scenes);

ModelSpec model_spec(const TrainConfig& cfg, std::size_t prompt_dim);

struct LossRecord {
  std::size_t step;
  double loss;
  double lr;
};

struct TrainResult {
  nlohmann::json report;
  std::vector<LossRecord> losses;
  MetricsReport baseline_app;    // frozen model at initialization
  MetricsReport final_holdout;
  MetricsReport final_app;
  bool step0_equivalent = false;
  std::string backbone_hash_start;
  std::string backbone_hash_end;
};

/// Raised when the loss (or any intermediate) becomes non-finite.
class TrainAborted : public Error {
 public:
  TrainAborted(std::size_t step, std::string last_good_checkpoint, const std::string& cause);
  std::size_t step() const { return step_; }
  const std::string& last_good_checkpoint() const { return checkpoint_; }

 private:
  std::size_t step_;
  std::string checkpoint_;
};

/// Fine-tunes the PFF blocks and head on knowledge-set scenes, evaluating on a
/// knowledge-set holdout and on the style-shifted application set. With a
/// non-empty out_dir writes report.json, loss.csv, final.pffc and periodic
/// checkpoints there.
TrainResult train(const TrainConfig& cfg, const std::filesystem::path& out_dir = {});

std::string loss_csv(std::span<const LossRecord> losses);

}  // namespace pf

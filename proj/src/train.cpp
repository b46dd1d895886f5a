#include "promptfocus/train.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "promptfocus/adamw.hpp"
#include "promptfocus/checkpoint.hpp"

namespace pf {

namespace {

constexpr std::uint64_t kDataStream = 0xD1B54A32D192ED03ull;
constexpr std::uint64_t kBatchStream = 0x8CB92BA72F3D8DD7ull;

int argmax_row(std::span<const double> row) {
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

struct Pass {
  MetricsReport metrics;
  double loss = 0.0;  // mean per-scene cross-entropy
};

// One forward over `scenes` giving metrics and loss; logits are appended to
// `logits` when given.
Pass run_pass(const SegmentationModel& model, std::span<const PreparedScene> scenes,
              std::vector<double>* logits = nullptr) {
  NoGradGuard no_grad;
  std::vector<int> pred, truth;
  double total = 0.0;
  for (const auto& s : scenes) {
    const Tensor out = model.logits(s.raw, s.prompts);
    const std::size_t c = out.cols();
    for (std::size_t r = 0; r < out.rows(); ++r) pred.push_back(argmax_row(out.data().subspan(r * c, c)));
    truth.insert(truth.end(), s.scene.labels.begin(), s.scene.labels.end());
    total += cross_entropy(out, s.scene.labels).item();
    if (logits) logits->insert(logits->end(), out.data().begin(), out.data().end());
  }
  return {evaluate_labels(pred, truth, static_cast<int>(model.spec().num_classes)),
          total / static_cast<double>(scenes.size())};
}

nlohmann::json selection_summary(const std::string& split, std::span<const PreparedScene> scenes) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& sel = scenes[i].selection;
    out.push_back({{"split", split},
                   {"index", i},
                   {"prompt_count", sel.size()},
                   {"iterations_used", sel.iterations_used},
                   {"final_tau_f", sel.final_tau_f},
                   {"final_tau_c", sel.final_tau_c}});
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

}  // namespace

TrainAborted::TrainAborted(std::size_t step, std::string last_good_checkpoint,
                           const std::string& cause)
    : Error("training aborted at step " + std::to_string(step) + ": " + cause +
            (last_good_checkpoint.empty() ? std::string(" (no checkpoint written yet)")
                                          : " (last good checkpoint: " + last_good_checkpoint + ")")),
      step_(step),
      checkpoint_(std::move(last_good_checkpoint)) {}

ModelSpec model_spec(const TrainConfig& cfg, std::size_t prompt_dim) {
  ModelSpec spec;
  spec.raw_dim = cfg.raw_dim;
  spec.width = cfg.backbone_width;
  spec.layers = cfg.backbone_layers;
  spec.num_classes = cfg.classes.size();
  spec.prompt_dim = prompt_dim;
  spec.use_pff = cfg.pff_enabled;
  spec.dummy_prompts = cfg.prompts == "dummy";
  spec.pff = cfg.pff;
  spec.options = cfg.pff_options;
  spec.backbone_seed = cfg.backbone_seed;
  spec.seed = cfg.seed;
  return spec;
}

std::vector<PreparedScene> prepare_scenes(const ToyTask& task, const SceneStyle& style,
                                          std::size_t count, const Fixture& fixture,
                                          const TrainConfig& cfg, const SegmentationModel& model,
                                          RngState& rng) {
  std::vector<PreparedScene> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    PreparedScene p;
    p.scene = generate_scene(task, style, rng);
    p.raw = Tensor::from({task.patches(), task.raw_dim}, p.scene.features);
    const auto image = scene_image_embedding(p.scene, task, fixture.table, cfg.embedding_noise, rng);
    p.selection = dcp::select_prompts(image, fixture.library, fixture.table, cfg.dcp);
    p.prompts = model.prompt_features(p.selection, fixture.table);
    out.push_back(std::move(p));
  }
  return out;
}

MetricsReport evaluate(const SegmentationModel& model, std::span<const PreparedScene> scenes) {
  return run_pass(model, scenes).metrics;
}

std::vector<double> collect_logits(const SegmentationModel& model,
                                   std::span<const PreparedScene> scenes) {
  std::vector<double> out;
  run_pass(model, scenes, &out);
  return out;
}

std::string loss_csv(std::span<const LossRecord> losses) {
  std::string out = "step,loss,lr\n";
  char buf[96];
  for (const auto& r : losses) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", r.step, r.loss, r.lr);
    out += buf;
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  const bool write = !out_dir.empty();
  if (write) std::filesystem::create_directories(out_dir);

  const Fixture fixture = load_fixture(cfg.fixture);
  for (const auto& c : cfg.classes) {
    if (!fixture.library.contains(c)) {
      throw DataError("task class '" + c + "' is missing from the category library");
    }
  }
  RngState task_rng(cfg.task_seed);
  const ToyTask task = ToyTask::make(cfg.classes, cfg.raw_dim, cfg.grid, cfg.classes_per_scene, task_rng);

  const ModelSpec spec = model_spec(cfg, fixture.table.dim());
  SegmentationModel model = SegmentationModel::init(spec);
  ModelSpec base_spec = spec;
  base_spec.use_pff = false;
  const SegmentationModel baseline = SegmentationModel::init(base_spec);

  RngState data_rng(cfg.seed ^ kDataStream);
  const SceneStyle ks{cfg.ks_rotation, cfg.ks_noise};
  const SceneStyle as{cfg.as_rotation, cfg.as_noise};
  const auto train_set = prepare_scenes(task, ks, cfg.train_scenes, fixture, cfg, model, data_rng);
  const auto holdout = prepare_scenes(task, ks, cfg.holdout_scenes, fixture, cfg, model, data_rng);
  const auto app = prepare_scenes(task, as, cfg.app_scenes, fixture, cfg, model, data_rng);

  TrainResult result;
  result.backbone_hash_start = model.backbone().weight_hash();

  // Zero-initialized output MLPs make the adapted network equal the frozen one.
  std::vector<double> model_logits, base_logits;
  Pass holdout_pass = run_pass(model, holdout, &model_logits);
  Pass app_pass = run_pass(model, app, &model_logits);
  const Pass base_holdout = run_pass(baseline, holdout, &base_logits);
  const Pass base_app = run_pass(baseline, app, &base_logits);
  result.step0_equivalent = model_logits == base_logits;
  result.baseline_app = base_app.metrics;
  const double initial_holdout_loss = holdout_pass.loss;

  auto params = model.trainable_parameters();
  AdamWState opt = AdamWState::for_params(params);
  RngState batch_rng(cfg.seed ^ kBatchStream);
  nlohmann::json evals = nlohmann::json::array();
  std::string last_checkpoint;

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    try {
      for (auto& p : params) p.tensor.zero_grad();
      Tensor total;
      for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        const auto& s = train_set[batch_rng.below(train_set.size())];
        Tensor loss = cross_entropy(model.logits(s.raw, s.prompts), s.scene.labels);
        total = total.defined() ? add(total, loss) : loss;
      }
      total = scale(total, 1.0 / static_cast<double>(cfg.batch_size));
      const double value = total.item();
      backward(total);
      adamw_step(params, opt, cfg.optimizer);
      result.losses.push_back({step, value, cfg.optimizer.lr});
    } catch (const NumericError& e) {
      throw TrainAborted(step, last_checkpoint, e.what());
    }

    if (write && step % cfg.checkpoint_every == 0) {
      last_checkpoint = (out_dir / "checkpoint.pffc").string();
      save_checkpoint(last_checkpoint, params);
    }
    if (step % cfg.eval_every == 0 || step == cfg.steps) {
      holdout_pass = run_pass(model, holdout);
      app_pass = run_pass(model, app);
      evals.push_back({{"step", step},
                       {"holdout_miou", holdout_pass.metrics.miou},
                       {"app_miou", app_pass.metrics.miou},
                       {"holdout_loss", holdout_pass.loss}});
    }
  }

  result.backbone_hash_end = model.backbone().weight_hash();
  if (result.backbone_hash_end != result.backbone_hash_start) {
    throw StateError("backbone weights changed during training");
  }
  result.final_holdout = holdout_pass.metrics;
  result.final_app = app_pass.metrics;

  std::size_t max_prompts = 0;
  nlohmann::json scenes = nlohmann::json::array();
  for (const auto* set : {&train_set, &holdout, &app}) {
    for (const auto& s : *set) max_prompts = std::max(max_prompts, s.selection.size());
  }
  for (auto& e : selection_summary("train", train_set)) scenes.push_back(e);
  for (auto& e : selection_summary("holdout", holdout)) scenes.push_back(e);
  for (auto& e : selection_summary("app", app)) scenes.push_back(e);

  std::size_t values = 0;
  for (const auto& p : params) values += p.tensor.numel();

  result.report = {
      {"config", cfg.to_flat_json()},
      {"steps", cfg.steps},
      {"initial_holdout_loss", initial_holdout_loss},
      {"final_holdout_loss", holdout_pass.loss},
      {"baseline", {{"holdout", to_json(base_holdout.metrics)}, {"app", to_json(base_app.metrics)}}},
      {"final", {{"holdout", to_json(result.final_holdout)}, {"app", to_json(result.final_app)}}},
      {"evals", evals},
      {"step0_equivalence", result.step0_equivalent},
      {"backbone_hash_start", result.backbone_hash_start},
      {"backbone_hash_end", result.backbone_hash_end},
      {"backbone_frozen", result.backbone_hash_start == result.backbone_hash_end},
      {"trainable_tensors", params.size()},
      {"trainable_values", values},
      {"dcp", {{"config", dcp::to_json(cfg.dcp)}, {"max_prompts", max_prompts}, {"scenes", scenes}}},
  };

  if (write) {
    write_text(out_dir / "report.json", result.report.dump(2) + "\n");
    write_text(out_dir / "loss.csv", loss_csv(result.losses));
    save_checkpoint(out_dir / "final.pffc", params);
  }
  return result;
}

}  // namespace pf

// pfocus: prompt selection, training, gradient checks and ablations from the
// command line.
//
// Exit codes
//   0  success
//   1  usage error
//   2  malformed embedding or checkpoint file
//   3  no class passed the prompt filter
//   4  training aborted on a non-finite value
//   5  gradient check failed
//   6  invalid configuration or data
//   7  any other error

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "promptfocus/ablation.hpp"
#include "promptfocus/config.hpp"
#include "promptfocus/dcp.hpp"
#include "promptfocus/errors.hpp"
#include "promptfocus/fixtures.hpp"
#include "promptfocus/gradcheck.hpp"
#include "promptfocus/train.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kFormat = 2, kEmpty = 3, kAborted = 4, kGradFail = 5, kConfig = 6, kOther = 7 };

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "flat JSON config file");
  cmd->add_option("--override", c.overrides, "key=value, applied after the config file")->take_all();
  cmd->add_option("--seed", c.seed, "run seed (overrides the config)");
}

pf::TrainConfig build_config(const Common& c) {
  pf::TrainConfig cfg = c.config.empty() ? pf::TrainConfig() : pf::TrainConfig::load(c.config);
  for (const auto& o : c.overrides) cfg.apply_override(o);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw pf::Error("cannot write " + path);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prompt-guided feature focusing on a frozen toy backbone"};
  app.require_subcommand(1);

  Common common;

  auto* select = app.add_subcommand("select", "choose class prompts for one image embedding");
  std::string fixture = pf::default_fixture_path().string();
  std::string image;
  bool synthetic = false;
  std::size_t synthetic_classes = 20;
  select->add_option("--fixture", fixture, "fixture base path (.embt + .json)");
  auto* image_opt = select->add_option("--image", image, "image embedding (.vec)");
  auto* synth_opt = select->add_flag("--synthetic", synthetic, "use a generated library and image");
  select->add_option("--classes", synthetic_classes, "class count for --synthetic")->check(CLI::PositiveNumber);
  image_opt->excludes(synth_opt);
  select->add_option("--out", common.out, "write the selection here instead of stdout");
  add_common(select, common);

  auto* train = app.add_subcommand("train", "fine-tune the focuser and head on the toy task");
  std::string train_out = "run";
  train->add_option("--out", train_out, "output directory");
  add_common(train, common);

  auto* gradcheck = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients");
  std::string scope = "all";
  bool inject_fault = false;
  gradcheck->add_option("--scope", scope, "tensor_core, pff or all");
  gradcheck->add_flag("--inject-fault", inject_fault)->group("");
  gradcheck->add_option("--out", common.out, "also write the JSON report here");

  auto* ablate = app.add_subcommand("ablate", "sweep one knob over several seeds");
  std::string axis, values_arg;
  std::size_t seed_count = 5;
  ablate->add_option("--axis", axis, "token_length, tau_f, tau_c, max_classes or component")->required();
  ablate->add_option("--values", values_arg, "comma-separated values")->required();
  ablate->add_option("--seeds", seed_count, "number of consecutive seeds from the run seed")
      ->check(CLI::PositiveNumber);
  ablate->add_option("--out", common.out, "write the CSV here instead of stdout");
  add_common(ablate, common);

  auto* fixtures = app.add_subcommand("fixtures", "regenerate the committed street fixture files");
  std::string fixtures_out = "data";
  fixtures->add_option("--out", fixtures_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*select) {
      if (!synthetic && image.empty()) {
        std::cerr << "select: one of --image or --synthetic is required\n";
        return kUsage;
      }
      const pf::TrainConfig cfg = build_config(common);
      const pf::Fixture f = synthetic
          ? pf::make_synthetic_fixture(synthetic_classes, 64, cfg.seed)
          : pf::load_fixture(fixture);
      const std::vector<double> emb = synthetic ? pf::synthetic_image_embedding(f) : pf::load_vector(image);
      const auto sel = pf::dcp::select_prompts(emb, f.library, f.table, cfg.dcp);
      const std::string text = pf::dcp::to_json(sel).dump(2) + "\n";
      if (common.out.empty()) {
        std::cout << text;
      } else {
        write_file(common.out, text);
      }
    } else if (*train) {
      const pf::TrainConfig cfg = build_config(common);
      const auto result = pf::train(cfg, train_out);
      std::printf("steps %zu  holdout mIoU %.4f  application mIoU %.4f  (frozen baseline %.4f)\n",
                  cfg.steps, result.final_holdout.miou, result.final_app.miou, result.baseline_app.miou);
      std::printf("step-0 equivalence %s, backbone unchanged %s\n",
                  result.step0_equivalent ? "ok" : "FAILED",
                  result.backbone_hash_start == result.backbone_hash_end ? "ok" : "FAILED");
      return result.step0_equivalent ? kOk : kOther;
    } else if (*gradcheck) {
      pf::GradCheckOptions opt;
      opt.inject_fault = inject_fault;
      const auto report = pf::run_gradcheck(pf::grad_scope_from_string(scope), opt);
      for (const auto& e : report.entries) {
        std::printf("%-24s %-28s %6zu  %.3e  %s\n", e.check.c_str(), e.parameter.c_str(), e.elements,
                    e.max_rel_error, e.passed ? "ok" : "FAIL");
      }
      if (!common.out.empty()) write_file(common.out, report.to_json().dump(2) + "\n");
      if (!report.passed()) {
        std::string names;
        for (const auto& c : report.failing_checks()) names += (names.empty() ? "" : ", ") + c;
        std::fprintf(stderr, "gradient check failed: %s\n", names.c_str());
        return kGradFail;
      }
      std::printf("all %zu gradient checks passed\n", report.entries.size());
    } else if (*ablate) {
      const pf::TrainConfig cfg = build_config(common);
      const auto values = split_list(values_arg);
      if (values.empty()) {
        std::cerr << "ablate: --values is empty\n";
        return kUsage;
      }
      std::vector<std::uint64_t> seeds;
      for (std::size_t i = 0; i < seed_count; ++i) seeds.push_back(cfg.seed + i);
      const auto rows = pf::run_ablation(cfg, pf::ablation_axis_from_string(axis), values, seeds);
      const std::string csv = pf::ablation_csv(rows);
      if (common.out.empty()) {
        std::cout << csv;
      } else {
        write_file(common.out, csv);
      }
    } else if (*fixtures) {
      pf::write_street_data(fixtures_out);
    }
  } catch (const pf::FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kFormat;
  } catch (const pf::dcp::EmptySelection& e) {
    std::cerr << "empty selection: " << e.what() << '\n';
    return kEmpty;
  } catch (const pf::TrainAborted& e) {
    std::cerr << e.what() << '\n';
    return kAborted;
  } catch (const pf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const pf::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOk;
}

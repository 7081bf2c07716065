#include <CLI11.hpp>

#include <iostream>

#include "jelly/app.hpp"
#include "jelly/errors.hpp"

namespace {

using namespace jelly;

const std::vector<std::string> kVariants{"bilstm", "lstm", "fc"};
const std::vector<std::string> kModes{"two-channel", "video-only"};
const std::vector<std::string> kBackbones{"resnet18", "tiny"};

CLI::Option* add_replay(CLI::App* cmd, std::string& replay) {
  return cmd->add_option("--replay", replay, "Re-run with the options recorded in a run.json (--out still applies)")
      ->check(CLI::ExistingFile);
}

template <typename Options>
Options resolve(const std::string& command, const Options& parsed, const std::string& replay, CLI::Option* out) {
  if (replay.empty()) return parsed;
  Options o;
  app::from_json(app::read_run_json(replay, command), o);
  if (out->count() > 0) o.out = parsed.out;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Jellyfish-sign carotid ultrasound video classification"};
  cli.require_subcommand(1);

  app::SynthOptions synth_opts;
  std::string synth_replay;
  auto* synth = cli.add_subcommand("synth", "Generate a synthetic labeled dataset");
  synth->add_option("--n", synth_opts.n, "Number of cases")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--positive-ratio", synth_opts.positive_ratio, "Fraction of positive cases")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  auto* synth_out = synth->add_option("--out", synth_opts.out, "Output directory")->capture_default_str();
  synth->add_option("--seed", synth_opts.seed, "Generator seed")->capture_default_str();
  synth->add_option("--frame-width", synth_opts.frame_width, "Frame width")->capture_default_str();
  synth->add_option("--frame-height", synth_opts.frame_height, "Frame height")->capture_default_str();
  synth->add_option("--roi-width", synth_opts.roi_width, "ROI width (height follows 5:3)")->capture_default_str();
  add_replay(synth, synth_replay);

  app::PreprocessOptions pre_opts;
  std::string pre_replay;
  auto* pre = cli.add_subcommand("preprocess", "Stabilize clips and rasterize surfaces");
  pre->add_option("--input", pre_opts.input, "Dataset root or manifest.csv");
  auto* pre_out = pre->add_option("--out", pre_opts.out, "Output directory")->capture_default_str();
  pre->add_option("--width", pre_opts.width, "Input width")->capture_default_str()->check(CLI::PositiveNumber);
  pre->add_option("--height", pre_opts.height, "Input height")->capture_default_str()->check(CLI::PositiveNumber);
  pre->add_option("--search-radius", pre_opts.search_radius, "NCC search radius around the previous match (-1 = full frame)")
      ->capture_default_str();
  add_replay(pre, pre_replay);

  app::TrainOptions train_opts;
  std::string train_replay, variant = "bilstm", mode = "two-channel", backbone = "resnet18";
  int seed_count = 3;
  std::uint64_t first_seed = 1;
  TrainConfig& tc = train_opts.config;
  auto* train = cli.add_subcommand("train", "Cross-validated training and evaluation");
  train->set_config("--config", "", "key=value configuration file");
  train->add_option("--manifest", train_opts.manifest, "manifest.csv of raw or preprocessed cases");
  train->add_option("--variant", variant, "Temporal head")->capture_default_str()->check(CLI::IsMember(kVariants));
  train->add_option("--input-mode", mode, "Input channels")->capture_default_str()->check(CLI::IsMember(kModes));
  train->add_option("--backbone", backbone, "CNN backbone")->capture_default_str()->check(CLI::IsMember(kBackbones));
  train->add_option("--folds", tc.folds, "Cross-validation folds")->capture_default_str()->check(CLI::Range(2, 1000));
  train->add_option("--seeds", seed_count, "Number of seeds")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--seed", first_seed, "First seed")->capture_default_str();
  train->add_option("--split-seed", tc.split_seed, "Fold assignment seed")->capture_default_str();
  train->add_option("--epochs", tc.max_epochs, "Epochs")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--lr", tc.learning_rate, "SGD learning rate")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--batch", tc.batch_size, "Batch size")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--window", tc.window, "Temporal crop length")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--flip", tc.flip_probability, "Flip probability")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  train->add_option("--hidden", tc.hidden_size, "Temporal hidden size")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--tiny-width", tc.tiny_width, "Tiny backbone base width")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--val-fraction", tc.val_fraction, "Validation share of each training split")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  train->add_option("--threshold", tc.threshold, "Decision threshold")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  train->add_flag("--ablation", tc.ablation, "Also run video-only input and the other heads");
  train->add_option("--jobs", tc.jobs, "Concurrent (seed, fold) jobs")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--width", train_opts.width, "Input width for raw cases")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--height", train_opts.height, "Input height for raw cases")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--search-radius", train_opts.search_radius, "NCC search radius for raw cases")->capture_default_str();
  auto* train_out = train->add_option("--out", train_opts.out, "Output directory")->capture_default_str();
  add_replay(train, train_replay);

  app::EvalOptions eval_opts;
  std::string eval_replay;
  auto* eval = cli.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  eval->add_option("--checkpoint", eval_opts.checkpoint, "Checkpoint file");
  eval->add_option("--manifest", eval_opts.manifest, "manifest.csv");
  auto* eval_out = eval->add_option("--out", eval_opts.out, "Output directory")->capture_default_str();
  eval->add_option("--window", eval_opts.window, "Center crop length")->capture_default_str()->check(CLI::PositiveNumber);
  eval->add_option("--threshold", eval_opts.threshold, "Decision threshold")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  eval->add_option("--search-radius", eval_opts.search_radius, "NCC search radius for raw cases")->capture_default_str();
  add_replay(eval, eval_replay);

  app::ExplainOptions explain_opts;
  std::string explain_replay;
  auto* explain = cli.add_subcommand("explain", "Grad-CAM++ overlays for one case");
  explain->add_option("--checkpoint", explain_opts.checkpoint, "Checkpoint file");
  explain->add_option("--case", explain_opts.case_dir, "Case directory (raw or preprocessed)");
  explain->add_option("--frame", explain_opts.frame, "Frame to render, 1-based (0 = last)")->capture_default_str()->check(CLI::NonNegativeNumber);
  explain->add_option("--layer", explain_opts.layer, "Backbone stage (default: last)");
  auto* explain_out = explain->add_option("--out", explain_opts.out, "Output directory")->capture_default_str();
  explain->add_option("--search-radius", explain_opts.search_radius, "NCC search radius for raw cases")->capture_default_str();
  add_replay(explain, explain_replay);

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    cli.exit(e);
    return 2;
  }

  const auto require = [](CLI::App* cmd, std::initializer_list<const char*> names, const std::string& replay) {
    if (!replay.empty()) return true;
    for (const char* name : names) {
      if (cmd->get_option(name)->count() == 0) {
        std::cerr << "jelly " << cmd->get_name() << ": " << name << " is required\n";
        return false;
      }
    }
    return true;
  };

  try {
    if (synth->parsed()) {
      app::run_synth(resolve("synth", synth_opts, synth_replay, synth_out));
    } else if (pre->parsed()) {
      if (!require(pre, {"--input"}, pre_replay)) return 2;
      app::run_preprocess(resolve("preprocess", pre_opts, pre_replay, pre_out));
    } else if (train->parsed()) {
      if (!require(train, {"--manifest"}, train_replay)) return 2;
      tc.variant = parse_variant(variant);
      tc.input_mode = parse_input_mode(mode);
      tc.backbone = parse_backbone(backbone);
      tc.seeds.clear();
      for (int s = 0; s < seed_count; ++s) tc.seeds.push_back(first_seed + static_cast<std::uint64_t>(s));
      const auto report = app::run_train(resolve("train", train_opts, train_replay, train_out));
      for (const auto& s : report.studies) {
        std::cout << s.name << " accuracy " << s.aggregate.accuracy.mean << " +- " << s.aggregate.accuracy.std
                  << "\n";
      }
    } else if (eval->parsed()) {
      if (!require(eval, {"--checkpoint", "--manifest"}, eval_replay)) return 2;
      const Metrics m = app::run_eval(resolve("eval", eval_opts, eval_replay, eval_out));
      std::cout << "accuracy " << m.accuracy << " precision " << m.precision << " recall " << m.recall << "\n";
    } else if (explain->parsed()) {
      if (!require(explain, {"--checkpoint", "--case"}, explain_replay)) return 2;
      app::run_explain(resolve("explain", explain_opts, explain_replay, explain_out));
    }
  } catch (const std::exception& e) {
    std::cerr << "jelly: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

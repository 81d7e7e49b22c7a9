#include "synood/cli.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include <CLI11.hpp>

#include "synood/checkpoint.hpp"
#include "synood/config.hpp"
#include "synood/error.hpp"
#include "synood/evaluation.hpp"
#include "synood/pipeline.hpp"
#include "synood/png_io.hpp"
#include "synood/record_io.hpp"
#include "synood/toydata.hpp"
#include "synood/training.hpp"

namespace synood {

namespace fs = std::filesystem;

namespace {

ExperimentConfig load_experiment(const std::string& path, bool seed_given, std::uint64_t seed) {
  ExperimentConfig config;
  try {
    config = load_config(path);
  } catch (const IoError& e) {
    // An unreadable experiment file is a usage problem (exit 2), unlike I/O
    // failures on data or checkpoints encountered mid-run (exit 3).
    throw ValidationError(e.what());
  }
  if (seed_given) config = with_seed(std::move(config), seed);
  return config;
}

Dataset require_in_d(const ExperimentConfig& config) {
  if (config.in_d.root.empty()) {
    throw ValidationError("config: 'data.in_d.root' is required for this command");
  }
  return load_dataset(config.in_d, Source::IN_D_TRAIN);
}

Dataset require_ood(const ExperimentConfig& config) {
  if (config.ood.root.empty()) {
    throw ValidationError("config: 'data.ood.root' is required for this command");
  }
  return load_dataset(config.ood, Source::OOD_TEST);
}

// Canonical [3,32,32] tensor from any decodable image.
Tensor canonical_image(const std::string& path) {
  Tensor t = to_tensor(read_png(path));
  if (t.dim(1) != 32 || t.dim(2) != 32) t = bilinear_resize(t, 32, 32);
  return t;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("failed while writing '" + path + "'");
}

nlohmann::json decision_json(const CascadeDecision& decision, int predicted_label) {
  return {{"predicted_label", predicted_label},
          {"is_ood", decision.is_ood},
          {"flagged_by", decision.flagged_by},
          {"fused_score", decision.fused_score},
          {"scores", decision.scores}};
}

// A ready-to-run experiment config sized for the toy benchmark.
ExperimentConfig toy_experiment_config(const ToyDataConfig& toy, const std::string& data_dir) {
  ExperimentConfig c;
  c.seed = toy.seed;
  c.in_d.name = "toy-shapes";
  c.in_d.root = (fs::path(data_dir) / "in_d.bin").string();
  c.in_d.image_count = toy.count;
  c.in_d.class_count = toy.class_count;
  c.ood.name = "toy-ood";
  c.ood.root = (fs::path(data_dir) / "ood.bin").string();
  c.ood.image_count = toy.ood_count;
  if (toy.external_count > 0) {
    c.external.name = "toy-external";
    c.external.root = (fs::path(data_dir) / "external.bin").string();
    c.external.image_count = toy.external_count;
  }
  c.generator.latent_dim = 32;
  c.generator.channel_mult = 8;
  c.generator.label_embed_dim = 8;
  c.discriminator.channels = 8;
  c.classifier.channels = 8;
  c.cb.channels = 8;
  c.train_classifier.learning_rate = 2e-3;
  c.train_classifier.batch_size = 32;
  c.train_classifier.steps = 300;
  c.train_generator.learning_rate = 1e-3;
  c.train_generator.batch_size = 16;
  c.train_generator.steps = 2000;
  c.train_generator.checkpoint_every = 500;
  c.train_generator.kld_weight = 1.0;
  c.train_cb.learning_rate = 1e-3;
  c.train_cb.batch_size = 16;
  c.train_cb.steps = 300;
  return with_seed(std::move(c), toy.seed);
}

CalibrationResult pipeline_calibration(DetectionPipeline& pipeline, const std::string& models_dir,
                                       const SplitResult& splits) {
  const fs::path thresholds = fs::path(models_dir) / "thresholds.json";
  if (fs::exists(thresholds)) {
    CalibrationResult calibration = load_calibration(thresholds.string());
    pipeline.cascade().set_calibration(calibration);
    return calibration;
  }
  pipeline.calibrate(splits.val);
  return pipeline.cascade().calibration();
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Masked conditional synthesis for semantic-mismatch OOD detection"};
  app.require_subcommand(1);
  std::function<int()> run;

  // --- gen-toy-data --------------------------------------------------------
  {
    auto* sub = app.add_subcommand("gen-toy-data", "Write the synthetic shapes benchmark");
    auto opts = std::make_shared<ToyDataConfig>();
    auto out_dir = std::make_shared<std::string>();
    auto config_out = std::make_shared<std::string>();
    sub->add_option("--out", *out_dir, "Output directory for the record files")->required();
    sub->add_option("--classes", opts->class_count, "In-D class count (2 or 3)");
    sub->add_option("--count", opts->count, "Number of In-D images");
    sub->add_option("--ood-count", opts->ood_count, "Number of OOD images");
    sub->add_option("--external-count", opts->external_count,
                    "Number of unlabeled external images");
    sub->add_option("--seed", opts->seed, "Global seed");
    sub->add_option("--config-out", *config_out,
                    "Also write a ready-to-run experiment config to this path");
    sub->callback([&run, opts, out_dir, config_out] {
      run = [opts, out_dir, config_out] {
        fs::create_directories(*out_dir);
        write_toy_shapes(*opts, *out_dir);
        std::cout << "wrote " << (fs::path(*out_dir) / "in_d.bin").string() << " ("
                  << opts->count << " images, " << opts->class_count << " classes), "
                  << (fs::path(*out_dir) / "ood.bin").string() << " (" << opts->ood_count
                  << " images)";
        if (opts->external_count > 0) {
          std::cout << ", " << (fs::path(*out_dir) / "external.bin").string() << " ("
                    << opts->external_count << " images)";
        }
        std::cout << '\n';
        if (!config_out->empty()) {
          save_config(*config_out, toy_experiment_config(*opts, *out_dir));
          std::cout << "wrote " << *config_out << '\n';
        }
        return 0;
      };
    });
  }

  // Shared option state for the experiment subcommands.
  struct ExperimentArgs {
    std::string config_path;
    std::string out_dir;
    std::string models_dir;
    std::uint64_t seed = 0;
    bool seed_given = false;
  };

  auto add_config_seed = [](CLI::App* sub, std::shared_ptr<ExperimentArgs> args) {
    sub->add_option("--config", args->config_path, "Experiment config (JSON)")->required();
    auto* seed_opt = sub->add_option("--seed", args->seed, "Override the config seed");
    sub->parse_complete_callback([args, seed_opt] { args->seed_given = seed_opt->count() > 0; });
  };

  // --- train-classifier ----------------------------------------------------
  {
    auto* sub = app.add_subcommand("train-classifier", "Train the protected classifier");
    auto args = std::make_shared<ExperimentArgs>();
    add_config_seed(sub, args);
    sub->add_option("--out", args->out_dir, "Directory for the checkpoint")->required();
    sub->callback([&run, args] {
      run = [args] {
        ExperimentConfig config = load_experiment(args->config_path, args->seed_given, args->seed);
        Dataset in_d = require_in_d(config);
        SplitResult splits = split(in_d, config.in_d.split_fractions, config.seed);
        Rng init = Rng::stream(config.seed, "init-classifier");
        ClassifierModel model(config.classifier, init);
        ClassifierTrainStats stats =
            train_classifier(model, splits.train, splits.val, config.train_classifier);
        fs::create_directories(args->out_dir);
        save_checkpoint((fs::path(args->out_dir) / "classifier_final.ckpt").string(),
                        model.params(),
                        {{"kind", "classifier"},
                         {"class_count", config.classifier.class_count},
                         {"channels", config.classifier.channels}});
        std::cout << "classifier: train accuracy " << stats.train_accuracy
                  << ", val accuracy " << stats.val_accuracy << '\n';
        return 0;
      };
    });
  }

  // --- train-generator -----------------------------------------------------
  {
    auto* sub = app.add_subcommand("train-generator",
                                   "Train the conditional synthesis model adversarially");
    auto args = std::make_shared<ExperimentArgs>();
    add_config_seed(sub, args);
    sub->add_option("--out", args->out_dir, "Directory for checkpoints and metrics")->required();
    sub->callback([&run, args] {
      run = [args] {
        ExperimentConfig config = load_experiment(args->config_path, args->seed_given, args->seed);
        Dataset in_d = require_in_d(config);
        SplitResult splits = split(in_d, config.in_d.split_fractions, config.seed);
        Rng gen_init = Rng::stream(config.seed, "init-generator");
        GeneratorModel gen(config.generator, gen_init);
        Rng disc_init = Rng::stream(config.seed, "init-discriminator");
        DiscriminatorModel disc(config.discriminator, disc_init);
        std::vector<StepMetrics> history =
            train_generator(gen, disc, splits.train, config.train_generator, args->out_dir);
        if (!history.empty()) {
          const StepMetrics& last = history.back();
          std::cout << "generator: " << history.size() << " steps, final loss_g=" << last.loss_g
                    << " kld=" << last.loss_kld << " ssim=" << last.ssim << '\n';
        } else {
          std::cout << "generator: wrote initial checkpoint (0 steps)\n";
        }
        return 0;
      };
    });
  }

  // --- train-cb ------------------------------------------------------------
  {
    auto* sub = app.add_subcommand(
        "train-cb", "Train the conditional binary classifier against a frozen generator");
    auto args = std::make_shared<ExperimentArgs>();
    add_config_seed(sub, args);
    sub->add_option("--out", args->out_dir, "Directory for the checkpoint")->required();
    sub->add_option("--models", args->models_dir,
                    "Directory holding generator_final.ckpt (default: --out)");
    sub->callback([&run, args] {
      run = [args] {
        ExperimentConfig config = load_experiment(args->config_path, args->seed_given, args->seed);
        const std::string models = args->models_dir.empty() ? args->out_dir : args->models_dir;
        Dataset in_d = require_in_d(config);
        SplitResult splits = split(in_d, config.in_d.split_fractions, config.seed);

        Rng zero(0);
        GeneratorModel gen(config.generator, zero);
        load_checkpoint((fs::path(models) / "generator_final.ckpt").string(), gen.params());
        gen.mark_trained();

        Dataset external;
        const Dataset* cb_external = nullptr;
        if (!config.external.root.empty()) {
          external = load_dataset(config.external, Source::EXTERNAL_UNLABELED);
          ClassifierModel classifier(config.classifier, zero);
          load_checkpoint((fs::path(models) / "classifier_final.ckpt").string(),
                          classifier.params());
          classifier.mark_trained();
          external.items = pseudo_label(classifier, std::move(external.items));
          external.class_count = config.cb.class_count;
          cb_external = &external;
        }

        Rng init = Rng::stream(config.seed, "init-cb");
        ConditionalBinaryClassifier cb(config.cb, init);
        CbTrainStats stats =
            train_binary_classifier(cb, gen, splits.train, cb_external, config.train_cb);
        fs::create_directories(args->out_dir);
        save_checkpoint((fs::path(args->out_dir) / "cb_final.ckpt").string(), cb.params(),
                        {{"kind", "cb"},
                         {"class_count", config.cb.class_count},
                         {"channels", config.cb.channels}});
        std::cout << "binary classifier: " << stats.losses.size() << " steps, final loss "
                  << stats.final_loss << '\n';
        return 0;
      };
    });
  }

  // --- calibrate -----------------------------------------------------------
  {
    auto* sub = app.add_subcommand("calibrate",
                                   "Choose per-scorer thresholds on the In-D validation split");
    auto args = std::make_shared<ExperimentArgs>();
    add_config_seed(sub, args);
    sub->add_option("--models", args->models_dir, "Directory with the trained checkpoints")
        ->required();
    sub->add_option("--out", args->out_dir, "Directory for thresholds.json (default: --models)");
    sub->callback([&run, args] {
      run = [args] {
        ExperimentConfig config = load_experiment(args->config_path, args->seed_given, args->seed);
        const std::string out = args->out_dir.empty() ? args->models_dir : args->out_dir;
        Dataset in_d = require_in_d(config);
        SplitResult splits = split(in_d, config.in_d.split_fractions, config.seed);
        TrainedModels models = load_models(config, args->models_dir);
        DetectionPipeline pipeline = make_pipeline(config, models);
        pipeline.calibrate(splits.val);
        fs::create_directories(out);
        save_calibration((fs::path(out) / "thresholds.json").string(),
                         pipeline.cascade().calibration());
        for (const auto& [name, threshold] : pipeline.cascade().calibration().thresholds) {
          std::cout << name << ": threshold " << threshold << " (keeps "
                    << 100.0 * pipeline.cascade().calibration().pass_rates.at(name)
                    << "% of validation)\n";
        }
        return 0;
      };
    });
  }

  // --- detect --------------------------------------------------------------
  {
    auto* sub = app.add_subcommand("detect", "Score images and report OOD decisions");
    auto args = std::make_shared<ExperimentArgs>();
    auto input = std::make_shared<std::string>();
    auto deterministic = std::make_shared<bool>(true);
    add_config_seed(sub, args);
    sub->add_option("--models", args->models_dir,
                    "Directory with checkpoints and thresholds.json")
        ->required();
    sub->add_option("--input", *input, "PNG image or record file to score")->required();
    sub->add_option("--out", args->out_dir, "Write the JSON report here instead of stdout");
    sub->add_flag("--deterministic,!--stochastic", *deterministic,
                  "Deterministic synthesis (default on)");
    sub->callback([&run, args, input, deterministic] {
      run = [args, input, deterministic] {
        ExperimentConfig config = load_experiment(args->config_path, args->seed_given, args->seed);
        TrainedModels models = load_models(config, args->models_dir);
        DetectionPipeline pipeline = make_pipeline(config, models);
        pipeline.set_deterministic(*deterministic);
        pipeline.cascade().set_calibration(
            load_calibration((fs::path(args->models_dir) / "thresholds.json").string()));

        nlohmann::json out_json;
        if (input->size() >= 4 && input->substr(input->size() - 4) == ".png") {
          int predicted = 0;
          CascadeDecision decision = pipeline.detect(canonical_image(*input), 0, &predicted);
          out_json = decision_json(decision, predicted);
          out_json["input"] = *input;
        } else {
          RecordFile records = read_records(*input);
          out_json = nlohmann::json::array();
          for (std::size_t i = 0; i < records.images.size(); ++i) {
            Tensor pixels = to_tensor(records.images[i]);
            if (pixels.dim(1) != 32 || pixels.dim(2) != 32) {
              pixels = bilinear_resize(pixels, 32, 32);
            }
            int predicted = 0;
            CascadeDecision decision =
                pipeline.detect(pixels, static_cast<std::uint64_t>(i), &predicted);
            nlohmann::json item = decision_json(decision, predicted);
            item["input"] = *input + "#" + std::to_string(i);
            out_json.push_back(std::move(item));
          }
        }
        const std::string text = out_json.dump(2) + "\n";
        if (args->out_dir.empty()) {
          std::cout << text;
        } else {
          write_text(args->out_dir, text);
        }
        return 0;
      };
    });
  }

  // --- evaluate ------------------------------------------------------------
  {
    auto* sub = app.add_subcommand("evaluate",
                                   "Run the detection benchmark and write metric reports");
    auto args = std::make_shared<ExperimentArgs>();
    auto scores_csv = std::make_shared<std::string>();
    auto deterministic = std::make_shared<bool>(true);
    add_config_seed(sub, args);
    auto* models_opt =
        sub->add_option("--models", args->models_dir, "Directory with trained checkpoints");
    auto* scores_opt = sub->add_option("--scores", *scores_csv,
                                       "Evaluate a previously exported scores CSV instead");
    models_opt->excludes(scores_opt);
    sub->add_option("--out", args->out_dir, "Directory for reports")->required();
    sub->add_flag("--deterministic,!--stochastic", *deterministic,
                  "Deterministic synthesis (default on)");
    sub->callback([&run, args, scores_csv, deterministic] {
      run = [args, scores_csv, deterministic] {
        ExperimentConfig config = load_experiment(args->config_path, args->seed_given, args->seed);
        fs::create_directories(args->out_dir);
        BenchmarkReport report;
        if (!scores_csv->empty()) {
          report = evaluate_rows(read_scores_csv(*scores_csv));
        } else {
          if (args->models_dir.empty()) {
            throw ValidationError("evaluate: either --models or --scores is required");
          }
          Dataset in_d = require_in_d(config);
          Dataset ood = require_ood(config);
          SplitResult splits = split(in_d, config.in_d.split_fractions, config.seed);
          TrainedModels models = load_models(config, args->models_dir);
          DetectionPipeline pipeline = make_pipeline(config, models);
          pipeline.set_deterministic(*deterministic);
          pipeline_calibration(pipeline, args->models_dir, splits);
          std::vector<ScoreRow> rows;
          report = run_benchmark(pipeline, splits.test, ood, &rows);
          write_scores_csv((fs::path(args->out_dir) / "scores.csv").string(), rows);
        }
        write_text((fs::path(args->out_dir) / "metrics.json").string(),
                   report_to_json(report).dump(2) + "\n");
        const std::string table = report_to_text(report);
        write_text((fs::path(args->out_dir) / "metrics.txt").string(), table);
        std::cout << table;
        return 0;
      };
    });
  }

  // --- ablate --------------------------------------------------------------
  {
    auto* sub = app.add_subcommand("ablate", "Run an ablation study");
    auto args = std::make_shared<ExperimentArgs>();
    auto kind = std::make_shared<std::string>();
    auto seeds = std::make_shared<std::vector<std::uint64_t>>();
    auto variants = std::make_shared<std::vector<std::string>>();
    add_config_seed(sub, args);
    sub->add_option("--kind", *kind, "masking_styles | scorer_combinations | label_conditioning")
        ->required();
    sub->add_option("--seeds", *seeds, "Seeds to repeat over (default: the config seed)")
        ->delimiter(',');
    sub->add_option("--variants", *variants,
                    "Restrict to these variants (default: all for the kind)")
        ->delimiter(',');
    sub->add_option("--out", args->out_dir, "Directory for reports")->required();
    sub->callback([&run, args, kind, seeds, variants] {
      run = [args, kind, seeds, variants] {
        ExperimentConfig config = load_experiment(args->config_path, args->seed_given, args->seed);
        Dataset in_d = require_in_d(config);
        Dataset ood = require_ood(config);
        Dataset external;
        const Dataset* external_ptr = nullptr;
        if (!config.external.root.empty()) {
          external = load_dataset(config.external, Source::EXTERNAL_UNLABELED);
          external_ptr = &external;
        }
        std::vector<std::uint64_t> run_seeds = *seeds;
        if (run_seeds.empty()) run_seeds.push_back(config.seed);
        AblationReport report =
            run_ablation(*kind, config, in_d, ood, external_ptr, run_seeds, *variants);
        fs::create_directories(args->out_dir);
        write_text((fs::path(args->out_dir) / "ablation.json").string(),
                   ablation_to_json(report).dump(2) + "\n");
        const std::string table = ablation_to_text(report);
        write_text((fs::path(args->out_dir) / "ablation.txt").string(), table);
        std::cout << table;
        return 0;
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    return run ? run() : 0;
  } catch (const ValidationError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 3;
  } catch (const StateError& e) {
    std::cerr << "state error: " << e.what() << '\n';
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace synood

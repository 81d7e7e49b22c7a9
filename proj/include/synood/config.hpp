#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "synood/classifier.hpp"
#include "synood/dataset.hpp"
#include "synood/discriminator.hpp"
#include "synood/generator.hpp"
#include "synood/masking.hpp"
#include "synood/scoring.hpp"
#include "synood/training.hpp"

namespace synood {

// One nested key-value file describes a whole experiment: data manifests,
// model sizes, training hyperparameters, masking and the scorer cascade.
// Every field has a default; unknown keys are rejected so typos fail loudly.
struct ExperimentConfig {
  std::uint64_t seed = 1;

  DatasetManifest in_d;      // required for experiments (root non-empty)
  DatasetManifest ood;       // optional
  DatasetManifest external;  // optional, pseudo-labeled before C_b training

  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  ClassifierConfig classifier;
  CbConfig cb;

  MaskSpec mask;  // shared by training and detection

  TrainConfig train_generator;
  TrainConfig train_classifier;
  TrainConfig train_cb;

  CascadeConfig cascade;

  // Ablation switch: strip label conditioning everywhere (see TrainConfig).
  bool unconditioned = false;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);

// Re-seeds the experiment and re-propagates the derived wiring (per-section
// seeds, shared mask, conditioning flag).
ExperimentConfig with_seed(ExperimentConfig config, std::uint64_t seed);

ExperimentConfig load_config(const std::string& path);
void save_config(const std::string& path, const ExperimentConfig& config);

}  // namespace synood

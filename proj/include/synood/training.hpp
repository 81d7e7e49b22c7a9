#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "synood/classifier.hpp"
#include "synood/dataset.hpp"
#include "synood/discriminator.hpp"
#include "synood/generator.hpp"
#include "synood/masking.hpp"
#include "synood/nn.hpp"

namespace synood {

struct AdamParams {
  double learning_rate = 5e-5;
  double beta1 = 0.0;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Parameters are captured by shared pointer; each
// step consumes the gradients currently stored on them.
class Adam {
 public:
  Adam(std::vector<VarPtr> params, const AdamParams& hp);

  void step();
  void zero_grad();
  int steps_taken() const { return t_; }
  const AdamParams& hyperparams() const { return hp_; }

 private:
  std::vector<VarPtr> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamParams hp_;
  int t_ = 0;
};

struct TrainConfig {
  double learning_rate = 5e-5;
  double adam_beta1 = 0.0;
  double adam_beta2 = 0.999;
  int batch_size = 96;
  int steps = 0;
  std::uint64_t seed = 1;
  double kld_weight = 1.0;
  MaskSpec mask_spec;
  int checkpoint_every = 1000;
  // Random horizontal flip + pad-2 random crop. On by default for the
  // classifier, off for the generator (the caller decides which applies).
  bool augment = true;
  // Ablation switch: when true every label fed to the generator, the
  // discriminator projection and the binary classifier is replaced by a
  // constant class, removing conditioning without changing architecture.
  bool unconditioned = false;

  AdamParams adam() const {
    return AdamParams{learning_rate, adam_beta1, adam_beta2, 1e-8};
  }
};

struct StepMetrics {
  int step = 0;
  double loss_g = 0.0;
  double loss_kld = 0.0;
  double loss_d = 0.0;
  double l1 = 0.0;
  double ssim = 0.0;
};

// One adversarial update: generator first (reconstruction + adversarial +
// weighted KLD), then the discriminator on fresh forward passes with the
// synthesized batch detached. `eps_rng` drives the reparameterization noise
// and `mask_rng` the per-sample masks.
StepMetrics train_step(GeneratorModel& gen, DiscriminatorModel& disc, Adam& gen_opt,
                       Adam& disc_opt, const Tensor& images, const std::vector<int>& labels,
                       const TrainConfig& config, Rng& mask_rng, Rng& eps_rng, int step_index);

// Full generator training loop. Writes metrics.csv plus periodic and final
// checkpoints under `out_dir` (pass empty to skip artifacts). With steps == 0
// only the initial state is written.
std::vector<StepMetrics> train_generator(GeneratorModel& gen, DiscriminatorModel& disc,
                                         const Dataset& train, const TrainConfig& config,
                                         const std::string& out_dir = "");

struct ClassifierTrainStats {
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  std::vector<double> losses;
};

// Cross-entropy training of the protected classifier.
ClassifierTrainStats train_classifier(ClassifierModel& model, const Dataset& train,
                                      const Dataset& val, const TrainConfig& config);

void write_metrics_csv(const std::string& path, const std::vector<StepMetrics>& rows);

}  // namespace synood

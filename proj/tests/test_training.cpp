#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "synood/checkpoint.hpp"
#include "synood/error.hpp"
#include "synood/toydata.hpp"
#include "synood/training.hpp"
#include "testutil.hpp"

using namespace synood;
using testutil::random_tensor;
using testutil::TempDir;

namespace {

Dataset tiny_toy(int count, std::uint64_t seed, TempDir& dir) {
  ToyDataConfig cfg;
  cfg.class_count = 2;
  cfg.count = count;
  cfg.ood_count = 0;
  cfg.seed = seed;
  write_toy_shapes(cfg, dir.str());
  DatasetManifest manifest;
  manifest.name = "toy";
  manifest.root = dir.str("in_d.bin");
  manifest.image_count = count;
  manifest.class_count = 2;
  return load_dataset(manifest, Source::IN_D_TRAIN);
}

GeneratorModel tiny_generator(std::uint64_t seed) {
  GeneratorConfig cfg;
  cfg.class_count = 2;
  cfg.latent_dim = 8;
  cfg.channel_mult = 2;
  Rng rng(seed);
  return GeneratorModel(cfg, rng);
}

DiscriminatorModel tiny_discriminator(std::uint64_t seed) {
  DiscriminatorConfig cfg;
  cfg.class_count = 2;
  cfg.channels = 2;
  Rng rng(seed);
  return DiscriminatorModel(cfg, rng);
}

TrainConfig tiny_train_config() {
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 8;
  cfg.steps = 4;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

TEST_CASE("Adam follows the bias-corrected reference trajectory") {
  const std::vector<double> grads{0.8, -0.3, 0.05, 1.7, -2.2};
  AdamParams hp;
  hp.learning_rate = 0.01;
  hp.beta1 = 0.9;
  hp.beta2 = 0.999;
  hp.eps = 1e-8;
  std::vector<double> expected =
      oracle::adam_scalar_trajectory(0.5, grads, hp.learning_rate, hp.beta1, hp.beta2, hp.eps);

  VarPtr theta = leaf(Tensor({1}, 0.5), true);
  Adam opt({theta}, hp);
  for (std::size_t t = 0; t < grads.size(); ++t) {
    theta->ensure_grad();
    theta->grad[0] = grads[t];
    opt.step();
    CHECK(theta->val[0] == doctest::Approx(expected[t]).epsilon(1e-10));
  }
  CHECK(opt.steps_taken() == 5);

  // The default configuration (beta1 = 0) reduces to sign-like steps:
  // |delta| = lr * |g| / (|g| + eps) which is within eps of lr.
  VarPtr w = leaf(Tensor({1}, 1.0), true);
  AdamParams sgn;
  sgn.learning_rate = 0.05;
  sgn.beta1 = 0.0;
  Adam opt2({w}, sgn);
  w->ensure_grad();
  w->grad[0] = -3.0;
  opt2.step();
  const double delta = w->val[0] - 1.0;
  CHECK(delta > 0.0);  // moves against the gradient
  CHECK(std::abs(delta) <= 0.05);
  CHECK(std::abs(delta) >= 0.05 * (1.0 - 1e-6));
}

TEST_CASE("Adam with zero learning rate leaves parameters untouched") {
  Rng rng(3);
  VarPtr a = leaf(random_tensor({4, 4}, rng), true);
  const std::vector<double> before = a->val.vec();
  AdamParams hp;
  hp.learning_rate = 0.0;
  Adam opt({a}, hp);
  a->ensure_grad();
  a->grad.fill(2.5);
  opt.step();
  CHECK(a->val.vec() == before);

  opt.zero_grad();
  CHECK(a->grad.sum() == 0.0);
}

TEST_CASE("Adam validates its hyperparameters") {
  VarPtr a = leaf(Tensor({1}, 0.0), true);
  AdamParams bad;
  bad.learning_rate = -1.0;
  CHECK_THROWS_AS(Adam({a}, bad), ValidationError);
  bad = AdamParams{};
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(Adam({a}, bad), ValidationError);
  bad = AdamParams{};
  bad.beta2 = -0.1;
  CHECK_THROWS_AS(Adam({a}, bad), ValidationError);
  bad = AdamParams{};
  bad.eps = 0.0;
  CHECK_THROWS_AS(Adam({a}, bad), ValidationError);
}

// ---------------------------------------------------------------------------
// train_step
// ---------------------------------------------------------------------------

TEST_CASE("train_step updates exactly the model whose optimizer is live") {
  TempDir dir("step");
  Dataset data = tiny_toy(16, 21, dir);
  Batch batch = gather_batch(data, {0, 1, 2, 3, 4, 5, 6, 7});
  TrainConfig cfg = tiny_train_config();

  // Generator optimizer frozen: its parameters must not move, the
  // discriminator's must.
  {
    GeneratorModel gen = tiny_generator(7);
    DiscriminatorModel disc = tiny_discriminator(8);
    AdamParams frozen = cfg.adam();
    frozen.learning_rate = 0.0;
    Adam gen_opt(gen.params().vars(), frozen);
    Adam disc_opt(disc.params().vars(), cfg.adam());
    const double gen_before = gen.params().value_checksum();
    const double disc_before = disc.params().value_checksum();
    Rng mask_rng(1), eps_rng(2);
    StepMetrics m = train_step(gen, disc, gen_opt, disc_opt, batch.images, batch.labels, cfg,
                               mask_rng, eps_rng, 0);
    CHECK(gen.params().value_checksum() == gen_before);
    CHECK(disc.params().value_checksum() != disc_before);
    CHECK(std::isfinite(m.loss_g));
    CHECK(std::isfinite(m.loss_d));
  }

  // And the reverse.
  {
    GeneratorModel gen = tiny_generator(7);
    DiscriminatorModel disc = tiny_discriminator(8);
    AdamParams frozen = cfg.adam();
    frozen.learning_rate = 0.0;
    Adam gen_opt(gen.params().vars(), cfg.adam());
    Adam disc_opt(disc.params().vars(), frozen);
    const double gen_before = gen.params().value_checksum();
    const double disc_before = disc.params().value_checksum();
    Rng mask_rng(1), eps_rng(2);
    train_step(gen, disc, gen_opt, disc_opt, batch.images, batch.labels, cfg, mask_rng,
               eps_rng, 0);
    CHECK(gen.params().value_checksum() != gen_before);
    CHECK(disc.params().value_checksum() == disc_before);
  }
}

TEST_CASE("train_step reports the step index and sane metric ranges") {
  TempDir dir("metrics");
  Dataset data = tiny_toy(16, 22, dir);
  Batch batch = gather_batch(data, {0, 1, 2, 3});
  GeneratorModel gen = tiny_generator(9);
  DiscriminatorModel disc = tiny_discriminator(10);
  TrainConfig cfg = tiny_train_config();
  Adam gen_opt(gen.params().vars(), cfg.adam());
  Adam disc_opt(disc.params().vars(), cfg.adam());
  Rng mask_rng(3), eps_rng(4);
  StepMetrics m = train_step(gen, disc, gen_opt, disc_opt, batch.images, batch.labels, cfg,
                             mask_rng, eps_rng, 17);
  CHECK(m.step == 17);
  CHECK(m.ssim >= -1.0);
  CHECK(m.ssim <= 1.0);
  CHECK(m.l1 >= 0.0);
  CHECK(m.loss_kld >= 0.0);
  CHECK(m.loss_d > 0.0);  // softplus terms are strictly positive
}

TEST_CASE("train_step rejects malformed batches and unlabeled samples") {
  TempDir dir("reject");
  Dataset data = tiny_toy(8, 23, dir);
  Batch batch = gather_batch(data, {0, 1});
  GeneratorModel gen = tiny_generator(11);
  DiscriminatorModel disc = tiny_discriminator(12);
  TrainConfig cfg = tiny_train_config();
  Adam gen_opt(gen.params().vars(), cfg.adam());
  Adam disc_opt(disc.params().vars(), cfg.adam());
  Rng mask_rng(5), eps_rng(6);

  CHECK_THROWS_AS(train_step(gen, disc, gen_opt, disc_opt, Tensor({3, 32, 32}, 0.5), {0}, cfg,
                             mask_rng, eps_rng, 0),
                  ValidationError);
  CHECK_THROWS_AS(train_step(gen, disc, gen_opt, disc_opt, batch.images, {0}, cfg, mask_rng,
                             eps_rng, 0),
                  ValidationError);
  // Unlabeled sentinel stays invalid even in unconditioned mode: external
  // data must be pseudo-labeled before it reaches the trainer.
  TrainConfig uncond = cfg;
  uncond.unconditioned = true;
  CHECK_THROWS_AS(train_step(gen, disc, gen_opt, disc_opt, batch.images, {0, kUnlabeled},
                             uncond, mask_rng, eps_rng, 0),
                  ValidationError);
}

TEST_CASE("unconditioned mode is exactly label-blind") {
  TempDir dir("uncond");
  Dataset data = tiny_toy(16, 24, dir);
  Batch batch = gather_batch(data, {0, 1, 2, 3, 4, 5});
  TrainConfig cfg = tiny_train_config();

  // Variant A: true labels, conditioning disabled by the ablation switch.
  GeneratorModel gen_a = tiny_generator(13);
  DiscriminatorModel disc_a = tiny_discriminator(14);
  TrainConfig uncond = cfg;
  uncond.unconditioned = true;
  Adam ga(gen_a.params().vars(), cfg.adam());
  Adam da(disc_a.params().vars(), cfg.adam());
  Rng mask_a(7), eps_a(8);
  StepMetrics ma = train_step(gen_a, disc_a, ga, da, batch.images, batch.labels, uncond,
                              mask_a, eps_a, 0);

  // Variant B: the same models, every label literally zero, switch off.
  GeneratorModel gen_b = tiny_generator(13);
  DiscriminatorModel disc_b = tiny_discriminator(14);
  Adam gb(gen_b.params().vars(), cfg.adam());
  Adam db(disc_b.params().vars(), cfg.adam());
  Rng mask_b(7), eps_b(8);
  std::vector<int> zeros(batch.labels.size(), 0);
  StepMetrics mb = train_step(gen_b, disc_b, gb, db, batch.images, zeros, cfg, mask_b, eps_b, 0);

  CHECK(ma.loss_g == mb.loss_g);
  CHECK(ma.loss_d == mb.loss_d);
  CHECK(ma.loss_kld == mb.loss_kld);
  CHECK(gen_a.params().value_checksum() == gen_b.params().value_checksum());
  CHECK(disc_a.params().value_checksum() == disc_b.params().value_checksum());
}

TEST_CASE("train_step surfaces poisoned parameters as NumericError") {
  TempDir dir("nan");
  Dataset data = tiny_toy(8, 25, dir);
  Batch batch = gather_batch(data, {0, 1});
  GeneratorModel gen = tiny_generator(15);
  DiscriminatorModel disc = tiny_discriminator(16);
  gen.params().entries().front().second->val[0] = std::nan("");
  TrainConfig cfg = tiny_train_config();
  Adam gen_opt(gen.params().vars(), cfg.adam());
  Adam disc_opt(disc.params().vars(), cfg.adam());
  Rng mask_rng(9), eps_rng(10);
  CHECK_THROWS_AS(train_step(gen, disc, gen_opt, disc_opt, batch.images, batch.labels, cfg,
                             mask_rng, eps_rng, 0),
                  NumericError);
}

// ---------------------------------------------------------------------------
// train_generator
// ---------------------------------------------------------------------------

TEST_CASE("train_generator writes checkpoints and a metrics log") {
  TempDir data_dir("gen-data");
  Dataset data = tiny_toy(32, 26, data_dir);
  GeneratorModel gen = tiny_generator(17);
  DiscriminatorModel disc = tiny_discriminator(18);
  TrainConfig cfg = tiny_train_config();
  cfg.steps = 4;
  cfg.checkpoint_every = 2;

  TempDir out("gen-out");
  std::vector<StepMetrics> history = train_generator(gen, disc, data, cfg, out.str());
  CHECK(history.size() == 4);
  CHECK(gen.trained());

  namespace fs = std::filesystem;
  CHECK(fs::exists(out.str("generator_step000002.ckpt")));
  CHECK(fs::exists(out.str("discriminator_step000002.ckpt")));
  CHECK(fs::exists(out.str("generator_final.ckpt")));
  CHECK(fs::exists(out.str("discriminator_final.ckpt")));
  // The final step coincides with a checkpoint boundary and must not be
  // duplicated as both a periodic and a final file.
  CHECK_FALSE(fs::exists(out.str("generator_step000004.ckpt")));

  nlohmann::json meta = read_checkpoint_meta(out.str("generator_final.ckpt"));
  CHECK(meta["final"] == true);
  CHECK(meta["step"] == 4);
  CHECK(meta["kind"] == "generator");
  CHECK(meta["latent_dim"] == 8);

  // The periodic checkpoint restores into a fresh model of the same shape.
  GeneratorModel restored = tiny_generator(99);
  nlohmann::json step_meta = load_checkpoint(out.str("generator_step000002.ckpt"),
                                             restored.params());
  CHECK(step_meta["final"] == false);
  CHECK(step_meta["step"] == 2);

  std::ifstream csv(out.str("metrics.csv"));
  REQUIRE(csv.good());
  std::string line;
  std::getline(csv, line);
  CHECK(line == "step,loss_g,loss_kld,loss_d,l1,ssim");
  int rows = 0;
  while (std::getline(csv, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 4);
}

TEST_CASE("train_generator with zero steps records only the final state") {
  TempDir data_dir("gen-zero");
  Dataset data = tiny_toy(8, 27, data_dir);
  GeneratorModel gen = tiny_generator(19);
  DiscriminatorModel disc = tiny_discriminator(20);
  const double before = gen.params().value_checksum();
  TrainConfig cfg = tiny_train_config();
  cfg.steps = 0;

  TempDir out("gen-zero-out");
  std::vector<StepMetrics> history = train_generator(gen, disc, data, cfg, out.str());
  CHECK(history.empty());
  CHECK(gen.params().value_checksum() == before);
  CHECK(std::filesystem::exists(out.str("generator_final.ckpt")));
  CHECK(std::filesystem::exists(out.str("metrics.csv")));
}

TEST_CASE("train_generator is deterministic in the seed") {
  TempDir data_dir("gen-det");
  Dataset data = tiny_toy(16, 28, data_dir);
  TrainConfig cfg = tiny_train_config();
  cfg.steps = 3;

  auto run = [&](std::uint64_t seed) {
    GeneratorModel gen = tiny_generator(31);
    DiscriminatorModel disc = tiny_discriminator(32);
    TrainConfig local = cfg;
    local.seed = seed;
    std::vector<StepMetrics> history = train_generator(gen, disc, data, local);
    return std::make_pair(gen.params().value_checksum(), history);
  };

  auto [sum_a, hist_a] = run(5);
  auto [sum_b, hist_b] = run(5);
  CHECK(sum_a == sum_b);
  REQUIRE(hist_a.size() == hist_b.size());
  for (std::size_t i = 0; i < hist_a.size(); ++i) {
    CHECK(hist_a[i].loss_g == hist_b[i].loss_g);
    CHECK(hist_a[i].loss_d == hist_b[i].loss_d);
  }

  auto [sum_c, hist_c] = run(6);
  CHECK(sum_a != sum_c);  // a different seed takes a different trajectory
}

TEST_CASE("train_generator validates dataset and config") {
  TempDir data_dir("gen-validate");
  Dataset data = tiny_toy(8, 29, data_dir);
  GeneratorModel gen = tiny_generator(33);
  DiscriminatorModel disc = tiny_discriminator(34);
  TrainConfig cfg = tiny_train_config();

  Dataset empty;
  empty.class_count = 2;
  CHECK_THROWS_AS(train_generator(gen, disc, empty, cfg), ValidationError);

  TrainConfig bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(train_generator(gen, disc, data, bad), ValidationError);
  bad = cfg;
  bad.steps = -1;
  CHECK_THROWS_AS(train_generator(gen, disc, data, bad), ValidationError);

  Dataset mislabeled = data;
  mislabeled.class_count = 5;
  CHECK_THROWS_AS(train_generator(gen, disc, mislabeled, cfg), ValidationError);
}

// ---------------------------------------------------------------------------
// train_classifier
// ---------------------------------------------------------------------------

TEST_CASE("train_classifier fits the toy shapes") {
  TempDir dir("cls");
  Dataset data = tiny_toy(64, 30, dir);
  SplitResult parts = split(data, {0.75, 0.125, 0.125}, 1);

  ClassifierConfig mcfg;
  mcfg.class_count = 2;
  mcfg.channels = 4;
  Rng init(35);
  ClassifierModel model(mcfg, init);
  CHECK_FALSE(model.trained());

  TrainConfig cfg;
  cfg.learning_rate = 2e-3;
  cfg.batch_size = 16;
  cfg.steps = 80;
  cfg.seed = 12;
  ClassifierTrainStats stats = train_classifier(model, parts.train, parts.val, cfg);
  CHECK(model.trained());
  CHECK(stats.losses.size() == 80);
  CHECK(stats.train_accuracy >= 0.85);
  CHECK(stats.val_accuracy >= 0.5);
  // The loss must actually have decreased over training.
  const double head = stats.losses.front();
  const double tail = stats.losses.back();
  CHECK(tail < head);
}

TEST_CASE("train_classifier validates dataset and config") {
  TempDir dir("cls-validate");
  Dataset data = tiny_toy(8, 36, dir);
  ClassifierConfig mcfg;
  mcfg.class_count = 2;
  mcfg.channels = 4;
  Rng init(37);
  ClassifierModel model(mcfg, init);
  TrainConfig cfg = tiny_train_config();

  Dataset empty;
  empty.class_count = 2;
  CHECK_THROWS_AS(train_classifier(model, empty, data, cfg), ValidationError);
  Dataset mislabeled = data;
  mislabeled.class_count = 3;
  CHECK_THROWS_AS(train_classifier(model, mislabeled, data, cfg), ValidationError);
}

TEST_CASE("write_metrics_csv fails loudly on an unwritable path") {
  std::vector<StepMetrics> rows(1);
  CHECK_THROWS_AS(write_metrics_csv("/nonexistent-dir/metrics.csv", rows), IoError);
}

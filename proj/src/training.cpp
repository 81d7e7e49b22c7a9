#include "synood/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "synood/checkpoint.hpp"
#include "synood/error.hpp"
#include "synood/losses.hpp"

namespace synood {

Adam::Adam(std::vector<VarPtr> params, const AdamParams& hp) : params_(std::move(params)), hp_(hp) {
  if (hp_.learning_rate < 0.0 || hp_.beta1 < 0.0 || hp_.beta1 >= 1.0 || hp_.beta2 < 0.0 ||
      hp_.beta2 >= 1.0 || hp_.eps <= 0.0) {
    throw ValidationError("Adam: hyperparameters out of range");
  }
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p->val.size(), 0.0);
    v_.emplace_back(p->val.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(hp_.beta1, t_);
  const double bc2 = 1.0 - std::pow(hp_.beta2, t_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var& p = *params_[i];
    p.ensure_grad();
    double* theta = p.val.data();
    const double* g = p.grad.data();
    std::vector<double>& m = m_[i];
    std::vector<double>& v = v_[i];
    for (std::size_t j = 0; j < m.size(); ++j) {
      m[j] = hp_.beta1 * m[j] + (1.0 - hp_.beta1) * g[j];
      v[j] = hp_.beta2 * v[j] + (1.0 - hp_.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      theta[j] -= hp_.learning_rate * m_hat / (std::sqrt(v_hat) + hp_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (const auto& p : params_) p->zero_grad();
}

namespace {

void check_labeled(const std::vector<int>& labels, int class_count, const char* who) {
  for (int y : labels) {
    if (y < 0 || y >= class_count) {
      throw ValidationError(std::string(who) + ": batch contains an out-of-range or "
                            "missing label (" + std::to_string(y) + ")");
    }
  }
}

std::vector<int> effective_labels(const std::vector<int>& labels, bool unconditioned) {
  if (!unconditioned) return labels;
  return std::vector<int>(labels.size(), 0);
}

// Random horizontal flip plus a random crop from a zero-padded canvas
// (2 pixels each side).
Tensor augment_image(const Tensor& img, Rng& rng) {
  const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
  const bool flip = rng.uniform(0.0, 1.0) < 0.5;
  const int dy = rng.uniform_int(-2, 2);
  const int dx = rng.uniform_int(-2, 2);
  Tensor out({c, h, w}, 0.0);
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      const int sy = y + dy;
      if (sy < 0 || sy >= h) continue;
      for (int x = 0; x < w; ++x) {
        const int sx = x + dx;
        if (sx < 0 || sx >= w) continue;
        const int src_x = flip ? (w - 1 - sx) : sx;
        out[static_cast<std::size_t>((ch * h + y) * w + x)] =
            img[static_cast<std::size_t>((ch * h + sy) * w + src_x)];
      }
    }
  }
  return out;
}

void save_pair(const std::string& out_dir, const std::string& tag, int step, bool final,
               GeneratorModel& gen, DiscriminatorModel& disc) {
  namespace fs = std::filesystem;
  nlohmann::json meta{{"step", step},
                      {"final", final},
                      {"class_count", gen.config().class_count},
                      {"latent_dim", gen.config().latent_dim},
                      {"channel_mult", gen.config().channel_mult},
                      {"encoder_conditioned", gen.config().encoder_conditioned}};
  meta["kind"] = "generator";
  save_checkpoint((fs::path(out_dir) / ("generator_" + tag + ".ckpt")).string(), gen.params(),
                  meta);
  meta["kind"] = "discriminator";
  meta["channels"] = disc.config().channels;
  save_checkpoint((fs::path(out_dir) / ("discriminator_" + tag + ".ckpt")).string(),
                  disc.params(), meta);
}

}  // namespace

StepMetrics train_step(GeneratorModel& gen, DiscriminatorModel& disc, Adam& gen_opt,
                       Adam& disc_opt, const Tensor& images, const std::vector<int>& labels,
                       const TrainConfig& config, Rng& mask_rng, Rng& eps_rng, int step_index) {
  if (images.ndim() != 4 || images.dim(0) != static_cast<int>(labels.size())) {
    throw ValidationError("train_step: images must be [N,3,H,W] with one label per sample");
  }
  check_labeled(labels, gen.config().class_count, "train_step");
  const std::vector<int> cond = effective_labels(labels, config.unconditioned);

  // --- Generator update: reconstruction + adversarial + weighted KLD. ---
  Tensor masked = mask_batch(images, config.mask_spec, mask_rng);
  auto enc = gen.encode_graph(constant(masked), cond, /*deterministic=*/false, &eps_rng);
  VarPtr x_prime = gen.decode_graph(enc.z, cond);
  UNetDiscOutput fake = disc.discriminate_graph(x_prime, cond);
  GenLossParts parts = gen_loss(fake, constant(images), x_prime);
  VarPtr kld = kld_loss(enc.mu, enc.log_var);
  VarPtr total = add(parts.total, mul_scalar(kld, config.kld_weight));

  StepMetrics metrics;
  metrics.step = step_index;
  metrics.loss_g = parts.total->scalar();
  metrics.loss_kld = kld->scalar();
  metrics.l1 = parts.l1->scalar();
  metrics.ssim = parts.ssim->scalar();
  if (!std::isfinite(metrics.loss_g) || !std::isfinite(metrics.loss_kld)) {
    std::ostringstream msg;
    msg << "train_step " << step_index << ": non-finite generator loss (loss_g="
        << metrics.loss_g << ", kld=" << metrics.loss_kld << ", l1=" << metrics.l1
        << ", ssim=" << metrics.ssim << ")";
    throw NumericError(msg.str());
  }
  gen.params().zero_grad();
  disc.params().zero_grad();
  backward(total);
  gen_opt.step();

  // --- Discriminator update: fresh forwards, synthesis detached. ---
  gen.params().zero_grad();
  disc.params().zero_grad();
  UNetDiscOutput real_out = disc.discriminate_graph(constant(images), cond);
  UNetDiscOutput fake_out = disc.discriminate_graph(constant(x_prime->val), cond);
  VarPtr d_total = disc_loss(real_out, fake_out);
  metrics.loss_d = d_total->scalar();
  if (!std::isfinite(metrics.loss_d)) {
    std::ostringstream msg;
    msg << "train_step " << step_index << ": non-finite discriminator loss (loss_d="
        << metrics.loss_d << ")";
    throw NumericError(msg.str());
  }
  backward(d_total);
  disc_opt.step();
  gen.params().zero_grad();
  disc.params().zero_grad();
  return metrics;
}

std::vector<StepMetrics> train_generator(GeneratorModel& gen, DiscriminatorModel& disc,
                                         const Dataset& train, const TrainConfig& config,
                                         const std::string& out_dir) {
  if (train.items.empty()) throw ValidationError("train_generator: training set is empty");
  if (config.batch_size < 1) throw ValidationError("train_generator: batch_size must be >= 1");
  if (config.steps < 0) throw ValidationError("train_generator: steps must be >= 0");
  if (train.class_count != gen.config().class_count) {
    throw ValidationError("train_generator: dataset has " + std::to_string(train.class_count) +
                          " classes but the generator expects " +
                          std::to_string(gen.config().class_count));
  }
  namespace fs = std::filesystem;
  const bool artifacts = !out_dir.empty();
  if (artifacts) fs::create_directories(out_dir);

  Adam gen_opt(gen.params().vars(), config.adam());
  Adam disc_opt(disc.params().vars(), config.adam());
  BatchIterator batches(train.size(), config.batch_size,
                        Rng::stream_seed(config.seed, "gen-batches"));
  Rng mask_rng = Rng::stream(config.seed, "gen-mask");
  Rng eps_rng = Rng::stream(config.seed, "gen-eps");

  std::vector<StepMetrics> history;
  history.reserve(static_cast<std::size_t>(config.steps));
  for (int step = 0; step < config.steps; ++step) {
    Batch batch = gather_batch(train, batches.next());
    history.push_back(train_step(gen, disc, gen_opt, disc_opt, batch.images, batch.labels,
                                 config, mask_rng, eps_rng, step));
    if (artifacts && config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 &&
        step + 1 < config.steps) {
      std::ostringstream tag;
      tag << "step" << std::setw(6) << std::setfill('0') << (step + 1);
      save_pair(out_dir, tag.str(), step + 1, /*final=*/false, gen, disc);
    }
  }
  gen.mark_trained();
  if (artifacts) {
    save_pair(out_dir, "final", config.steps, /*final=*/true, gen, disc);
    write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), history);
  }
  return history;
}

ClassifierTrainStats train_classifier(ClassifierModel& model, const Dataset& train,
                                      const Dataset& val, const TrainConfig& config) {
  if (train.items.empty()) throw ValidationError("train_classifier: training set is empty");
  if (config.batch_size < 1) throw ValidationError("train_classifier: batch_size must be >= 1");
  if (train.class_count != model.config().class_count) {
    throw ValidationError("train_classifier: dataset has " + std::to_string(train.class_count) +
                          " classes but the classifier expects " +
                          std::to_string(model.config().class_count));
  }
  Adam opt(model.params().vars(), config.adam());
  BatchIterator batches(train.size(), config.batch_size,
                        Rng::stream_seed(config.seed, "cls-batches"));
  Rng aug_rng = Rng::stream(config.seed, "cls-augment");

  ClassifierTrainStats stats;
  stats.losses.reserve(static_cast<std::size_t>(config.steps));
  for (int step = 0; step < config.steps; ++step) {
    Batch batch = gather_batch(train, batches.next());
    check_labeled(batch.labels, model.config().class_count, "train_classifier");
    Tensor images = batch.images;
    if (config.augment) {
      const int n = images.dim(0);
      const std::size_t plane = images.size() / static_cast<std::size_t>(n);
      for (int i = 0; i < n; ++i) {
        Tensor sample({images.dim(1), images.dim(2), images.dim(3)});
        std::copy(images.data() + i * plane, images.data() + (i + 1) * plane, sample.data());
        Tensor aug = augment_image(sample, aug_rng);
        std::copy(aug.data(), aug.data() + plane, images.data() + i * plane);
      }
    }
    VarPtr loss = softmax_xent(model.logits_graph(constant(images)), batch.labels);
    const double value = loss->scalar();
    if (!std::isfinite(value)) {
      throw NumericError("train_classifier: non-finite loss at step " + std::to_string(step));
    }
    model.params().zero_grad();
    backward(loss);
    opt.step();
    stats.losses.push_back(value);
  }
  model.mark_trained();
  stats.train_accuracy = accuracy(model, train);
  stats.val_accuracy = val.items.empty() ? 0.0 : accuracy(model, val);
  return stats;
}

void write_metrics_csv(const std::string& path, const std::vector<StepMetrics>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write metrics CSV '" + path + "'");
  out << "step,loss_g,loss_kld,loss_d,l1,ssim\n";
  out << std::setprecision(12);
  for (const StepMetrics& row : rows) {
    out << row.step << ',' << row.loss_g << ',' << row.loss_kld << ',' << row.loss_d << ','
        << row.l1 << ',' << row.ssim << '\n';
  }
  if (!out) throw IoError("failed while writing metrics CSV '" + path + "'");
}

}  // namespace synood

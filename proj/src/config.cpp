#include "synood/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "synood/error.hpp"

namespace synood {

namespace {

// Strict typed access into one JSON object: every key is either consumed or
// reported as unknown, so misspelled options never pass silently.
class Reader {
 public:
  // Owns its object: callers routinely pass temporaries (nested sections).
  Reader(nlohmann::json j, std::string path) : j_(std::move(j)), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw ValidationError("config: '" + path_ + "' must be an object");
    }
  }

  std::string where(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  double number(const std::string& key, double def) {
    const nlohmann::json* v = consume(key);
    if (v == nullptr) return def;
    if (!v->is_number()) throw ValidationError("config: '" + where(key) + "' must be a number");
    return v->get<double>();
  }

  int integer(const std::string& key, int def) {
    const nlohmann::json* v = consume(key);
    if (v == nullptr) return def;
    if (!v->is_number_integer()) {
      throw ValidationError("config: '" + where(key) + "' must be an integer");
    }
    return v->get<int>();
  }

  std::uint64_t uinteger(const std::string& key, std::uint64_t def) {
    const nlohmann::json* v = consume(key);
    if (v == nullptr) return def;
    if (!v->is_number_unsigned() && !v->is_number_integer()) {
      throw ValidationError("config: '" + where(key) + "' must be a non-negative integer");
    }
    if (v->is_number_integer() && v->get<std::int64_t>() < 0) {
      throw ValidationError("config: '" + where(key) + "' must be a non-negative integer");
    }
    return v->get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool def) {
    const nlohmann::json* v = consume(key);
    if (v == nullptr) return def;
    if (!v->is_boolean()) throw ValidationError("config: '" + where(key) + "' must be a bool");
    return v->get<bool>();
  }

  std::string str(const std::string& key, const std::string& def) {
    const nlohmann::json* v = consume(key);
    if (v == nullptr) return def;
    if (!v->is_string()) throw ValidationError("config: '" + where(key) + "' must be a string");
    return v->get<std::string>();
  }

  std::vector<std::string> string_list(const std::string& key, std::vector<std::string> def) {
    const nlohmann::json* v = consume(key);
    if (v == nullptr) return def;
    if (!v->is_array()) {
      throw ValidationError("config: '" + where(key) + "' must be an array of strings");
    }
    std::vector<std::string> out;
    for (const auto& item : *v) {
      if (!item.is_string()) {
        throw ValidationError("config: '" + where(key) + "' must be an array of strings");
      }
      out.push_back(item.get<std::string>());
    }
    return out;
  }

  std::array<double, 3> fractions(const std::string& key, std::array<double, 3> def) {
    const nlohmann::json* v = consume(key);
    if (v == nullptr) return def;
    if (!v->is_array() || v->size() != 3) {
      throw ValidationError("config: '" + where(key) + "' must be an array of 3 numbers");
    }
    std::array<double, 3> out{};
    for (std::size_t i = 0; i < 3; ++i) {
      if (!(*v)[i].is_number()) {
        throw ValidationError("config: '" + where(key) + "' must be an array of 3 numbers");
      }
      out[i] = (*v)[i].get<double>();
    }
    return out;
  }

  // Child object (empty object when the key is absent).
  nlohmann::json object(const std::string& key) {
    const nlohmann::json* v = consume(key);
    if (v == nullptr) return nlohmann::json::object();
    if (!v->is_object()) throw ValidationError("config: '" + where(key) + "' must be an object");
    return *v;
  }

  void finish() {
    for (const auto& item : j_.items()) {
      if (used_.find(item.key()) == used_.end()) {
        throw ValidationError("config: unknown key '" + where(item.key()) + "'");
      }
    }
  }

 private:
  const nlohmann::json* consume(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  nlohmann::json j_;
  std::string path_;
  std::set<std::string> used_;
};

DatasetManifest manifest_from(const nlohmann::json& j, const std::string& path) {
  Reader r(j, path);
  DatasetManifest m;
  m.name = r.str("name", m.name);
  m.root = r.str("root", m.root);
  m.image_count = r.integer("image_count", m.image_count);
  m.class_count = r.integer("class_count", m.class_count);
  m.split_fractions = r.fractions("split_fractions", m.split_fractions);
  r.finish();
  if (m.image_count < 0) {
    throw ValidationError("config: '" + path + ".image_count' must be >= 0");
  }
  if (m.class_count < 0) {
    throw ValidationError("config: '" + path + ".class_count' must be >= 0");
  }
  double sum = 0.0;
  for (double f : m.split_fractions) {
    if (!(f > 0.0 && f < 1.0)) {
      throw ValidationError("config: '" + path + ".split_fractions' entries must lie in (0, 1)");
    }
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw ValidationError("config: '" + path + ".split_fractions' must sum to 1");
  }
  return m;
}

nlohmann::json manifest_to(const DatasetManifest& m) {
  return {{"name", m.name},
          {"root", m.root},
          {"image_count", m.image_count},
          {"class_count", m.class_count},
          {"split_fractions", m.split_fractions}};
}

MaskSpec mask_from(const nlohmann::json& j, const std::string& path) {
  Reader r(j, path);
  MaskSpec spec;
  spec.style = mask_style_from_name(r.str("style", mask_style_name(spec.style)));
  spec.ratio_low = r.number("ratio_low", spec.ratio_low);
  spec.ratio_high = r.number("ratio_high", spec.ratio_high);
  spec.patch_size = r.integer("patch_size", spec.patch_size);
  spec.fill_value = r.number("fill_value", spec.fill_value);
  r.finish();
  if (!(spec.ratio_low >= 0.0 && spec.ratio_low <= spec.ratio_high && spec.ratio_high <= 1.0)) {
    throw ValidationError("config: '" + path + "' needs 0 <= ratio_low <= ratio_high <= 1");
  }
  if (spec.patch_size < 1) {
    throw ValidationError("config: '" + path + ".patch_size' must be >= 1");
  }
  if (!(spec.fill_value >= 0.0 && spec.fill_value <= 1.0)) {
    throw ValidationError("config: '" + path + ".fill_value' must lie in [0, 1]");
  }
  return spec;
}

nlohmann::json mask_to(const MaskSpec& spec) {
  return {{"style", mask_style_name(spec.style)},
          {"ratio_low", spec.ratio_low},
          {"ratio_high", spec.ratio_high},
          {"patch_size", spec.patch_size},
          {"fill_value", spec.fill_value}};
}

TrainConfig train_from(const nlohmann::json& j, const std::string& path) {
  Reader r(j, path);
  TrainConfig t;
  t.learning_rate = r.number("learning_rate", t.learning_rate);
  t.adam_beta1 = r.number("adam_beta1", t.adam_beta1);
  t.adam_beta2 = r.number("adam_beta2", t.adam_beta2);
  t.batch_size = r.integer("batch_size", t.batch_size);
  t.steps = r.integer("steps", t.steps);
  t.kld_weight = r.number("kld_weight", t.kld_weight);
  t.checkpoint_every = r.integer("checkpoint_every", t.checkpoint_every);
  t.augment = r.boolean("augment", t.augment);
  r.finish();
  if (t.learning_rate < 0.0) {
    throw ValidationError("config: '" + path + ".learning_rate' must be >= 0");
  }
  if (!(t.adam_beta1 >= 0.0 && t.adam_beta1 < 1.0 && t.adam_beta2 >= 0.0 && t.adam_beta2 < 1.0)) {
    throw ValidationError("config: '" + path + "' Adam betas must lie in [0, 1)");
  }
  if (t.batch_size < 1) throw ValidationError("config: '" + path + ".batch_size' must be >= 1");
  if (t.steps < 0) throw ValidationError("config: '" + path + ".steps' must be >= 0");
  if (t.kld_weight < 0.0) {
    throw ValidationError("config: '" + path + ".kld_weight' must be >= 0");
  }
  if (t.checkpoint_every < 0) {
    throw ValidationError("config: '" + path + ".checkpoint_every' must be >= 0");
  }
  return t;
}

nlohmann::json train_to(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate},
          {"adam_beta1", t.adam_beta1},
          {"adam_beta2", t.adam_beta2},
          {"batch_size", t.batch_size},
          {"steps", t.steps},
          {"kld_weight", t.kld_weight},
          {"checkpoint_every", t.checkpoint_every},
          {"augment", t.augment}};
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
  Reader top(j, "");
  ExperimentConfig c;
  c.seed = top.uinteger("seed", c.seed);
  c.unconditioned = top.boolean("unconditioned", c.unconditioned);

  nlohmann::json data = top.object("data");
  {
    Reader r(data, "data");
    c.in_d = manifest_from(r.object("in_d"), "data.in_d");
    c.ood = manifest_from(r.object("ood"), "data.ood");
    c.external = manifest_from(r.object("external"), "data.external");
    r.finish();
  }

  {
    Reader r(top.object("generator"), "generator");
    c.generator.latent_dim = r.integer("latent_dim", c.generator.latent_dim);
    c.generator.channel_mult = r.integer("channel_mult", c.generator.channel_mult);
    c.generator.encoder_conditioned =
        r.boolean("encoder_conditioned", c.generator.encoder_conditioned);
    c.generator.label_embed_dim = r.integer("label_embed_dim", c.generator.label_embed_dim);
    r.finish();
    if (c.generator.latent_dim < 1 || c.generator.channel_mult < 1 ||
        c.generator.label_embed_dim < 1) {
      throw ValidationError("config: generator sizes must be positive");
    }
  }
  {
    Reader r(top.object("discriminator"), "discriminator");
    c.discriminator.channels = r.integer("channels", c.discriminator.channels);
    r.finish();
    if (c.discriminator.channels < 1) {
      throw ValidationError("config: 'discriminator.channels' must be positive");
    }
  }
  {
    Reader r(top.object("classifier"), "classifier");
    c.classifier.channels = r.integer("channels", c.classifier.channels);
    r.finish();
    if (c.classifier.channels < 1) {
      throw ValidationError("config: 'classifier.channels' must be positive");
    }
  }
  {
    Reader r(top.object("cb"), "cb");
    c.cb.channels = r.integer("channels", c.cb.channels);
    r.finish();
    if (c.cb.channels < 1) throw ValidationError("config: 'cb.channels' must be positive");
  }

  c.mask = mask_from(top.object("mask"), "mask");

  c.train_generator = train_from(top.object("train_generator"), "train_generator");
  c.train_classifier = train_from(top.object("train_classifier"), "train_classifier");
  c.train_cb = train_from(top.object("train_cb"), "train_cb");

  {
    Reader r(top.object("cascade"), "cascade");
    c.cascade.scorers = r.string_list("scorers", c.cascade.scorers);
    c.cascade.target_tpr = r.number("target_tpr", c.cascade.target_tpr);
    c.cascade.joint_calibration = r.boolean("joint_calibration", c.cascade.joint_calibration);
    r.finish();
    if (c.cascade.scorers.empty()) {
      throw ValidationError("config: 'cascade.scorers' must not be empty");
    }
    for (const std::string& s : c.cascade.scorers) {
      if (s != kScorerCb && s != kScorerSsim && s != kScorerFeature) {
        throw ValidationError("config: unknown scorer '" + s + "' in 'cascade.scorers'");
      }
    }
    if (!(c.cascade.target_tpr > 0.0 && c.cascade.target_tpr < 1.0)) {
      throw ValidationError("config: 'cascade.target_tpr' must lie in (0, 1)");
    }
  }
  top.finish();

  // Derived wiring: class counts come from the In-D manifest, the shared seed
  // and mask flow into every training section.
  const int classes = c.in_d.class_count > 0 ? c.in_d.class_count : 2;
  c.generator.class_count = classes;
  c.discriminator.class_count = classes;
  c.classifier.class_count = classes;
  c.cb.class_count = classes;
  for (TrainConfig* t : {&c.train_generator, &c.train_classifier, &c.train_cb}) {
    t->seed = c.seed;
    t->mask_spec = c.mask;
    t->unconditioned = c.unconditioned;
  }
  return c;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["unconditioned"] = c.unconditioned;
  j["data"] = {{"in_d", manifest_to(c.in_d)},
               {"ood", manifest_to(c.ood)},
               {"external", manifest_to(c.external)}};
  j["generator"] = {{"latent_dim", c.generator.latent_dim},
                    {"channel_mult", c.generator.channel_mult},
                    {"encoder_conditioned", c.generator.encoder_conditioned},
                    {"label_embed_dim", c.generator.label_embed_dim}};
  j["discriminator"] = {{"channels", c.discriminator.channels}};
  j["classifier"] = {{"channels", c.classifier.channels}};
  j["cb"] = {{"channels", c.cb.channels}};
  j["mask"] = mask_to(c.mask);
  j["train_generator"] = train_to(c.train_generator);
  j["train_classifier"] = train_to(c.train_classifier);
  j["train_cb"] = train_to(c.train_cb);
  j["cascade"] = {{"scorers", c.cascade.scorers},
                  {"target_tpr", c.cascade.target_tpr},
                  {"joint_calibration", c.cascade.joint_calibration}};
  return j;
}

ExperimentConfig with_seed(ExperimentConfig config, std::uint64_t seed) {
  config.seed = seed;
  for (TrainConfig* t :
       {&config.train_generator, &config.train_classifier, &config.train_cb}) {
    t->seed = seed;
    t->mask_spec = config.mask;
    t->unconditioned = config.unconditioned;
  }
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config '" + path + "' is not valid JSON: " + std::string(e.what()));
  }
  return config_from_json(j);
}

void save_config(const std::string& path, const ExperimentConfig& config) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write config '" + path + "'");
  out << config_to_json(config).dump(2) << '\n';
  if (!out) throw IoError("failed while writing config '" + path + "'");
}

}  // namespace synood

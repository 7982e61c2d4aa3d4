#include "patchpref/config.hpp"

#include <functional>
#include <sstream>

#include "patchpref/corpus_io.hpp"

namespace patchpref {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long n = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    n = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(n);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return d;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError(key + ": expected 0/1, got '" + v + "'");
}

struct Key {
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string& key, const std::string&)> set;
};

#define SIZE_KEY(name, field)                                                              \
  {name,                                                                                   \
   {[](const PipelineConfig& c) { return std::to_string(c.field); },                       \
    [](PipelineConfig& c, const std::string& k, const std::string& v) { c.field = to_size(k, v); }}}
#define REAL_KEY(name, field)                                                              \
  {name,                                                                                   \
   {[](const PipelineConfig& c) { return fmt(c.field); },                                  \
    [](PipelineConfig& c, const std::string& k, const std::string& v) { c.field = to_double(k, v); }}}
#define BOOL_KEY(name, field)                                                              \
  {name,                                                                                   \
   {[](const PipelineConfig& c) { return std::string(c.field ? "1" : "0"); },              \
    [](PipelineConfig& c, const std::string& k, const std::string& v) { c.field = to_bool(k, v); }}}

const std::vector<std::pair<std::string, Key>>& keys() {
  static const std::vector<std::pair<std::string, Key>> table = {
      {"seed",
       {[](const PipelineConfig& c) { return std::to_string(c.seed); },
        [](PipelineConfig& c, const std::string& k, const std::string& v) { c.seed = to_size(k, v); }}},
      {"out_dir",
       {[](const PipelineConfig& c) { return c.out_dir; },
        [](PipelineConfig& c, const std::string&, const std::string& v) { c.out_dir = v; }}},
      SIZE_KEY("image_size", geometry.image_size),
      SIZE_KEY("patch_size", geometry.patch_size),
      REAL_KEY("corruption_rate", corruption_rate),
      SIZE_KEY("ssl_images", ssl_images),
      SIZE_KEY("train_pairs", train_pairs),
      SIZE_KEY("heldout_pairs", heldout_pairs),
      SIZE_KEY("quality_pairs", quality_pairs),
      SIZE_KEY("groups", groups),
      SIZE_KEY("images_per_group", images_per_group),
      SIZE_KEY("encoder_layers", encoder.layers),
      SIZE_KEY("encoder_channels", encoder.channels),
      SIZE_KEY("encoder_kernel", encoder.kernel),
      {"encoder_nonlinearity",
       {[](const PipelineConfig& c) {
          return std::string(c.encoder.nonlinearity == Nonlinearity::kRelu ? "relu" : "tanh");
        },
        [](PipelineConfig& c, const std::string& k, const std::string& v) {
          if (v == "relu") c.encoder.nonlinearity = Nonlinearity::kRelu;
          else if (v == "tanh") c.encoder.nonlinearity = Nonlinearity::kTanh;
          else throw ConfigError(k + ": expected relu or tanh, got '" + v + "'");
        }}},
      BOOL_KEY("encoder_residual", encoder.residual),
      SIZE_KEY("pretrain_templates", pretrain.templates),
      SIZE_KEY("pretrain_steps", pretrain.max_steps),
      SIZE_KEY("pretrain_batch", pretrain.batch),
      REAL_KEY("pretrain_lr", pretrain.learning_rate),
      REAL_KEY("pretrain_accuracy", pretrain.target_accuracy),
      SIZE_KEY("ssl_epochs", ssl_epochs),
      REAL_KEY("ssl_lr", ssl_lr),
      {"layer",
       {[](const PipelineConfig& c) { return c.layer == 0 ? std::string("auto") : std::to_string(c.layer); },
        [](PipelineConfig& c, const std::string& k, const std::string& v) {
          c.layer = v == "auto" ? 0 : to_size(k, v);
        }}},
      {"weight_norm",
       {[](const PipelineConfig& c) { return weight_norm_name(c.weight_norm); },
        [](PipelineConfig& c, const std::string&, const std::string& v) { c.weight_norm = parse_weight_norm(v); }}},
      REAL_KEY("background_quality", background_quality),
      {"objectives",
       {[](const PipelineConfig& c) {
          std::string out;
          for (std::size_t i = 0; i < c.objectives.size(); ++i) out += (i ? "," : "") + objective_name(c.objectives[i]);
          return out;
        },
        [](PipelineConfig& c, const std::string& k, const std::string& v) {
          c.objectives.clear();
          std::istringstream in(v);
          std::string item;
          while (std::getline(in, item, ',')) {
            item = trim(item);
            if (!item.empty()) c.objectives.push_back(parse_objective(item));
          }
          if (c.objectives.empty()) throw ConfigError(k + ": needs at least one objective");
        }}},
      SIZE_KEY("denoiser_hidden", denoiser.hidden),
      SIZE_KEY("denoiser_layers", denoiser.layers),
      BOOL_KEY("denoiser_reference_pixels", denoiser.reference_pixels),
      SIZE_KEY("diffusion_T", diffusion_T),
      SIZE_KEY("train_steps", train.steps),
      SIZE_KEY("train_batch", train.batch),
      REAL_KEY("train_lr", train.learning_rate),
      BOOL_KEY("train_lr_decay", train.lr_decay),
      REAL_KEY("dpo_beta", train.dpo_beta),
      REAL_KEY("ref_coeff", train.ref_coeff),
      SIZE_KEY("eval_draws", eval_draws),
      SIZE_KEY("heatmap_samples", heatmap_samples),
  };
  return table;
}

#undef SIZE_KEY
#undef REAL_KEY
#undef BOOL_KEY

void validate(const PipelineConfig& c) {
  c.geometry.validate();
  if (c.corruption_rate < 0.0 || c.corruption_rate > 1.0) throw ConfigError("corruption_rate must lie in [0,1]");
  if (c.encoder.image_size != c.geometry.image_size || c.encoder.patch_size != c.geometry.patch_size) {
    throw ConfigError("encoder geometry must match the corpus geometry");
  }
  c.encoder.validate();
  if (c.layer > c.encoder.layers) {
    throw ConfigError("layer " + std::to_string(c.layer) + " exceeds encoder_layers " + std::to_string(c.encoder.layers));
  }
  if (c.images_per_group < 2) throw ConfigError("images_per_group must be at least 2");
  for (auto n : {c.ssl_images, c.train_pairs, c.heldout_pairs, c.quality_pairs, c.groups}) {
    if (n == 0) throw ConfigError("corpus sizes must be positive");
  }
  if (c.diffusion_T < 2) throw ConfigError("diffusion_T must be at least 2");
  if (c.train.batch == 0) throw ConfigError("train_batch must be positive");
  if (c.denoiser.feature_channels != c.encoder.channels) throw ConfigError("denoiser feature channels mismatch");
  c.denoiser.validate();
}

}  // namespace

std::string PipelineConfig::to_text() const {
  std::string out;
  for (const auto& [name, key] : keys()) out += name + " = " + key.get(*this) + "\n";
  return out;
}

PipelineConfig default_config() { return PipelineConfig{}; }

PipelineConfig parse_config(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    bool found = false;
    for (const auto& [name, k] : keys()) {
      if (name == key) {
        k.set(cfg, key, value);
        found = true;
        break;
      }
    }
    if (!found) throw UnknownKeyError(key);
  }
  cfg.encoder.image_size = cfg.geometry.image_size;
  cfg.encoder.patch_size = cfg.geometry.patch_size;
  cfg.denoiser.feature_channels = cfg.encoder.channels;
  validate(cfg);
  return cfg;
}

PipelineConfig load_config(const std::string& path) { return parse_config(read_text(path)); }

}  // namespace patchpref

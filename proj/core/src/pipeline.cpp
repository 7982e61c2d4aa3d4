#include "patchpref/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include "patchpref/checkpoint.hpp"
#include "patchpref/corpus_io.hpp"
#include "patchpref/diffusion.hpp"
#include "patchpref/encoder.hpp"
#include "patchpref/manifest.hpp"
#include "patchpref/patch_match.hpp"
#include "patchpref/pgm.hpp"
#include "patchpref/quality.hpp"
#include "patchpref/tensor_io.hpp"

namespace fs = std::filesystem;

namespace patchpref {
namespace {

// Seed stream tags, one per independent source of randomness.
enum : std::uint64_t {
  kSslCorpus = 101,
  kTrainCorpus,
  kHeldoutCorpus,
  kQualityCorpus,
  kGroups,
  kPretrain,
  kSslTrain,
  kDenoiserInit,
  kEval,
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct Context {
  PipelineConfig cfg;
  fs::path root;
  RunManifest manifest;
  bool force = false;
  std::ostream& log;
};

void require(const std::string& stage, const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifactError(stage, path);
}

PairCorpusConfig pair_config(const PipelineConfig& c) { return {c.geometry, c.corruption_rate}; }

Encoder load_encoder(const PipelineConfig& c, const fs::path& dir) {
  Encoder e(c.encoder, 0);
  restore_params(load_checkpoint(dir), e.param_names(), e.params());
  return e;
}

std::size_t read_selected_layer(const fs::path& root) {
  return static_cast<std::size_t>(std::stoul(read_text(root / "selected_layer.txt")));
}

// --- stages -----------------------------------------------------------------

std::vector<fs::path> stage_gen_data(Context& ctx) {
  const auto& c = ctx.cfg;
  const fs::path data = ctx.root / "data";
  std::error_code ec;
  fs::remove_all(data, ec);
  std::vector<fs::path> files;
  const auto pc = pair_config(c);
  for (std::size_t i = 0; i < c.ssl_images; ++i) {
    files.push_back(data / "ssl" / (std::to_string(i) + ".tnsr"));
    write_tensor(make_pair(derive_seed(c.seed, kSslCorpus), i, pc).reference, files.back());
  }
  auto add = [&files](std::vector<fs::path> more) { files.insert(files.end(), more.begin(), more.end()); };
  add(write_pair_corpus(build_pair_corpus(c.train_pairs, pc, derive_seed(c.seed, kTrainCorpus)), data / "train"));
  add(write_pair_corpus(build_pair_corpus(c.heldout_pairs, pc, derive_seed(c.seed, kHeldoutCorpus)), data / "heldout"));
  add(write_pair_corpus(build_pair_corpus(c.quality_pairs, pc, derive_seed(c.seed, kQualityCorpus)), data / "quality"));
  add(write_correspondence_corpus(
      build_correspondence_corpus(c.groups, c.images_per_group, derive_seed(c.seed, kGroups), c.geometry),
      data / "correspondence"));
  ctx.log << "  " << c.ssl_images << " SSL images, " << c.train_pairs << "/" << c.heldout_pairs << "/"
          << c.quality_pairs << " train/held-out/quality pairs, " << c.groups << " correspondence groups\n";
  return files;
}

std::vector<fs::path> stage_train_ssl(Context& ctx) {
  const auto& c = ctx.cfg;
  std::vector<Tensor> images;
  for (std::size_t i = 0; i < c.ssl_images; ++i) {
    const fs::path p = ctx.root / "data" / "ssl" / (std::to_string(i) + ".tnsr");
    require("train-ssl", p);
    images.push_back(read_tensor(p));
  }
  const auto pre = pretrain_encoder(images, c.encoder, c.pretrain, derive_seed(c.seed, kPretrain));
  ctx.log << "  pre-training reached proxy accuracy " << num(pre.accuracy) << " at step " << pre.steps << "\n";
  SslState state = SslState::from_pretrained(pre.encoder);
  const auto log = train_ssl(state, images, c.ssl_epochs, c.ssl_lr, derive_seed(c.seed, kSslTrain));

  std::vector<fs::path> files;
  auto add = [&files](std::vector<fs::path> more) { files.insert(files.end(), more.begin(), more.end()); };
  add(save_checkpoint(ctx.root / "encoder" / "pretrained",
                      make_entries(pre.encoder.param_names(), pre.encoder.params())));
  add(save_checkpoint(ctx.root / "encoder" / "trained",
                      make_entries(state.model.param_names(), state.model.params())));
  std::string csv = "epoch,l_aug,l_reg,l_self\n";
  for (const auto& e : log) {
    csv += std::to_string(e.epoch) + "," + num(e.l_aug) + "," + num(e.l_reg) + "," + num(e.l_self) + "\n";
  }
  files.push_back(ctx.root / "ssl_log.csv");
  write_text(files.back(), csv);
  ctx.log << "  SSL mean L_aug " << num(log.front().l_aug) << " -> " << num(log.back().l_aug) << "\n";
  return files;
}

std::vector<fs::path> stage_eval_spatch(Context& ctx) {
  const auto& c = ctx.cfg;
  const fs::path corpus_dir = ctx.root / "data" / "correspondence";
  require("eval-spatch", corpus_dir / "groups");
  require("eval-spatch", ctx.root / "encoder" / "pretrained" / "manifest.txt");
  require("eval-spatch", ctx.root / "encoder" / "trained" / "manifest.txt");
  const auto corpus = read_correspondence_corpus(corpus_dir, c.geometry.grid());
  const auto before = s_patch_per_layer(load_encoder(c, ctx.root / "encoder" / "pretrained"), corpus);
  const auto after = s_patch_per_layer(load_encoder(c, ctx.root / "encoder" / "trained"), corpus);
  const std::size_t layer = c.layer ? c.layer : select_layer(after) + 1;
  std::string csv = "layer,pretrained,trained\n";
  for (std::size_t l = 0; l < before.size(); ++l) {
    csv += std::to_string(l + 1) + "," + num(before[l]) + "," + num(after[l]) + "\n";
    ctx.log << "  layer " << l + 1 << ": S_patch " << num(before[l]) << " -> " << num(after[l]) << "\n";
  }
  ctx.log << "  selected layer " << layer << (c.layer ? " (override)" : "") << "\n";
  std::vector<fs::path> files{ctx.root / "spatch.csv", ctx.root / "selected_layer.txt"};
  write_text(files[0], csv);
  write_text(files[1], std::to_string(layer) + "\n");
  return files;
}

std::vector<fs::path> stage_estimate_quality(Context& ctx) {
  const auto& c = ctx.cfg;
  require("estimate-quality", ctx.root / "encoder" / "trained" / "manifest.txt");
  require("estimate-quality", ctx.root / "selected_layer.txt");
  for (const char* split : {"train", "quality"}) require("estimate-quality", ctx.root / "data" / split / "pairs");
  const Encoder enc = load_encoder(c, ctx.root / "encoder" / "trained");
  const std::size_t layer = read_selected_layer(ctx.root) - 1;
  const std::size_t s = c.geometry.image_size;
  const WeightPolicy policy{c.weight_norm, c.background_quality};

  std::vector<fs::path> files;
  std::string csv = "split,pairs,auc,clean_mean,corrupt_mean\n";
  const fs::path heat = ctx.root / "heatmaps";
  std::error_code ec;
  fs::remove_all(heat, ec);
  for (const std::string split : {"train", "quality"}) {
    const auto pairs = read_pair_corpus(ctx.root / "data" / split);
    QualityScores scores;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto q = estimate_quality(enc, layer, pairs[i]);
      collect_quality_scores(pairs[i], q, scores);
      if (split != "train") continue;
      const TrainItem item = make_train_item(pairs[i], q, policy, c.denoiser.cond_dim);
      const fs::path d = ctx.root / "quality" / "train" / std::to_string(i);
      for (const auto& [name, t] : {std::pair<const char*, const Tensor*>{"p_gen", &q.gen.raw},
                                    {"p_ref", &q.ref.raw},
                                    {"w_gen", &item.weight_gen},
                                    {"w_ref", &item.weight_ref}}) {
        files.push_back(d / (std::string(name) + ".tnsr"));
        write_tensor(*t, files.back());
      }
      if (i >= c.heatmap_samples) continue;
      const std::string stem = std::to_string(i) + "_";
      files.push_back(heat / (stem + "quality_gen.pgm"));
      write_pgm(upsample_nearest(normalize_quality(q.gen.raw, WeightNorm::kAffine), s, s), files.back());
      files.push_back(heat / (stem + "weight_gen.pgm"));
      write_pgm(item.weight_gen, files.back());
      files.push_back(heat / (stem + "weight_ref.pgm"));
      write_pgm(item.weight_ref, files.back());
      // matching heatmap of the weakest object patch of the generated image
      std::size_t worst = 0;
      bool found = false;
      for (std::size_t k = 0; k < q.gen.raw.size(); ++k) {
        if (q.object_cells[k] <= 0.5) continue;
        if (!found || q.gen.raw[k] < q.gen.raw[worst]) worst = k;
        found = true;
      }
      const std::size_t g = c.geometry.grid();
      const Tensor z = heatmap(q.gen_features, worst / g, worst % g, q.ref_features);
      files.push_back(heat / (stem + "match_" + std::to_string(worst / g) + "_" + std::to_string(worst % g) + ".pgm"));
      write_pgm(upsample_nearest(cosine_to_unit(z), s, s), files.back());
    }
    double clean = 0.0, corrupt = 0.0;
    for (double v : scores.clean) clean += v;
    for (double v : scores.corrupt) corrupt += v;
    const bool both = !scores.clean.empty() && !scores.corrupt.empty();
    const std::string auc = both ? num(pairwise_auc(scores.clean, scores.corrupt)) : "MISSING";
    csv += split + "," + std::to_string(pairs.size()) + "," + auc + "," +
           (scores.clean.empty() ? "MISSING" : num(clean / static_cast<double>(scores.clean.size()))) + "," +
           (scores.corrupt.empty() ? "MISSING" : num(corrupt / static_cast<double>(scores.corrupt.size()))) + "\n";
    ctx.log << "  " << split << ": corrupted-vs-clean AUC " << auc << "\n";
  }
  files.push_back(ctx.root / "quality.csv");
  write_text(files.back(), csv);
  return files;
}

// Training items from stored pairs; weight maps come from the quality stage when `weights` is set.
std::vector<TrainItem> load_items(const Context& ctx, const std::string& split, bool weights) {
  const auto& c = ctx.cfg;
  const Encoder enc = load_encoder(c, ctx.root / "encoder" / "trained");
  const std::size_t layer = read_selected_layer(ctx.root) - 1;
  const std::size_t s = c.geometry.image_size;
  const auto pairs = read_pair_corpus(ctx.root / "data" / split);
  std::vector<TrainItem> items;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    TrainItem it;
    it.reference = p.reference;
    it.generated = p.generated;
    it.object_mask = p.object_mask;
    it.corruption_mask = p.corruption_mask;
    it.cond.reference = p.reference;
    it.cond.features = upsample_nearest(enc.encode(p.reference)[layer], s, s);
    it.cond.embedding = descriptor_embedding(p.descriptor, c.denoiser.cond_dim);
    if (weights) {
      const fs::path d = ctx.root / "quality" / split / std::to_string(i);
      require("train-dpo", d / "w_gen.tnsr");
      it.weight_gen = read_tensor(d / "w_gen.tnsr");
      it.weight_ref = read_tensor(d / "w_ref.tnsr");
    }
    items.push_back(std::move(it));
  }
  return items;
}

std::vector<fs::path> stage_train_dpo(Context& ctx) {
  const auto& c = ctx.cfg;
  require("train-dpo", ctx.root / "encoder" / "trained" / "manifest.txt");
  require("train-dpo", ctx.root / "selected_layer.txt");
  require("train-dpo", ctx.root / "data" / "train" / "pairs");
  require("train-dpo", ctx.root / "quality" / "train");
  const auto items = load_items(ctx, "train", true);
  const auto sched = make_schedule(c.diffusion_T);
  TrainConfig tc = c.train;
  tc.seed = c.seed;
  std::vector<fs::path> files;
  std::string csv = "step,objective,loss\n";
  for (auto obj : c.objectives) {
    ConvDenoiser model(c.denoiser, derive_seed(c.seed, kDenoiserInit));
    const auto start = std::chrono::steady_clock::now();
    const auto trace = train_denoiser(model, items, obj, sched, tc);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (const auto& r : trace) csv += std::to_string(r.step) + "," + objective_name(obj) + "," + num(r.loss) + "\n";
    const auto more = save_checkpoint(ctx.root / "denoiser" / objective_name(obj),
                                      make_entries(model.param_names(), model.params()));
    files.insert(files.end(), more.begin(), more.end());
    ctx.log << "  " << objective_name(obj) << ": " << trace.size() << " steps, final loss "
            << num(trace.empty() ? 0.0 : trace.back().loss) << " (" << num(secs) << " s)\n";
  }
  files.push_back(ctx.root / "loss_trace.csv");
  write_text(files.back(), csv);
  return files;
}

std::vector<fs::path> stage_evaluate(Context& ctx) {
  const auto& c = ctx.cfg;
  require("evaluate", ctx.root / "encoder" / "trained" / "manifest.txt");
  require("evaluate", ctx.root / "selected_layer.txt");
  require("evaluate", ctx.root / "data" / "heldout" / "pairs");
  for (auto obj : c.objectives) require("evaluate", ctx.root / "denoiser" / objective_name(obj) / "manifest.txt");
  const auto items = load_items(ctx, "heldout", false);
  const auto sched = make_schedule(c.diffusion_T);
  std::string csv = "objective,clean_err,corrupt_err,seed\n";
  for (auto obj : c.objectives) {
    ConvDenoiser model(c.denoiser, 0);
    restore_params(load_checkpoint(ctx.root / "denoiser" / objective_name(obj)), model.param_names(), model.params());
    const auto err = eval_region_error(model, items, sched, derive_seed(c.seed, kEval), c.eval_draws);
    csv += objective_name(obj) + "," + num(err.clean) + "," + num(err.corrupt) + "," + std::to_string(c.seed) + "\n";
  }
  std::vector<fs::path> files{ctx.root / "eval.csv", ctx.root / "report.csv"};
  write_text(files[0], csv);
  const std::string report = build_report(ctx.root);
  ctx.log << report;
  return files;
}

using StageFn = std::function<std::vector<fs::path>(Context&)>;

const std::vector<std::pair<std::string, StageFn>>& stage_table() {
  static const std::vector<std::pair<std::string, StageFn>> table{
      {"gen-data", stage_gen_data},         {"train-ssl", stage_train_ssl},
      {"eval-spatch", stage_eval_spatch},   {"estimate-quality", stage_estimate_quality},
      {"train-dpo", stage_train_dpo},       {"evaluate", stage_evaluate},
  };
  return table;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string cell;
  while (std::getline(in, cell, ',')) out.push_back(cell);
  return out;
}

// Data rows of a CSV file (header dropped); empty when the file is absent.
std::vector<std::vector<std::string>> csv_rows(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  if (!fs::exists(path)) return rows;
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(split_csv_line(line));
  return rows;
}

}  // namespace

PipelineConfig resolve_config(const RunOptions& opts) {
  PipelineConfig cfg = opts.config_path.empty() ? default_config() : load_config(opts.config_path);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.out_dir) cfg.out_dir = *opts.out_dir;
  return cfg;
}

std::string build_report(const fs::path& root) {
  const std::string missing = "MISSING";
  std::vector<std::string> objectives;
  const auto cfg_path = root / "config.resolved.txt";
  if (fs::exists(cfg_path)) {
    for (auto o : parse_config(read_text(cfg_path)).objectives) objectives.push_back(objective_name(o));
  } else {
    for (auto o : default_config().objectives) objectives.push_back(objective_name(o));
  }
  std::string out = "section,name,value_a,value_b\n";
  const auto eval = csv_rows(root / "eval.csv");
  for (const auto& name : objectives) {
    std::string clean = missing, corrupt = missing;
    for (const auto& r : eval) {
      if (r.size() >= 3 && r[0] == name) {
        clean = r[1];
        corrupt = r[2];
      }
    }
    out += "objective," + name + "," + clean + "," + corrupt + "\n";
  }
  const auto spatch = csv_rows(root / "spatch.csv");
  if (spatch.empty()) out += "s_patch," + missing + "," + missing + "," + missing + "\n";
  for (const auto& r : spatch) {
    out += "s_patch,layer" + (r.empty() ? missing : r[0]) + "," + (r.size() > 1 ? r[1] : missing) + "," +
           (r.size() > 2 ? r[2] : missing) + "\n";
  }
  std::string layer = missing;
  if (fs::exists(root / "selected_layer.txt")) {
    layer = read_text(root / "selected_layer.txt");
    layer.erase(std::remove(layer.begin(), layer.end(), '\n'), layer.end());
  }
  out += "selected_layer," + layer + ",,\n";
  write_text(root / "report.csv", out);
  return out;
}

void run_stages(const RunOptions& opts, std::ostream& log) {
  const PipelineConfig cfg = resolve_config(opts);
  const fs::path root(cfg.out_dir);
  std::vector<std::string> selected;
  if (opts.subcommand == "all") {
    selected = stage_names();
  } else if (std::find(stage_names().begin(), stage_names().end(), opts.subcommand) != stage_names().end()) {
    selected = {opts.subcommand};
  } else if (opts.subcommand == "report") {
    log << build_report(root);
    return;
  } else {
    throw ConfigError("unknown subcommand '" + opts.subcommand + "'");
  }

  DirectoryLock lock(root);
  // the resolved config is echoed before any stage runs
  write_text(root / "config.resolved.txt", cfg.to_text());
  PipelineConfig hashed = cfg;
  hashed.out_dir.clear();
  const std::string cfg_text = hashed.to_text();

  Context ctx{cfg, root, RunManifest::load(root), opts.force, log};
  for (const auto& [name, fn] : stage_table()) {
    if (std::find(selected.begin(), selected.end(), name) == selected.end()) continue;
    std::uint64_t input = fnv1a64(name + "\n" + cfg_text);
    for (const auto& [upstream, unused] : stage_table()) {
      if (upstream == name) break;
      input = fnv1a64(hex64(ctx.manifest.output_digest(upstream)), input);
    }
    if (!opts.force && ctx.manifest.is_fresh(name, input, root)) {
      log << "[" << name << "] up to date, skipped\n";
      continue;
    }
    log << "[" << name << "] running\n";
    const auto start = std::chrono::steady_clock::now();
    std::vector<fs::path> outputs;
    try {
      outputs = fn(ctx);
    } catch (const MissingArtifactError&) {
      throw;
    } catch (const std::exception& e) {
      ctx.manifest.erase(name);
      ctx.manifest.save(root);
      throw Error("stage " + name + " failed: " + e.what());
    }
    StageRecord rec;
    rec.input_hash = input;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (const auto& p : outputs) rec.outputs.emplace_back(fs::relative(p, root).generic_string(), hash_file(p));
    ctx.manifest.set(name, std::move(rec));
    ctx.manifest.save(root);
    log << "[" << name << "] done in " << num(ctx.manifest.find(name)->seconds) << " s\n";
  }
}

int run_command(const RunOptions& opts, std::ostream& log, std::ostream& err) {
  try {
    run_stages(opts, log);
    return 0;
  } catch (const UnknownKeyError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const MissingArtifactError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace patchpref

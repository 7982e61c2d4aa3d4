// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "grad_cases.hpp"
#include "match_cases.hpp"
#include "patchpref/checkpoint.hpp"
#include "patchpref/config.hpp"
#include "patchpref/corpus_io.hpp"
#include "patchpref/diffusion.hpp"
#include "patchpref/encoder.hpp"
#include "patchpref/manifest.hpp"
#include "patchpref/patch_match.hpp"
#include "patchpref/pipeline.hpp"
#include "patchpref/quality.hpp"
#include "patchpref/tensor_io.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace patchpref;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Harness {
  std::string cli;
  fs::path work;
  std::vector<std::uint64_t> seeds{0, 1, 2};

  fs::path run_dir(std::uint64_t seed) const { return work / ("seed" + std::to_string(seed)); }

  int invoke(const std::string& args, const fs::path& log) const {
    const std::string cmd = cli + " " + args + " >" + log.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  }
};

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

double stage_seconds(const fs::path& root, const std::vector<std::string>& stages) {
  const auto m = RunManifest::load(root);
  double total = 0.0;
  for (const auto& s : stages)
    if (const auto* r = m.find(s)) total += r->seconds;
  return total;
}

// 1 -------------------------------------------------------------------------
Outcome gradients() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t checked = 0, kinked = 0;
  auto cases = test_support::primitive_gradient_errors(101);
  for (auto& c : test_support::loss_gradient_errors(102)) cases.push_back(c);
  for (const auto& c : cases) {
    checked += c.result.checked;
    kinked += c.result.kinked;
    if (c.result.rel_error >= worst) {
      worst = c.result.rel_error;
      worst_name = c.name;
    }
  }
  const double secs = since(t0);
  return {worst < 1e-4 && 20 * kinked <= checked && secs < 30.0,
          std::to_string(cases.size()) + " cases, worst rel err " + fmt("%.2e", worst) + " (" + worst_name +
              "), " + std::to_string(kinked) + " of " + std::to_string(checked + kinked) +
              " coordinates skipped at relu kinks, " + fmt("%.1f", secs) + " s"};
}

// 2 -------------------------------------------------------------------------
Outcome matcher_oracle() {
  const auto t0 = Clock::now();
  const auto cmp = test_support::compare_matchers(256, 202);
  const double secs = since(t0);
  return {cmp.max_value_diff <= 1e-9 && cmp.argmax_mismatches == 0 && cmp.trials >= 200 && secs < 30.0,
          std::to_string(cmp.trials) + " pairs, max diff " + fmt("%.2e", cmp.max_value_diff) + ", " +
              std::to_string(cmp.argmax_mismatches) + " argmax mismatches, " + fmt("%.1f", secs) + " s"};
}

// 3 -------------------------------------------------------------------------
Outcome analytic_cases() {
  Rng rng(303);
  double self_dev = 0.0, perm_dev = 0.0, scale_dev = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto d = std::size_t(uniform_int(rng, 2, 32));
    const auto g = std::size_t(uniform_int(rng, 2, 8));
    Tensor a = standard_normal(rng, {d, g, g});
    Tensor b = standard_normal(rng, {d, g, g});
    const auto self = patch_quality(a, a);
    for (double v : self.raw.values()) self_dev = std::max(self_dev, std::abs(v - 1.0));
    const auto base = patch_quality(a, b);
    for (auto aug : kAllAugmentations)
      perm_dev = std::max(perm_dev, max_abs_diff(base.raw, patch_quality(a, to_transform(aug).apply(b)).raw));
    const double sa = std::exp(uniform(rng, -5, 5)), sb = std::exp(uniform(rng, -5, 5));
    scale_dev = std::max(scale_dev, max_abs_diff(base.raw, patch_quality(scale(a, sa), scale(b, sb)).raw));
  }
  return {self_dev <= 1e-12 && perm_dev <= 1e-12 && scale_dev <= 1e-9,
          "self-match |raw-1| " + fmt("%.1e", self_dev) + ", permutation " + fmt("%.1e", perm_dev) +
              ", rescaling " + fmt("%.1e", scale_dev)};
}

// 4 -------------------------------------------------------------------------
Outcome spatch_protocol(const Harness& h) {
  // identity corpus with pairwise-distinct features
  Rng rng(404);
  CorrespondenceCorpus ident;
  ident.grid = 8;
  std::vector<std::vector<Tensor>> feats;
  for (int g = 0; g < 4; ++g) {
    CorrespondenceGroup group;
    Tensor f = standard_normal(rng, {8, 8, 8});
    for (int i = 0; i < 3; ++i) {
      group.images.push_back(Tensor({3, 32, 32}));
      group.transforms.push_back(GridTransform::identity());
    }
    ident.groups.push_back(group);
    feats.push_back({f, f, f});
  }
  const double identity_score = s_patch_features(ident, feats);

  // constant features: every query ties and resolves to cell 0
  const auto corpus = build_correspondence_corpus(10, 4, 405, SceneGeometry{});
  std::size_t zero = 0, total = 0;
  for (const auto& g : corpus.groups)
    for (std::size_t a = 0; a < g.images.size(); ++a)
      for (std::size_t b = 0; b < g.images.size(); ++b) {
        if (a == b) continue;
        for (auto v : ground_truth_map(g, a, b, corpus.grid)) zero += v == 0 ? 1 : 0;
        total += corpus.grid * corpus.grid;
      }
  const double collapse = s_patch(corpus, [](const Tensor&) { return Tensor::filled({16, 8, 8}, 1.0); });
  const double collapse_expect = double(zero) / double(total);

  bool directional = true;
  std::string per_seed;
  double secs = 0.0;
  for (auto seed : h.seeds) {
    const fs::path dir = h.run_dir(seed);
    const std::string common = " --seed " + std::to_string(seed) + " --out-dir " + dir.string();
    for (const char* stage : {"gen-data", "train-ssl", "eval-spatch"}) {
      if (h.invoke(std::string(stage) + common, h.work / ("seed" + std::to_string(seed) + "_" + stage + ".log")) != 0)
        return {false, std::string("stage ") + stage + " failed for seed " + std::to_string(seed)};
    }
    secs += stage_seconds(dir, {"gen-data", "train-ssl", "eval-spatch"});
    const auto rows = read_csv(dir / "spatch.csv");
    const auto layer = std::stoul(read_text(dir / "selected_layer.txt"));
    bool every = !rows.empty();
    double gain = 0.0;
    for (const auto& r : rows) {
      const double before = std::stod(r[1]), after = std::stod(r[2]);
      every = every && after > before;
      if (std::stoul(r[0]) == layer) gain = after - before;
    }
    const bool ok = every && gain >= 0.05;
    directional = directional && ok;
    per_seed += " seed" + std::to_string(seed) + ":L" + std::to_string(layer) + " +" + fmt("%.1f", 100 * gain) +
                "pp" + (every ? "" : " (not every layer)");
  }
  const bool pass = identity_score == 1.0 && collapse == collapse_expect && directional && secs < 300.0;
  return {pass, "identity " + fmt("%.3f", identity_score) + ", tie-collapse " + fmt("%.5f", collapse) + " vs " +
                    fmt("%.5f", collapse_expect) + ";" + per_seed + "; " + fmt("%.1f", secs) + " s"};
}

// 5 -------------------------------------------------------------------------
Outcome quality_discrimination(const Harness& h) {
  const auto t0 = Clock::now();
  const fs::path dir = h.run_dir(h.seeds.front());
  const auto cfg = parse_config(read_text(dir / "config.resolved.txt"));
  Encoder enc(cfg.encoder, 0);
  restore_params(load_checkpoint(dir / "encoder" / "trained"), enc.param_names(), enc.params());
  const std::size_t layer = std::stoul(read_text(dir / "selected_layer.txt")) - 1;

  // fresh pairs from a seed no pipeline corpus uses
  const auto pairs = build_pair_corpus(200, PairCorpusConfig{cfg.geometry, cfg.corruption_rate}, 0x5eed5);
  QualityScores scores;
  for (const auto& p : pairs) collect_quality_scores(p, estimate_quality(enc, layer, p), scores);
  double wins = 0.0;
  for (double c : scores.clean)
    for (double x : scores.corrupt) wins += c > x ? 1.0 : (c == x ? 0.5 : 0.0);
  const double auc = wins / (double(scores.clean.size()) * double(scores.corrupt.size()));
  const double secs = since(t0);
  return {auc >= 0.90 && secs < 120.0,
          "AUC " + fmt("%.4f", auc) + " over " + std::to_string(scores.clean.size()) + " clean / " +
              std::to_string(scores.corrupt.size()) + " corrupted patches, layer " + std::to_string(layer + 1) +
              ", " + fmt("%.1f", secs) + " s"};
}

// 6 -------------------------------------------------------------------------
Outcome loss_identities() {
  auto m = test_support::micro_setup(606, 3);
  ConvDenoiser model(m.cfg, 607);
  auto value = [&](auto&& f) {
    ag::Tape tape;
    std::vector<ag::Var> w;
    for (const auto& p : model.params()) w.push_back(tape.leaf(p));
    return f(tape, w).value().item();
  };
  auto set_weights = [&](double gen_quality, double ref_quality) {
    for (auto& it : m.items) {
      it.weight_gen = Tensor::filled({8, 8}, gen_quality);
      it.weight_ref = Tensor::filled({8, 8}, 1.0 - ref_quality);
    }
  };
  set_weights(1.0, 1.0);
  const double unit = std::abs(
      value([&](ag::Tape& t, auto& w) { return loss_patchdpo(t, model, w, m.batch, m.schedule); }) -
      value([&](ag::Tape& t, auto& w) { return loss_mse(t, model, w, m.batch, m.schedule, Target::kGenerated); }));
  set_weights(0.0, 0.0);
  const double zero = std::abs(
      value([&](ag::Tape& t, auto& w) { return loss_patchdpo(t, model, w, m.batch, m.schedule); }) -
      value([&](ag::Tape& t, auto& w) { return loss_mse(t, model, w, m.batch, m.schedule, Target::kReference); }));
  const auto frozen = model.clone();
  const double dpo = std::abs(
      value([&](ag::Tape& t, auto& w) { return loss_dpo(t, model, w, frozen.get(), m.batch, m.schedule, 1.0); }) -
      std::log(2.0));
  return {unit <= 1e-12 && zero <= 1e-12 && dpo <= 1e-12,
          "unit weights " + fmt("%.1e", unit) + ", zero weights " + fmt("%.1e", zero) + ", dpo vs log2 " +
              fmt("%.1e", dpo)};
}

// 7 -------------------------------------------------------------------------
Outcome ablation_ordering(const Harness& h) {
  int first = 0, second = 0, third = 0;
  double slowest = 0.0;
  std::string per_seed;
  for (auto seed : h.seeds) {
    const fs::path dir = h.run_dir(seed);
    const auto t0 = Clock::now();
    if (h.invoke("all --seed " + std::to_string(seed) + " --out-dir " + dir.string(),
                 h.work / ("seed" + std::to_string(seed) + "_all.log")) != 0)
      return {false, "pipeline failed for seed " + std::to_string(seed)};
    (void)t0;
    slowest = std::max(slowest, stage_seconds(dir, stage_names()));
    std::map<std::string, double> corrupt;
    for (const auto& r : read_csv(dir / "eval.csv")) corrupt[r[0]] = std::stod(r[2]);
    const double mse = corrupt.at("mse_gen"), dpo = corrupt.at("dpo"), pdpo = corrupt.at("patchdpo");
    first += pdpo < mse;
    second += pdpo <= dpo;
    third += (mse - pdpo) > (mse - dpo);
    per_seed += " seed" + std::to_string(seed) + ": mse_gen " + fmt("%.4f", mse) + " dpo " + fmt("%.4f", dpo) +
                " patchdpo " + fmt("%.4f", pdpo) + ";";
  }
  const bool pass = first == 3 && second >= 2 && third >= 2 && slowest < 600.0;
  return {pass, "patchdpo<mse_gen " + std::to_string(first) + "/3, patchdpo<=dpo " + std::to_string(second) +
                    "/3, gain over dpo " + std::to_string(third) + "/3;" + per_seed + " slowest run " +
                    fmt("%.0f", slowest) + " s"};
}

// 8 -------------------------------------------------------------------------
Outcome determinism(const Harness& h) {
  const fs::path a = h.run_dir(h.seeds.front());
  const fs::path b = h.work / "repeat";
  if (h.invoke("all --seed " + std::to_string(h.seeds.front()) + " --out-dir " + b.string(), h.work / "repeat.log") != 0)
    return {false, "repeat run failed"};
  std::size_t compared = 0, differing = 0;
  std::string first_diff;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension();
    if (ext != ".tnsr" && ext != ".csv" && ext != ".pgm") continue;
    const fs::path rel = fs::relative(entry.path(), a);
    ++compared;
    if (!fs::exists(b / rel) || read_file_bytes(entry.path()) != read_file_bytes(b / rel)) {
      ++differing;
      if (first_diff.empty()) first_diff = rel.string();
    }
  }
  return {compared > 0 && differing == 0,
          std::to_string(compared) + " artifacts compared, " + std::to_string(differing) + " differ" +
              (first_diff.empty() ? "" : " (first: " + first_diff + ")")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  Harness h;
  app.add_option("--cli", h.cli, "path to the patchpref executable")->required();
  app.add_option("--work-dir", h.work, "scratch directory for pipeline runs")->required();
  CLI11_PARSE(app, argc, argv);

  std::error_code ec;
  fs::remove_all(h.work, ec);
  fs::create_directories(h.work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 gradient correctness", gradients},
      {"2 matcher oracle equivalence", matcher_oracle},
      {"3 patch quality analytic cases", analytic_cases},
      {"4 S_patch protocol", [&] { return spatch_protocol(h); }},
      {"5 quality discrimination", [&] { return quality_discrimination(h); }},
      {"6 loss identities", loss_identities},
      {"7 ablation ordering", [&] { return ablation_ordering(h); }},
      {"8 determinism", [&] { return determinism(h); }},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << name << ": " << o.detail << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}

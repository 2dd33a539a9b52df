// svl: synthetic-shortcut lab for contrastive image-caption training.
//
// Subcommands: gen-data, inject, train, eval, run-setup, grid, mi-verify,
// report. Worker parallelism is capped by the SVL_THREADS environment
// variable; all results are deterministic in (config, seed).

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "svl/infotheory.hpp"
#include "svl/runner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

svl::run::ExperimentResult result_from_json(const json& rows) {
  svl::run::ExperimentResult out;
  for (const auto& row : rows) {
    svl::run::RunRecord rec;
    rec.setup = row.value("setup", "run");
    rec.meta.dataset = row.value("dataset", "synthetic");
    rec.meta.mode = row.value("mode", "none");
    rec.meta.n_bits = row.value("n_bits", 0);
    rec.meta.loss = row.value("loss", "infonce");
    rec.seed = row.value("seed", uint64_t(0));
    rec.report.policy = row.value("policy", "without") == std::string("with")
                            ? svl::eval::Policy::With
                            : svl::eval::Policy::Without;
    rec.report.seed = rec.seed;
    rec.report.config_hash = row.value("config_hash", "");
    const auto& m = row.at("metrics");
    for (int k : {1, 5, 10}) {
      rec.report.i2t[k] = m.at("r" + std::to_string(k) + "_i2t").get<double>();
      rec.report.t2i[k] = m.at("r" + std::to_string(k) + "_t2i").get<double>();
    }
    rec.report.rsum = m.at("rsum").get<double>();
    if (row.contains("val_rsum")) rec.val_rsum = row["val_rsum"].get<double>();
    out.records.push_back(std::move(rec));
  }
  return out;
}

svl::shortcuts::ShortcutSpec spec_from_mode_arg(const std::string& mode_arg) {
  svl::shortcuts::ShortcutSpec spec;
  if (mode_arg.rfind("nbits:", 0) == 0) {
    spec.mode = svl::shortcuts::Mode::NBits;
    spec.n_bits = std::stoi(mode_arg.substr(6));
  } else {
    spec.mode = svl::run::mode_from_name(mode_arg);
  }
  spec.validate();
  return spec;
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir) {
  svl::run::ExperimentConfig cfg = config_path.empty()
                                       ? svl::run::ExperimentConfig{}
                                       : svl::run::ExperimentConfig::from_json_file(config_path);
  const auto manifest = svl::datagen::generate_dataset(cfg.data, out_dir);
  std::printf("wrote %zu tuples to %s (train/val/test: %zu/%zu/%zu)\n", manifest.entries.size(),
              out_dir.c_str(), manifest.split_entries(svl::datagen::Split::Train).size(),
              manifest.split_entries(svl::datagen::Split::Val).size(),
              manifest.split_entries(svl::datagen::Split::Test).size());
  return 0;
}

int cmd_inject(const std::string& manifest_path, const std::string& mode_arg,
               const std::string& out_dir, uint64_t seed) {
  const auto manifest = svl::datagen::load_manifest(manifest_path);
  auto spec = spec_from_mode_arg(mode_arg);
  if (spec.mode == svl::shortcuts::Mode::None)
    throw svl::UsageError("inject: mode none stamps nothing");
  const auto bank = svl::shortcuts::DigitGlyphBank::builtin();
  fs::create_directories(fs::path(out_dir) / "images");

  svl::datagen::DatasetManifest stamped = manifest;
  stamped.root = out_dir;
  for (auto& e : stamped.entries) {
    svl::rng::Stream rng({seed, 0x57A3Bull, uint64_t(e.tuple_id)});
    const auto a = spec.mode == svl::shortcuts::Mode::NBits
                       ? svl::shortcuts::assign_train_shortcut(spec, e.tuple_id, rng)
                       : svl::shortcuts::ShortcutAssignment::from_value(e.tuple_id);
    svl::Raster img = svl::read_pgm(manifest.image_file(e));
    if (spec.mode != svl::shortcuts::Mode::CaptionOnly)
      img = svl::shortcuts::inject_image(img, a, bank, rng);
    svl::write_pgm(fs::path(out_dir) / e.image_path, img);
    if (spec.mode != svl::shortcuts::Mode::ImageOnly) {
      for (auto& c : e.captions) {
        auto toks = svl::shortcuts::inject_caption(svl::datagen::split_tokens(c), a);
        std::string joined;
        for (size_t i = 0; i < toks.size(); ++i) joined += (i ? " " : "") + toks[i];
        c = joined;
      }
    }
  }
  svl::datagen::save_manifest(stamped, out_dir);
  std::printf("stamped %zu tuples into %s (mode %s)\n", stamped.entries.size(), out_dir.c_str(),
              svl::shortcuts::mode_name(spec.mode));
  return 0;
}

int cmd_train(const std::string& config_path, uint64_t seed) {
  auto cfg = svl::run::ExperimentConfig::from_json_file(config_path);
  const auto manifest = svl::run::ensure_dataset(cfg);
  auto result = svl::run::train(cfg, seed, manifest);
  fs::create_directories(cfg.output_dir);
  const fs::path ckpt = fs::path(cfg.output_dir) / ("checkpoint_seed" + std::to_string(seed) + ".svlck");
  svl::model::save_checkpoint(result.params, result.model_cfg, ckpt);
  json curves = {{"epoch_mean_loss", result.epoch_mean_loss},
                 {"lambda_curve", result.lambda_curve},
                 {"wall_seconds", result.wall_seconds},
                 {"config_hash", cfg.config_hash()},
                 {"seed", seed}};
  std::ofstream(fs::path(cfg.output_dir) / ("curves_seed" + std::to_string(seed) + ".json"))
      << curves.dump(2) << "\n";
  std::printf("trained %s seed %llu: final epoch loss %.4f, %.1fs -> %s\n", cfg.loss.c_str(),
              (unsigned long long)seed, result.epoch_mean_loss.back(), result.wall_seconds,
              ckpt.c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& manifest_path,
             const std::string& policy_arg, const std::string& mode_arg, uint64_t seed,
             const std::string& out_path, const std::string& split_arg) {
  const auto ck = svl::model::load_checkpoint(ckpt_path);
  auto m = svl::model::DualEncoder<float>::from_checkpoint(ck);
  const auto manifest = svl::datagen::load_manifest(manifest_path);
  const auto spec = spec_from_mode_arg(mode_arg);
  const auto policy =
      policy_arg == "with" ? svl::eval::Policy::With : svl::eval::Policy::Without;
  const auto bank = svl::shortcuts::DigitGlyphBank::builtin();
  const auto report = svl::eval::evaluate(m, manifest, svl::datagen::split_from_name(split_arg),
                                          spec, policy, bank, seed);
  const json j = svl::eval::report_to_json(report);
  std::cout << j.dump(2) << "\n";
  if (!out_path.empty()) std::ofstream(out_path) << j.dump(2) << "\n";
  return 0;
}

int cmd_run_setup(const std::string& config_path, const std::string& setup_arg, int bits,
                  const std::string& out_override) {
  auto cfg = config_path.empty() ? svl::run::ExperimentConfig{}
                                 : svl::run::ExperimentConfig::from_json_file(config_path);
  if (!out_override.empty()) cfg.output_dir = out_override;
  const auto setup = svl::run::parse_setup(setup_arg, bits);
  const auto manifest = svl::run::ensure_dataset(cfg);
  const auto result = svl::run::run_setup(setup, cfg, manifest);
  svl::run::report(result, cfg.output_dir);
  for (const auto& rec : result.records)
    std::printf("setup %s seed %llu eval-%s: rsum %.1f\n", rec.setup.c_str(),
                (unsigned long long)rec.seed, svl::eval::policy_name(rec.report.policy),
                rec.report.rsum);
  return 0;
}

int cmd_grid(const std::string& config_path, const std::string& method,
             const std::string& out_override) {
  auto cfg = config_path.empty() ? svl::run::ExperimentConfig{}
                                 : svl::run::ExperimentConfig::from_json_file(config_path);
  if (!out_override.empty()) cfg.output_dir = out_override;
  const auto manifest = svl::run::ensure_dataset(cfg);
  const auto grid = svl::run::run_mitigation_grid(method, cfg, manifest);
  svl::run::report(grid.result, cfg.output_dir);
  std::printf("best with shortcuts:    %s\n", grid.best_with.c_str());
  std::printf("best without shortcuts: %s\n", grid.best_without.c_str());
  return 0;
}

int cmd_mi_verify(const std::string& joint_path, int random_count, uint64_t seed) {
  using namespace svl::infotheory;
  if (!joint_path.empty()) {
    const auto joint = DiscreteJoint::from_json_file(joint_path);
    const auto d = decompose(joint);
    const auto t = verify_theorem1(joint);
    std::printf("H(x) = %.6f bits\n", entropy(joint, kX));
    std::printf("C_A = %.6f, C_B = %.6f, S = %.6f\n", d.ca_specific, d.cb_specific, d.shared);
    std::printf("task-relevant R = %.6f, task-irrelevant = %.6f\n", d.task_relevant,
                d.task_irrelevant);
    std::printf("I(z_min^A; c_A) = %.6f, I(z_min^B; c_B) = %.6f, I(z_opt; c_A c_B) = %.6f\n",
                t.i_min_a, t.i_min_b, t.i_opt);
    std::printf("H2 holds: %s, minimal-vs-optimal gap: %s\n", t.h2_holds ? "yes" : "no",
                t.gap_exists ? "yes" : "no");
    return t.h2_holds && !t.gap_exists ? 1 : 0;
  }
  svl::rng::Stream rng({seed, 0x313FEull});
  int violations = 0;
  for (int i = 0; i < random_count; ++i) {
    const auto joint = sample_h2_joint(rng, 8);
    const auto d = decompose(joint);
    const double hx = entropy(joint, kX);
    const double hx_given = hx - mutual_information(joint, kX, VarSet{Var::CA, Var::CB});
    const double eq1 = hx - hx_given;
    const auto t = verify_theorem1(joint);
    const bool ok = std::abs(d.task_relevant - eq1) < 1e-9 && (!t.h2_holds || t.gap_exists);
    if (!ok) {
      ++violations;
      std::printf("violation on joint %d\n", i);
    }
  }
  std::printf("%d random H2 joints checked, %d violations\n", random_count, violations);
  return violations == 0 ? 0 : 1;
}

int cmd_report(const std::string& in_dir, const std::string& out_dir) {
  std::ifstream f(fs::path(in_dir) / "results.json");
  if (!f) throw std::runtime_error("report: cannot open " + in_dir + "/results.json");
  json rows;
  f >> rows;
  const auto result = result_from_json(rows);
  svl::run::report(result, out_dir);
  std::printf("wrote results.csv, results.json, rsum_chart.svg to %s\n", out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Eigen::setNbThreads(svl::run::worker_threads());
  CLI::App app{"synthetic-shortcut lab for contrastive image-caption training"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", manifest_path, mode_arg = "none";
  std::string policy_arg = "without", ckpt_path, joint_path, method = "ltd";
  std::string setup_arg = "I", eval_out, split_arg = "test", report_in;
  uint64_t seed = 0;
  int bits = 0, random_count = 0;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  gen->add_option("--config", config_path, "experiment config JSON");
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* inj = app.add_subcommand("inject", "stamp shortcuts onto a dataset offline");
  inj->add_option("--manifest", manifest_path, "manifest.jsonl path")->required();
  inj->add_option("--mode", mode_arg, "unique|nbits:N|img-only|cap-only")->required();
  inj->add_option("--out", out_dir, "output directory")->required();
  inj->add_option("--seed", seed, "seed for nbits value draws");

  auto* tr = app.add_subcommand("train", "train one model");
  tr->add_option("--config", config_path, "experiment config JSON")->required();
  tr->add_option("--seed", seed, "training seed");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  ev->add_option("--manifest", manifest_path, "manifest.jsonl path")->required();
  ev->add_option("--policy", policy_arg, "with|without")->required();
  ev->add_option("--mode", mode_arg, "shortcut mode used in training (for policy=with)");
  ev->add_option("--split", split_arg, "train|val|test (default test)");
  ev->add_option("--seed", seed, "evaluation seed (glyph variants)");
  ev->add_option("--out", eval_out, "also write the report JSON here");

  auto* rs = app.add_subcommand("run-setup", "run one experimental setup across seeds");
  rs->add_option("--config", config_path, "experiment config JSON");
  rs->add_option("--setup", setup_arg, "I|II|III-img|III-cap|IV")->required();
  rs->add_option("--bits", bits, "shortcut bits for setup IV");
  rs->add_option("--out", out_dir, "override output directory");

  auto* gr = app.add_subcommand("grid", "run a mitigation hyperparameter grid");
  gr->add_option("--config", config_path, "experiment config JSON");
  gr->add_option("--method", method, "ltd|ifm")->required();
  gr->add_option("--out", out_dir, "override output directory");

  auto* mi = app.add_subcommand("mi-verify", "verify the information-theoretic identities");
  mi->add_option("--joint", joint_path, "joint distribution JSON file");
  mi->add_option("--random", random_count, "check K seeded random joints");
  mi->add_option("--seed", seed, "seed for random joints");

  auto* rp = app.add_subcommand("report", "re-render CSV/JSON/SVG from results.json");
  rp->add_option("--in", report_in, "directory with results.json")->required();
  rp->add_option("--out", out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, out_dir);
    if (inj->parsed()) return cmd_inject(manifest_path, mode_arg, out_dir, seed);
    if (tr->parsed()) return cmd_train(config_path, seed);
    if (ev->parsed())
      return cmd_eval(ckpt_path, manifest_path, policy_arg, mode_arg, seed, eval_out, split_arg);
    if (rs->parsed()) return cmd_run_setup(config_path, setup_arg, bits, out_dir);
    if (gr->parsed()) return cmd_grid(config_path, method, out_dir);
    if (mi->parsed()) {
      if (joint_path.empty() && random_count <= 0)
        throw svl::UsageError("mi-verify: pass --joint FILE or --random K");
      return cmd_mi_verify(joint_path, random_count, seed);
    }
    if (rp->parsed()) return cmd_report(report_in, out_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}

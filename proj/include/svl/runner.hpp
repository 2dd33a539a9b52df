#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "svl/datagen.hpp"
#include "svl/evaluator.hpp"
#include "svl/losses.hpp"
#include "svl/model.hpp"
#include "svl/shortcuts.hpp"

// Experiment orchestration: the training loop, the four shortcut setups, the
// mitigation grids, and CSV/JSON/SVG reporting.

namespace svl::run {

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline int worker_threads() {
  if (const char* env = std::getenv("SVL_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

// --- configuration -------------------------------------------------------------

struct OptimConfig {
  double lr = 1e-3;
  double grad_clip = 2.0;
  int epochs = 10;
  int batch_size = 128;
  std::string schedule = "linear-decay";

  void validate() const {
    if (lr <= 0) throw UsageError("optim: lr must be > 0");
    if (epochs < 1) throw UsageError("optim: epochs must be >= 1");
    if (batch_size < 1) throw UsageError("optim: batch_size must be >= 1");
    if (schedule != "linear-decay" && schedule != "constant")
      throw UsageError("optim: unknown schedule " + schedule);
  }
};

enum class LossKind { InfoNCE, LtdDual, LtdConstraint, Ifm };

inline LossKind loss_from_name(const std::string& s) {
  if (s == "infonce") return LossKind::InfoNCE;
  if (s == "ltd_dual") return LossKind::LtdDual;
  if (s == "ltd_constraint") return LossKind::LtdConstraint;
  if (s == "ifm") return LossKind::Ifm;
  throw UsageError("unknown loss: " + s);
}

inline const char* loss_name(LossKind k) {
  switch (k) {
    case LossKind::InfoNCE: return "infonce";
    case LossKind::LtdDual: return "ltd_dual";
    case LossKind::LtdConstraint: return "ltd_constraint";
    default: return "ifm";
  }
}

inline shortcuts::Mode mode_from_name(const std::string& s) {
  if (s == "none") return shortcuts::Mode::None;
  if (s == "unique") return shortcuts::Mode::Unique;
  if (s == "img-only") return shortcuts::Mode::ImageOnly;
  if (s == "cap-only") return shortcuts::Mode::CaptionOnly;
  if (s == "nbits") return shortcuts::Mode::NBits;
  throw UsageError("unknown shortcut mode: " + s);
}

struct ExperimentConfig {
  datagen::GenConfig data;
  std::string data_dir = "data/synthetic";
  shortcuts::ShortcutSpec shortcut;
  std::string loss = "infonce";
  losses::LossConfig loss_cfg;
  model::ModelConfig model;
  OptimConfig optim;
  shortcuts::AugmentationConfig aug;
  std::vector<uint64_t> seeds = {0, 1, 2};
  std::string output_dir = "out";
  std::string glyph_bank_dir;  // empty -> builtin bitmap bank
  std::string dataset_name = "synthetic";

  void validate() const {
    data.validate();
    shortcut.validate();
    loss_from_name(loss);
    loss_cfg.validate();
    optim.validate();
    if (seeds.empty()) throw UsageError("config: seeds must be non-empty");
  }

  nlohmann::json to_json() const {
    return {
        {"data",
         {{"n_tuples", data.n_tuples},
          {"k", data.k},
          {"seed", data.seed},
          {"train_frac", data.train_frac},
          {"val_frac", data.val_frac},
          {"test_frac", data.test_frac},
          {"image_h", data.image_h},
          {"image_w", data.image_w}}},
        {"data_dir", data_dir},
        {"shortcut",
         {{"mode", shortcuts::mode_name(shortcut.mode)},
          {"n_bits", shortcut.n_bits},
          {"eval_with_shortcuts", shortcut.eval_with_shortcuts}}},
        {"loss", loss},
        {"loss_cfg",
         {{"logit_scale_init", loss_cfg.logit_scale_init},
          {"scale_max", loss_cfg.scale_max},
          {"epsilon", loss_cfg.epsilon},
          {"beta", loss_cfg.beta},
          {"eta", loss_cfg.eta},
          {"lambda_init", loss_cfg.lambda_init},
          {"lambda_lr", loss_cfg.lambda_lr}}},
        {"model", model.to_json()},
        {"optim",
         {{"lr", optim.lr},
          {"grad_clip", optim.grad_clip},
          {"epochs", optim.epochs},
          {"batch_size", optim.batch_size},
          {"schedule", optim.schedule}}},
        {"aug", {{"hflip_p", aug.hflip_p}, {"crop", aug.crop}, {"crop_area", aug.crop_area}}},
        {"seeds", seeds},
        {"output_dir", output_dir},
        {"glyph_bank_dir", glyph_bank_dir},
        {"dataset_name", dataset_name}};
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    if (j.contains("data")) {
      const auto& d = j.at("data");
      c.data.n_tuples = d.value("n_tuples", c.data.n_tuples);
      c.data.k = d.value("k", c.data.k);
      c.data.seed = d.value("seed", c.data.seed);
      c.data.train_frac = d.value("train_frac", c.data.train_frac);
      c.data.val_frac = d.value("val_frac", c.data.val_frac);
      c.data.test_frac = d.value("test_frac", c.data.test_frac);
      c.data.image_h = d.value("image_h", c.data.image_h);
      c.data.image_w = d.value("image_w", c.data.image_w);
    }
    c.data_dir = j.value("data_dir", c.data_dir);
    if (j.contains("shortcut")) {
      const auto& s = j.at("shortcut");
      c.shortcut.mode = mode_from_name(s.value("mode", "none"));
      c.shortcut.n_bits = s.value("n_bits", 0);
      c.shortcut.eval_with_shortcuts = s.value("eval_with_shortcuts", false);
    }
    c.loss = j.value("loss", c.loss);
    if (j.contains("loss_cfg")) {
      const auto& l = j.at("loss_cfg");
      c.loss_cfg.logit_scale_init = l.value("logit_scale_init", c.loss_cfg.logit_scale_init);
      c.loss_cfg.scale_max = l.value("scale_max", c.loss_cfg.scale_max);
      c.loss_cfg.epsilon = l.value("epsilon", c.loss_cfg.epsilon);
      c.loss_cfg.beta = l.value("beta", c.loss_cfg.beta);
      c.loss_cfg.eta = l.value("eta", c.loss_cfg.eta);
      c.loss_cfg.lambda_init = l.value("lambda_init", c.loss_cfg.lambda_init);
      c.loss_cfg.lambda_lr = l.value("lambda_lr", c.loss_cfg.lambda_lr);
    }
    if (j.contains("model")) c.model = model::ModelConfig::from_json(j.at("model"));
    if (j.contains("optim")) {
      const auto& o = j.at("optim");
      c.optim.lr = o.value("lr", c.optim.lr);
      c.optim.grad_clip = o.value("grad_clip", c.optim.grad_clip);
      c.optim.epochs = o.value("epochs", c.optim.epochs);
      c.optim.batch_size = o.value("batch_size", c.optim.batch_size);
      c.optim.schedule = o.value("schedule", c.optim.schedule);
    }
    if (j.contains("aug")) {
      const auto& a = j.at("aug");
      c.aug.hflip_p = a.value("hflip_p", c.aug.hflip_p);
      c.aug.crop = a.value("crop", c.aug.crop);
      c.aug.crop_area = a.value("crop_area", c.aug.crop_area);
    }
    c.seeds = j.value("seeds", c.seeds);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.glyph_bank_dir = j.value("glyph_bank_dir", c.glyph_bank_dir);
    c.dataset_name = j.value("dataset_name", c.dataset_name);
    return c;
  }

  static ExperimentConfig from_json_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config: " + path.string());
    nlohmann::json j;
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("config parse error in " + path.string() + ": " + e.what());
    }
    return from_json(j);
  }

  std::string config_hash() const {
    const std::string s = to_json().dump();
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char ch : s) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
    return buf;
  }
};

// --- training --------------------------------------------------------------------

struct TrainResult {
  ParamStore<float> params;
  model::ModelConfig model_cfg;
  std::vector<double> step_loss;
  std::vector<double> epoch_mean_loss;
  std::vector<double> lambda_curve;  // per step, ltd_constraint only
  double wall_seconds = 0.0;
  int zero_norm_rows = 0;  // recon fallback diagnostics, summed
};

namespace detail {

struct TrainSplit {
  std::vector<Raster> images;
  std::vector<std::vector<std::vector<int>>> captions;  // [tuple][j] -> token ids
  std::vector<int64_t> tuple_ids;
  std::vector<VecC<float>> targets;  // [tuple * k + j]; clean-caption targets
  int k = 0;
};

inline TrainSplit load_split(const datagen::DatasetManifest& manifest, datagen::Split split,
                             bool with_targets, const model::TargetEmbedder& embedder) {
  TrainSplit out;
  const auto entries = manifest.split_entries(split);
  if (entries.empty()) throw UsageError("train: split has no entries");
  out.k = int(entries.front()->captions.size());
  for (const auto* e : entries) {
    if (int(e->captions.size()) != out.k)
      throw UsageError("train: inconsistent captions-per-image");
    out.images.push_back(read_pgm(manifest.image_file(*e)));
    out.tuple_ids.push_back(e->tuple_id);
    std::vector<std::vector<int>> caps;
    for (const auto& c : e->captions) {
      caps.push_back(datagen::tokenize(c, manifest.vocabulary));
      if (with_targets) out.targets.push_back(embedder.embed(caps.back()));
    }
    out.captions.push_back(std::move(caps));
  }
  return out;
}

class Adam {
 public:
  Adam(const ParamStore<float>& params, double lr, int total_steps,
       const std::string& schedule)
      : m_(params.like_zeros()), v_(params.like_zeros()), lr0_(lr), total_steps_(total_steps),
        linear_(schedule == "linear-decay") {}

  void step(ParamStore<float>& params, const ParamStore<float>& grads) {
    ++t_;
    const double lr = linear_ ? lr0_ * (1.0 - double(t_ - 1) / double(total_steps_)) : lr0_;
    const double bc1 = 1.0 - std::pow(kBeta1, t_);
    const double bc2 = 1.0 - std::pow(kBeta2, t_);
    for (size_t i = 0; i < params.entries.size(); ++i) {
      auto& p = params.entries[i].value;
      const auto& g = grads.entries[i].value;
      auto& m = m_.entries[i].value;
      auto& v = v_.entries[i].value;
      m = float(kBeta1) * m + float(1.0 - kBeta1) * g;
      v = float(kBeta2) * v.array().matrix() +
          float(1.0 - kBeta2) * g.array().square().matrix();
      p.array() -= float(lr) * (m.array() / float(bc1)) /
                   ((v.array() / float(bc2)).sqrt() + float(kEps));
    }
  }

 private:
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  ParamStore<float> m_, v_;
  double lr0_;
  int total_steps_;
  bool linear_;
  int t_ = 0;
};

inline double clip_gradients(ParamStore<float>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& e : grads.entries) sq += double(e.value.squaredNorm());
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const float f = float(max_norm / norm);
    for (auto& e : grads.entries) e.value *= f;
  }
  return norm;
}

}  // namespace detail

// Iterates every (image, caption_j) pair once per epoch, applies the train
// pipeline per sample, and descends the selected loss with Adam, global-norm
// clipping and linear lr decay. Returns the final checkpoint, no
// best-on-validation selection.
inline TrainResult train(const ExperimentConfig& config, uint64_t seed,
                         const datagen::DatasetManifest& manifest) {
  config.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const LossKind kind = loss_from_name(config.loss);
  const bool needs_recon = kind == LossKind::LtdDual || kind == LossKind::LtdConstraint;

  model::ModelConfig mcfg = config.model;
  mcfg.vocab_size = manifest.vocabulary.size();
  mcfg.image_h = manifest.image_h;
  mcfg.image_w = manifest.image_w;
  model::TargetEmbedder embedder;
  embedder.d_t = mcfg.d_t;
  embedder.pad_id = manifest.vocabulary.pad_id();

  detail::TrainSplit data =
      detail::load_split(manifest, datagen::Split::Train, needs_recon, embedder);
  const shortcuts::DigitGlyphBank bank = config.glyph_bank_dir.empty()
                                             ? shortcuts::DigitGlyphBank::builtin()
                                             : shortcuts::DigitGlyphBank::load_dir(
                                                   config.glyph_bank_dir);

  auto m = model::DualEncoder<float>::init(mcfg, seed);
  auto grads = m.params.like_zeros();

  const int64_t n_pairs = int64_t(data.images.size()) * data.k;
  const int B = config.optim.batch_size;
  const int64_t steps_per_epoch = (n_pairs + B - 1) / B;
  const int64_t total_steps = steps_per_epoch * config.optim.epochs;
  detail::Adam adam(m.params, config.optim.lr, int(total_steps), config.optim.schedule);

  TrainResult result;
  result.model_cfg = mcfg;
  double lambda = config.loss_cfg.lambda_init;
  const double log_scale_cap = std::log(config.loss_cfg.scale_max);
  m.params.at("loss.log_scale")(0, 0) = float(std::log(config.loss_cfg.logit_scale_init));

  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(size_t(n_pairs));
  int64_t step = 0;
  for (int epoch = 0; epoch < config.optim.epochs; ++epoch) {
    pairs.clear();
    for (size_t i = 0; i < data.images.size(); ++i)
      for (int j = 0; j < data.k; ++j) pairs.emplace_back(int(i), j);
    rng::Stream shuffle_rng({seed, 0x5C0FFull, uint64_t(epoch)});
    shuffle_rng.shuffle(pairs);
    // epoch composition: every caption index exactly once
    std::vector<int> coverage(size_t(n_pairs), 0);
    for (const auto& [i, j] : pairs) coverage[size_t(i) * data.k + j]++;
    for (int c : coverage)
      if (c != 1) throw std::logic_error("train: epoch does not cover every caption once");

    double epoch_loss = 0.0;
    int64_t epoch_batches = 0;
    for (int64_t start = 0; start < n_pairs; start += B, ++step) {
      const int64_t stop = std::min(n_pairs, start + B);
      const int bsz = int(stop - start);
      std::vector<Raster> images;
      std::vector<std::vector<int>> tokens;
      std::vector<int> target_rows;
      images.resize(size_t(bsz));
      tokens.resize(size_t(bsz));
      target_rows.resize(size_t(bsz));
      for (int b = 0; b < bsz; ++b) {
        const auto [ti, j] = pairs[size_t(start + b)];
        rng::Stream pipe({seed, 0x919Eull, uint64_t(epoch), uint64_t(data.tuple_ids[size_t(ti)]),
                          uint64_t(j)});
        auto po = shortcuts::apply_pipeline(data.images[size_t(ti)], data.captions[size_t(ti)][size_t(j)],
                                            data.tuple_ids[size_t(ti)], config.shortcut, config.aug,
                                            shortcuts::Phase::Train, manifest.vocabulary, bank, pipe);
        images[size_t(b)] = std::move(po.image);
        tokens[size_t(b)] = std::move(po.tokens);
        target_rows[size_t(b)] = ti * data.k + j;
      }
      const MatR<float> z_img =
          m.img.forward(m.params, model::rasters_to_matrix<float>(images), bsz);
      const MatR<float> z_cap = m.cap.forward(m.params, tokens);
      const float scale = float(m.logit_scale());

      double total_loss = 0.0;
      MatR<float> d_img, d_cap;
      float d_scale = 0.0f;
      if (kind == LossKind::InfoNCE || needs_recon) {
        auto g = losses::infonce_grad<float>(z_img, z_cap, scale);
        total_loss = g.loss;
        d_img = std::move(g.d_img);
        d_cap = std::move(g.d_cap);
        d_scale = g.d_scale;
      } else {  // IFM
        auto g = losses::ifm_grad<float>(z_img, z_cap, scale, float(config.loss_cfg.epsilon));
        total_loss = g.loss;
        d_img = std::move(g.d_img);
        d_cap = std::move(g.d_cap);
        d_scale = g.d_scale;
      }
      if (needs_recon) {
        MatR<float> targets(bsz, mcfg.d_t);
        for (int b = 0; b < bsz; ++b)
          targets.row(b) = data.targets[size_t(target_rows[size_t(b)])].transpose();
        const MatR<float> decoded = m.dec.forward(m.params, z_cap);
        auto recon = losses::ltd_recon_grad<float>(decoded, targets);
        result.zero_norm_rows += recon.zero_norm_rows;
        double weight;
        if (kind == LossKind::LtdDual) {
          total_loss = losses::ltd_dual(total_loss, recon.loss, config.loss_cfg.beta);
          weight = config.loss_cfg.beta;
        } else {
          total_loss = losses::ltd_constrained(total_loss, recon.loss, lambda,
                                               config.loss_cfg.eta);
          weight = lambda / config.loss_cfg.eta;
          lambda = losses::lambda_ascent_step(lambda, recon.loss, config.loss_cfg.eta,
                                              config.loss_cfg.lambda_lr);
          result.lambda_curve.push_back(lambda);
        }
        MatR<float> d_decoded = float(weight) * recon.d_decoded;
        d_cap += m.dec.backward(m.params, d_decoded, grads);
      }

      if (!std::isfinite(total_loss))
        throw DivergenceError("train: non-finite loss at step " + std::to_string(step) +
                              " (epoch " + std::to_string(epoch) + ")");

      m.img.backward(m.params, d_img, grads);
      m.cap.backward(m.params, d_cap, grads);
      grads.at("loss.log_scale")(0, 0) += d_scale * scale;  // d/d log(s)

      detail::clip_gradients(grads, config.optim.grad_clip);
      adam.step(m.params, grads);
      grads.set_zero();
      auto& ls = m.params.at("loss.log_scale")(0, 0);
      ls = std::min(ls, float(log_scale_cap));

      result.step_loss.push_back(total_loss);
      epoch_loss += total_loss;
      ++epoch_batches;
    }
    result.epoch_mean_loss.push_back(epoch_loss / double(epoch_batches));
  }
  if (!m.params.all_finite()) throw DivergenceError("train: non-finite parameters after training");
  m.params.init_seed = seed;
  result.params = std::move(m.params);
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

// --- setups and grids ---------------------------------------------------------

struct Setup {
  enum class Kind { I, II, IIIImg, IIICap, IV } kind = Kind::I;
  int bits = 0;

  std::string label() const {
    switch (kind) {
      case Kind::I: return "I";
      case Kind::II: return "II";
      case Kind::IIIImg: return "III-img";
      case Kind::IIICap: return "III-cap";
      default: return "IV(" + std::to_string(bits) + ")";
    }
  }
};

inline Setup parse_setup(const std::string& s, int bits = 0) {
  if (s == "I") return {Setup::Kind::I, 0};
  if (s == "II") return {Setup::Kind::II, 0};
  if (s == "III-img") return {Setup::Kind::IIIImg, 0};
  if (s == "III-cap") return {Setup::Kind::IIICap, 0};
  if (s == "IV") return {Setup::Kind::IV, bits};
  throw UsageError("unknown setup: " + s + " (expected I, II, III-img, III-cap, IV)");
}

inline shortcuts::ShortcutSpec setup_spec(const Setup& s) {
  shortcuts::ShortcutSpec spec;
  switch (s.kind) {
    case Setup::Kind::I: spec.mode = shortcuts::Mode::None; break;
    case Setup::Kind::II:
      spec.mode = shortcuts::Mode::Unique;
      spec.eval_with_shortcuts = true;
      break;
    case Setup::Kind::IIIImg: spec.mode = shortcuts::Mode::ImageOnly; break;
    case Setup::Kind::IIICap: spec.mode = shortcuts::Mode::CaptionOnly; break;
    case Setup::Kind::IV:
      spec.mode = shortcuts::Mode::NBits;
      spec.n_bits = s.bits;
      spec.eval_with_shortcuts = true;
      break;
  }
  return spec;
}

struct RunRecord {
  std::string setup;  // setup label or grid cell label
  eval::ReportMeta meta;
  uint64_t seed = 0;
  eval::RetrievalReport report;
  double val_rsum = -1.0;  // filled by grid runs
};

struct RunSummary {
  std::string setup;
  uint64_t seed = 0;
  std::vector<double> epoch_mean_loss;
  std::vector<double> lambda_curve;
  double wall_seconds = 0.0;
};

struct ExperimentResult {
  std::vector<RunRecord> records;
  std::vector<RunSummary> runs;

  double mean_rsum(const std::string& setup, eval::Policy policy) const {
    double total = 0.0;
    int n = 0;
    for (const auto& r : records)
      if (r.setup == setup && r.report.policy == policy) {
        total += r.report.rsum;
        ++n;
      }
    if (n == 0) throw UsageError("mean_rsum: no records for " + setup);
    return total / n;
  }
};

namespace detail {

inline eval::ReportMeta meta_for(const ExperimentConfig& cfg) {
  eval::ReportMeta m;
  m.dataset = cfg.dataset_name;
  m.mode = shortcuts::mode_name(cfg.shortcut.mode);
  m.n_bits = cfg.shortcut.mode == shortcuts::Mode::NBits ? cfg.shortcut.n_bits : 0;
  m.loss = cfg.loss;
  return m;
}

// Trains one seed and evaluates the test split under the given policies.
inline void run_one(const ExperimentConfig& cfg, uint64_t seed,
                    const datagen::DatasetManifest& manifest, const std::string& label,
                    const std::vector<eval::Policy>& policies, ExperimentResult& out,
                    bool with_val_rsum = false) {
  const shortcuts::DigitGlyphBank bank = cfg.glyph_bank_dir.empty()
                                             ? shortcuts::DigitGlyphBank::builtin()
                                             : shortcuts::DigitGlyphBank::load_dir(
                                                   cfg.glyph_bank_dir);
  TrainResult tr = train(cfg, seed, manifest);
  model::DualEncoder<float> m(tr.model_cfg);
  m.params = tr.params;
  const std::string hash = cfg.config_hash();
  double val_rsum = -1.0;
  if (with_val_rsum) {
    val_rsum = eval::evaluate(m, manifest, datagen::Split::Val, cfg.shortcut,
                              eval::Policy::Without, bank, seed, hash)
                   .rsum;
  }
  for (eval::Policy p : policies) {
    RunRecord rec;
    rec.setup = label;
    rec.meta = meta_for(cfg);
    rec.seed = seed;
    rec.report = eval::evaluate(m, manifest, datagen::Split::Test, cfg.shortcut, p, bank, seed, hash);
    rec.val_rsum = val_rsum;
    out.records.push_back(std::move(rec));
  }
  out.runs.push_back({label, seed, tr.epoch_mean_loss, tr.lambda_curve, tr.wall_seconds});
}

}  // namespace detail

// Wires the shortcut spec for one experimental setup and runs all seeds.
// Setups with matching-usable shortcuts evaluate under both policies; the
// one-modality setups evaluate without shortcuts only.
inline ExperimentResult run_setup(const Setup& setup, const ExperimentConfig& base,
                                  const datagen::DatasetManifest& manifest) {
  ExperimentConfig cfg = base;
  cfg.shortcut = setup_spec(setup);
  cfg.validate();
  std::vector<eval::Policy> policies;
  if (setup.kind == Setup::Kind::II || setup.kind == Setup::Kind::IV)
    policies = {eval::Policy::With, eval::Policy::Without};
  else
    policies = {eval::Policy::Without};
  ExperimentResult out;
  for (uint64_t seed : cfg.seeds)
    detail::run_one(cfg, seed, manifest, setup.label(), policies, out);
  return out;
}

inline const std::vector<double>& ltd_eta_grid() {
  static const std::vector<double> g = {0.01, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3};
  return g;
}

inline const std::vector<double>& ifm_epsilon_grid() {
  static const std::vector<double> g = {0.05, 0.1, 0.2, 0.5, 1.0};
  return g;
}

struct GridResult {
  ExperimentResult result;
  std::string best_with;     // best cell label, trained with unique shortcuts
  std::string best_without;  // best cell label, trained without shortcuts
};

// Sweeps the mitigation hyperparameters with and without unique shortcuts and
// selects the best cell per arm by mean validation rsum (evaluated without
// shortcuts).
inline GridResult run_mitigation_grid(const std::string& method, const ExperimentConfig& base,
                                      const datagen::DatasetManifest& manifest) {
  struct Cell {
    std::string label;
    std::string loss;
    double eta = 0.1, beta = 1.0, epsilon = 0.0;
  };
  std::vector<Cell> cells;
  if (method == "ltd") {
    for (double eta : ltd_eta_grid())
      cells.push_back({"ltd eta=" + std::to_string(eta).substr(0, 4), "ltd_constraint", eta, 1.0, 0.0});
    cells.push_back({"ltd beta=1", "ltd_dual", 0.1, 1.0, 0.0});
  } else if (method == "ifm") {
    for (double eps : ifm_epsilon_grid())
      cells.push_back({"ifm eps=" + std::to_string(eps).substr(0, 4), "ifm", 0.1, 1.0, eps});
  } else {
    throw UsageError("unknown mitigation method: " + method + " (expected ltd or ifm)");
  }

  GridResult out;
  for (bool with_shortcuts : {true, false}) {
    double best = -1.0;
    std::string best_label;
    for (const auto& cell : cells) {
      ExperimentConfig cfg = base;
      cfg.loss = cell.loss;
      cfg.loss_cfg.eta = cell.eta;
      cfg.loss_cfg.beta = cell.beta;
      cfg.loss_cfg.epsilon = cell.epsilon;
      cfg.shortcut = shortcuts::ShortcutSpec{};
      if (with_shortcuts) {
        cfg.shortcut.mode = shortcuts::Mode::Unique;
        cfg.shortcut.eval_with_shortcuts = true;
      }
      cfg.validate();
      const std::string label = cell.label + (with_shortcuts ? " +sc" : " -sc");
      std::vector<eval::Policy> policies =
          with_shortcuts ? std::vector<eval::Policy>{eval::Policy::With, eval::Policy::Without}
                         : std::vector<eval::Policy>{eval::Policy::Without};
      double val_sum = 0.0;
      int val_n = 0;
      for (uint64_t seed : cfg.seeds) {
        detail::run_one(cfg, seed, manifest, label, policies, out.result, true);
        val_sum += out.result.records.back().val_rsum;
        ++val_n;
      }
      const double mean_val = val_sum / val_n;
      if (mean_val > best) {
        best = mean_val;
        best_label = label;
      }
    }
    (with_shortcuts ? out.best_with : out.best_without) = best_label;
  }
  return out;
}

// --- reporting ------------------------------------------------------------------

namespace detail {

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

}  // namespace detail

// Grouped bar chart of mean rsum per (setup, policy), horizontal rule at the
// 600 maximum.
inline std::string rsum_chart_svg(const ExperimentResult& result) {
  struct Bar {
    std::string group;
    eval::Policy policy;
    double rsum;
  };
  std::vector<std::string> groups;
  std::vector<Bar> bars;
  for (const auto& r : result.records) {
    if (std::find(groups.begin(), groups.end(), r.setup) == groups.end())
      groups.push_back(r.setup);
  }
  for (const auto& g : groups) {
    for (eval::Policy p : {eval::Policy::Without, eval::Policy::With}) {
      double total = 0.0;
      int n = 0;
      for (const auto& r : result.records)
        if (r.setup == g && r.report.policy == p) {
          total += r.report.rsum;
          ++n;
        }
      if (n > 0) bars.push_back({g, p, total / n});
    }
  }
  const int margin_l = 60, margin_b = 70, margin_t = 40;
  const int group_w = 110, bar_w = 40;
  const int plot_h = 300;
  const int width = margin_l + int(groups.size()) * group_w + 40;
  const int height = margin_t + plot_h + margin_b;
  const double y_max = 620.0;
  auto y_of = [&](double v) { return margin_t + plot_h * (1.0 - v / y_max); };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\">\n";
  os << "  <text x=\"" << margin_l << "\" y=\"24\" font-size=\"15\">recall sum by setup and "
        "evaluation policy</text>\n";
  for (int yv = 0; yv <= 600; yv += 100) {
    os << "  <line x1=\"" << margin_l << "\" y1=\"" << y_of(yv) << "\" x2=\"" << width - 20
       << "\" y2=\"" << y_of(yv) << "\" stroke=\"#dddddd\"/>\n";
    os << "  <text x=\"" << margin_l - 8 << "\" y=\"" << y_of(yv) + 4
       << "\" font-size=\"11\" text-anchor=\"end\">" << yv << "</text>\n";
  }
  os << "  <line x1=\"" << margin_l << "\" y1=\"" << y_of(600) << "\" x2=\"" << width - 20
     << "\" y2=\"" << y_of(600) << "\" stroke=\"#555555\" stroke-dasharray=\"6,4\"/>\n";
  os << "  <text x=\"" << width - 24 << "\" y=\"" << y_of(600) - 5
     << "\" font-size=\"11\" text-anchor=\"end\">max 600</text>\n";
  size_t gi = 0;
  for (const auto& g : groups) {
    const int gx = margin_l + int(gi) * group_w + 10;
    int slot = 0;
    for (const auto& b : bars) {
      if (b.group != g) continue;
      const double h = plot_h * b.rsum / y_max;
      const char* fill = b.policy == eval::Policy::Without ? "#4477aa" : "#ee7733";
      os << "  <rect class=\"bar\" x=\"" << gx + slot * (bar_w + 6) << "\" y=\""
         << margin_t + plot_h - h << "\" width=\"" << bar_w << "\" height=\"" << h
         << "\" fill=\"" << fill << "\"/>\n";
      ++slot;
    }
    os << "  <text x=\"" << gx + bar_w << "\" y=\"" << margin_t + plot_h + 18
       << "\" font-size=\"11\" text-anchor=\"middle\">" << detail::svg_escape(g) << "</text>\n";
    ++gi;
  }
  os << "  <rect x=\"" << margin_l << "\" y=\"" << height - 28
     << "\" width=\"12\" height=\"12\" fill=\"#4477aa\"/>\n";
  os << "  <text x=\"" << margin_l + 18 << "\" y=\"" << height - 18
     << "\" font-size=\"11\">eval without shortcuts</text>\n";
  os << "  <rect x=\"" << margin_l + 170 << "\" y=\"" << height - 28
     << "\" width=\"12\" height=\"12\" fill=\"#ee7733\"/>\n";
  os << "  <text x=\"" << margin_l + 188 << "\" y=\"" << height - 18
     << "\" font-size=\"11\">eval with shortcuts</text>\n";
  os << "</svg>\n";
  return os.str();
}

// Writes results.csv, results.json and rsum_chart.svg into out_dir.
inline void report(const ExperimentResult& result, const std::filesystem::path& out_dir) {
  if (result.records.empty()) throw UsageError("report: no results to write");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("report: cannot create " + out_dir.string());

  std::ofstream csv(out_dir / "results.csv");
  if (!csv) throw std::runtime_error("report: cannot write results.csv");
  csv << eval::csv_header() << "\n";
  for (const auto& r : result.records) csv << eval::csv_row(r.meta, r.report) << "\n";

  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : result.records) {
    nlohmann::json row = eval::report_to_json(r.report);
    row["setup"] = r.setup;
    row["dataset"] = r.meta.dataset;
    row["mode"] = r.meta.mode;
    row["n_bits"] = r.meta.n_bits;
    row["loss"] = r.meta.loss;
    if (r.val_rsum >= 0) row["val_rsum"] = r.val_rsum;
    j.push_back(std::move(row));
  }
  std::ofstream js(out_dir / "results.json");
  js << j.dump(2) << "\n";

  std::ofstream svg(out_dir / "rsum_chart.svg");
  svg << rsum_chart_svg(result);
}

// Generates the dataset if data_dir has no manifest yet, else loads it.
inline datagen::DatasetManifest ensure_dataset(const ExperimentConfig& cfg) {
  const std::filesystem::path dir = cfg.data_dir;
  if (std::filesystem::exists(dir / "manifest.jsonl"))
    return datagen::load_manifest(dir / "manifest.jsonl");
  return datagen::generate_dataset(cfg.data, dir);
}

}  // namespace svl::run

#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "svl/datagen.hpp"
#include "svl/model.hpp"
#include "svl/shortcuts.hpp"
#include "svl/tensor.hpp"

// Image-caption retrieval metrics. Ranking ties are broken by lower
// candidate index so every report is a deterministic function of its inputs.

namespace svl::eval {

inline constexpr const char* kBuildId = "svl-1.0.0";

enum class Policy { With, Without };

inline const char* policy_name(Policy p) { return p == Policy::With ? "with" : "without"; }

struct RetrievalReport {
  std::map<int, double> i2t;  // k -> percent
  std::map<int, double> t2i;
  double rsum = 0.0;
  Policy policy = Policy::Without;
  uint64_t seed = 0;
  std::string config_hash;
};

inline MatR<float> similarity_matrix(const MatR<float>& z_img, const MatR<float>& z_cap) {
  if (z_img.cols() != z_cap.cols()) throw UsageError("similarity_matrix: dimension mismatch");
  return z_img * z_cap.transpose();
}

namespace detail {

// 1-based rank of candidate `target` in row `scores`, descending similarity,
// ties resolved toward the lower index.
template <class Getter>
int rank_of(int64_t n_candidates, int64_t target, Getter score) {
  const float s = score(target);
  int rank = 1;
  for (int64_t j = 0; j < n_candidates; ++j) {
    if (j == target) continue;
    const float sj = score(j);
    if (sj > s || (sj == s && j < target)) ++rank;
  }
  return rank;
}

}  // namespace detail

// Images query captions; image i owns captions [i*k_per, (i+1)*k_per); a hit
// counts the single highest-ranked positive.
inline std::map<int, double> recall_i2t(const MatR<float>& sim, int k_per_image,
                                        const std::vector<int>& ks = {1, 5, 10}) {
  const int64_t n = sim.rows();
  const int64_t m = sim.cols();
  if (m != n * k_per_image) throw UsageError("recall_i2t: caption count must be k_per_image * N");
  std::map<int, double> out;
  std::vector<int> best_rank(size_t(n), 0);
  for (int64_t i = 0; i < n; ++i) {
    int best = int(m) + 1;
    for (int p = 0; p < k_per_image; ++p) {
      const int64_t cap = i * k_per_image + p;
      best = std::min(best,
                      detail::rank_of(m, cap, [&](int64_t j) { return sim(i, j); }));
    }
    best_rank[size_t(i)] = best;
  }
  for (int k : ks) {
    int64_t hits = 0;
    for (int r : best_rank) hits += r <= k;
    out[k] = 100.0 * double(hits) / double(n);
  }
  return out;
}

// Captions query images; caption j's single positive is image j / k_per_image.
inline std::map<int, double> recall_t2i(const MatR<float>& sim, int k_per_image,
                                        const std::vector<int>& ks = {1, 5, 10}) {
  const int64_t n = sim.rows();
  const int64_t m = sim.cols();
  if (m != n * k_per_image) throw UsageError("recall_t2i: caption count must be k_per_image * N");
  std::map<int, double> out;
  std::vector<int> rank(size_t(m), 0);
  for (int64_t j = 0; j < m; ++j) {
    const int64_t pos = j / k_per_image;
    rank[size_t(j)] = detail::rank_of(n, pos, [&](int64_t i) { return sim(i, j); });
  }
  for (int k : ks) {
    int64_t hits = 0;
    for (int r : rank) hits += r <= k;
    out[k] = 100.0 * double(hits) / double(m);
  }
  return out;
}

// Chance-level R@k (percent) under uniformly random rankings.
inline double chance_recall_t2i(int64_t n_images, int k) {
  return 100.0 * double(std::min<int64_t>(k, n_images)) / double(n_images);
}

inline double chance_recall_i2t(int64_t n_images, int k_per_image, int k) {
  const int64_t m = n_images * k_per_image;
  double p_none = 1.0;
  for (int t = 0; t < k && t < m; ++t)
    p_none *= double(m - k_per_image - t) / double(m - t);
  return 100.0 * (1.0 - std::max(0.0, p_none));
}

inline double chance_rsum(int64_t n_images, int k_per_image = 5) {
  double total = 0.0;
  for (int k : {1, 5, 10}) {
    total += chance_recall_i2t(n_images, k_per_image, k);
    total += chance_recall_t2i(n_images, k);
  }
  return total;
}

// Encodes one split (images stamped per the deterministic eval assignment
// when policy == With) and fills a full report.
inline RetrievalReport evaluate(model::DualEncoder<float>& m,
                                const datagen::DatasetManifest& manifest, datagen::Split split,
                                const shortcuts::ShortcutSpec& spec, Policy policy,
                                const shortcuts::DigitGlyphBank& bank, uint64_t seed,
                                const std::string& config_hash = "") {
  if (policy == Policy::With && spec.mode != shortcuts::Mode::Unique &&
      spec.mode != shortcuts::Mode::NBits)
    throw UsageError("evaluate: policy=with requires a unique or nbits shortcut spec");
  const auto entries = manifest.split_entries(split);
  if (entries.empty()) throw UsageError("evaluate: split has no entries");
  const int k_per = int(entries.front()->captions.size());

  shortcuts::ShortcutSpec eval_spec = spec;
  eval_spec.eval_with_shortcuts = policy == Policy::With;

  const int64_t n = int64_t(entries.size());
  MatR<float> z_img(n, m.cfg.d);
  MatR<float> z_cap(n * k_per, m.cfg.d);
  const int chunk = 256;
  std::vector<Raster> images;
  std::vector<std::vector<int>> captions;
  int64_t img_row = 0, cap_row = 0;
  for (int64_t start = 0; start < n; start += chunk) {
    const int64_t stop = std::min(n, start + chunk);
    images.clear();
    captions.clear();
    for (int64_t i = start; i < stop; ++i) {
      const auto& e = *entries[size_t(i)];
      Raster img = read_pgm(manifest.image_file(e));
      if (int(e.captions.size()) != k_per)
        throw UsageError("evaluate: inconsistent captions-per-image in split");
      if (policy == Policy::With) {
        const auto a = shortcuts::assign_eval_shortcut(eval_spec, e.tuple_id);
        rng::Stream glyph_rng({seed, 0xE7A1ull, uint64_t(e.tuple_id)});
        img = shortcuts::inject_image(img, a, bank, glyph_rng);
        for (const auto& c : e.captions)
          captions.push_back(shortcuts::inject_caption_ids(
              datagen::tokenize(c, manifest.vocabulary), a, manifest.vocabulary));
      } else {
        for (const auto& c : e.captions)
          captions.push_back(datagen::tokenize(c, manifest.vocabulary));
      }
      images.push_back(std::move(img));
    }
    const auto zi = m.img.forward(m.params, model::rasters_to_matrix<float>(images),
                                  int(images.size()));
    z_img.middleRows(img_row, zi.rows()) = zi;
    img_row += zi.rows();
    const auto zc = m.cap.forward(m.params, captions);
    z_cap.middleRows(cap_row, zc.rows()) = zc;
    cap_row += zc.rows();
  }

  const MatR<float> sim = similarity_matrix(z_img, z_cap);
  RetrievalReport rep;
  rep.i2t = recall_i2t(sim, k_per);
  rep.t2i = recall_t2i(sim, k_per);
  rep.policy = policy;
  rep.seed = seed;
  rep.config_hash = config_hash;
  rep.rsum = 0.0;
  for (const auto& [k, v] : rep.i2t) rep.rsum += v;
  for (const auto& [k, v] : rep.t2i) rep.rsum += v;
  return rep;
}

// --- serialization -----------------------------------------------------------

struct ReportMeta {
  std::string dataset;
  std::string mode;   // shortcut mode name
  int n_bits = 0;
  std::string loss;
};

inline nlohmann::json report_to_json(const RetrievalReport& r) {
  nlohmann::json metrics;
  for (const auto& [k, v] : r.i2t) metrics["r" + std::to_string(k) + "_i2t"] = v;
  for (const auto& [k, v] : r.t2i) metrics["r" + std::to_string(k) + "_t2i"] = v;
  metrics["rsum"] = r.rsum;
  return {{"metrics", metrics},
          {"policy", policy_name(r.policy)},
          {"seed", r.seed},
          {"config_hash", r.config_hash},
          {"build_id", kBuildId}};
}

inline std::string csv_header() {
  return "dataset,mode,n_bits,loss,policy,r1_i2t,r5_i2t,r10_i2t,r1_t2i,r5_t2i,r10_t2i,rsum,seed";
}

inline std::string csv_row(const ReportMeta& meta, const RetrievalReport& r) {
  std::ostringstream os;
  os << meta.dataset << "," << meta.mode << "," << meta.n_bits << "," << meta.loss << ","
     << policy_name(r.policy);
  for (int k : {1, 5, 10}) os << "," << r.i2t.at(k);
  for (int k : {1, 5, 10}) os << "," << r.t2i.at(k);
  os << "," << r.rsum << "," << r.seed;
  return os.str();
}

}  // namespace svl::eval

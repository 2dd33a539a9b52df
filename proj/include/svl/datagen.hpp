#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "svl/pgm.hpp"
#include "svl/rng.hpp"
#include "svl/tensor.hpp"

// Synthetic multi-caption image dataset with controlled shared and
// caption-specific clauses. Each scene is a handful of glyph objects on a
// grid; all k captions verbalize the shape counts (shared), and each caption
// additionally verbalizes one attribute of one object that no sibling
// mentions (caption-specific).

namespace svl::datagen {

inline constexpr int kStripHeight = 16;  // reserved for shortcut overlays
inline constexpr int kGridRows = 3;
inline constexpr int kGridCols = 3;
inline constexpr int kNumShapes = 8;
inline constexpr int64_t kMaxTuples = 999999;  // 6-digit shortcut space

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- vocabulary / tokenization ----------------------------------------------

struct Vocabulary {
  std::vector<std::string> tokens;
  std::map<std::string, int> ids;

  int id(const std::string& t) const {
    auto it = ids.find(t);
    return it == ids.end() ? unk_id() : it->second;
  }
  bool contains(const std::string& t) const { return ids.count(t) != 0; }
  int pad_id() const { return 0; }
  int unk_id() const { return 1; }
  int size() const { return int(tokens.size()); }

  static Vocabulary from_tokens(std::vector<std::string> toks) {
    Vocabulary v;
    v.tokens = std::move(toks);
    for (size_t i = 0; i < v.tokens.size(); ++i) v.ids[v.tokens[i]] = int(i);
    if (v.tokens.size() < 2 || v.tokens[0] != "<pad>" || v.tokens[1] != "<unk>")
      throw UsageError("vocabulary must start with <pad>, <unk>");
    return v;
  }

  static Vocabulary builtin();

  void save(const std::filesystem::path& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write vocabulary: " + path.string());
    for (const auto& t : tokens) f << t << "\n";
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open vocabulary: " + path.string());
    std::vector<std::string> toks;
    std::string line;
    while (std::getline(f, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) toks.push_back(line);
    }
    return from_tokens(std::move(toks));
  }

  bool operator==(const Vocabulary& o) const { return tokens == o.tokens; }
};

inline const std::array<std::string, kNumShapes>& shape_words() {
  static const std::array<std::string, kNumShapes> w = {
      "box", "disc", "ring", "cross", "diamond", "triangle", "tee", "ell"};
  return w;
}

inline Vocabulary Vocabulary::builtin() {
  std::vector<std::string> t = {"<pad>", "<unk>", "a",   "scene", "with", "and",
                                "the",   "is",    "object", "objects"};
  for (const char* c : {"one", "two", "three", "four"}) t.push_back(c);
  for (const auto& s : shape_words()) t.push_back(s);
  for (const char* a : {"small", "large", "dim", "bright"}) t.push_back(a);
  for (int d = 0; d <= 9; ++d) t.push_back(std::to_string(d));
  return from_tokens(std::move(t));
}

// Whitespace split with lowercase folding.
inline std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(char(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab) {
  std::vector<int> out;
  for (const auto& t : split_tokens(text)) out.push_back(vocab.id(t));
  return out;
}

// --- scenes ------------------------------------------------------------------

struct SceneObject {
  int shape = 0;      // index into shape_words()
  int size = 0;       // 0 small, 1 large
  int intensity = 0;  // 0 dim, 1 bright
  int cell = 0;       // row-major grid cell
  int jy = 0, jx = 0; // small placement jitter, pixels
};

struct SceneSpec {
  std::vector<SceneObject> objects;
};

enum class Split { Train, Val, Test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    default: return "test";
  }
}

inline Split split_from_name(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ParseError("unknown split name: " + s);
}

struct SceneTuple {
  int64_t tuple_id = 0;
  Raster image;
  std::vector<std::string> captions;
  Split split = Split::Train;
};

// --- rendering ---------------------------------------------------------------

namespace detail {

inline void draw_glyph(Raster& img, int shape, int cy, int cx, int r, float value) {
  const int th = std::max(1, r / 3);
  for (int dy = -r; dy <= r; ++dy) {
    const int y = cy + dy;
    if (y < kStripHeight || y >= img.h) continue;
    for (int dx = -r; dx <= r; ++dx) {
      const int x = cx + dx;
      if (x < 0 || x >= img.w) continue;
      bool on = false;
      switch (shape) {
        case 0: on = true; break;                                   // box
        case 1: on = dy * dy + dx * dx <= r * r; break;             // disc
        case 2: {                                                   // ring
          const int d2 = dy * dy + dx * dx;
          const int ri = std::max(0, r - 2 * th);
          on = d2 <= r * r && d2 >= ri * ri;
          break;
        }
        case 3: on = std::abs(dx) <= th || std::abs(dy) <= th; break;     // cross
        case 4: on = std::abs(dx) + std::abs(dy) <= r; break;             // diamond
        case 5: on = std::abs(dx) <= (dy + r) / 2; break;                 // triangle
        case 6: on = dy <= -r + 2 * th || std::abs(dx) <= th; break;      // tee
        case 7: on = dx <= -r + 2 * th || dy >= r - 2 * th; break;        // ell
        default: break;
      }
      if (on) img.at(y, x) = std::max(img.at(y, x), value);
    }
  }
}

}  // namespace detail

// Glyphs go into grid cells below the reserved top strip; the strip stays
// blank for shortcut overlays.
inline Raster render_scene(const SceneSpec& spec, int h, int w) {
  if (h < 64 || w < 64) throw UsageError("render_scene: image size must be at least 64x64");
  if (int(spec.objects.size()) > kGridRows * kGridCols)
    throw UsageError("render_scene: too many objects for grid");
  Raster img(h, w);
  const double cell_h = double(h - kStripHeight) / kGridRows;
  const double cell_w = double(w) / kGridCols;
  for (const auto& obj : spec.objects) {
    const int row = obj.cell / kGridCols;
    const int col = obj.cell % kGridCols;
    const int cy = int(std::lround(kStripHeight + (row + 0.5) * cell_h)) + obj.jy;
    const int cx = int(std::lround((col + 0.5) * cell_w)) + obj.jx;
    const int r = obj.size == 0 ? 5 : 9;
    const float value = obj.intensity == 0 ? 0.45f : 0.95f;
    detail::draw_glyph(img, obj.shape, cy, cx, r, value);
  }
  return img;
}

// --- captions ----------------------------------------------------------------

// An (object index, attribute kind) slot; attribute 0 = size, 1 = intensity.
struct CaptionSlot {
  int object = 0;
  int attr = 0;
};

inline std::vector<std::string> shared_clauses(const SceneSpec& spec) {
  static const char* count_words[] = {"", "one", "two", "three", "four"};
  std::array<int, kNumShapes> counts{};
  for (const auto& o : spec.objects) counts[o.shape]++;
  std::vector<std::string> out;
  for (int s = 0; s < kNumShapes; ++s) {
    if (counts[s] == 0) continue;
    const std::string noun = counts[s] == 1 ? "object" : "objects";
    out.push_back(std::string(count_words[counts[s]]) + " " + shape_words()[s] + " " + noun);
  }
  return out;
}

inline std::string specific_clause(const SceneSpec& spec, const CaptionSlot& slot) {
  const auto& obj = spec.objects[slot.object];
  const char* value = slot.attr == 0 ? (obj.size == 0 ? "small" : "large")
                                     : (obj.intensity == 0 ? "dim" : "bright");
  return "the " + shape_words()[obj.shape] + " is " + value;
}

inline std::string caption_text(const SceneSpec& spec, const CaptionSlot& slot) {
  std::string s = "a scene with";
  const auto shared = shared_clauses(spec);
  for (size_t i = 0; i < shared.size(); ++i) {
    if (i > 0) s += " and";
    s += " " + shared[i];
  }
  return s + " " + specific_clause(spec, slot);
}

// Samples a scene whose 2n (object, attribute) slots yield at least k
// distinct specific clauses, and picks k of them. Distinctness is at the
// surface-form level so each caption has a clause no sibling contains.
inline std::pair<SceneSpec, std::vector<CaptionSlot>> sample_scene(rng::Stream& rng, int k) {
  const int min_objects = std::max(2, (k + 1) / 2);
  for (int attempt = 0; attempt < 200; ++attempt) {
    SceneSpec spec;
    const int n = min_objects + int(rng.uniform_int(uint64_t(4 - min_objects + 1)));
    std::vector<int> cells(kGridRows * kGridCols);
    for (size_t i = 0; i < cells.size(); ++i) cells[i] = int(i);
    rng.shuffle(cells);
    for (int i = 0; i < n; ++i) {
      SceneObject o;
      o.shape = int(rng.uniform_int(kNumShapes));
      o.size = int(rng.uniform_int(2));
      o.intensity = int(rng.uniform_int(2));
      o.cell = cells[i];
      o.jy = int(rng.uniform_int(5)) - 2;
      o.jx = int(rng.uniform_int(5)) - 2;
      spec.objects.push_back(o);
    }
    std::vector<CaptionSlot> slots;
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < 2; ++a) slots.push_back({i, a});
    rng.shuffle(slots);
    std::vector<CaptionSlot> chosen;
    std::set<std::string> used;
    for (const auto& slot : slots) {
      if (used.insert(specific_clause(spec, slot)).second) chosen.push_back(slot);
      if (int(chosen.size()) == k) break;
    }
    if (int(chosen.size()) == k) return {spec, chosen};
  }
  throw std::runtime_error("sample_scene: could not realize k distinct specific clauses");
}

// --- manifest ----------------------------------------------------------------

struct ManifestEntry {
  int64_t tuple_id = 0;
  std::string image_path;  // relative to the manifest directory
  std::vector<std::string> captions;
  Split split = Split::Train;

  bool operator==(const ManifestEntry& o) const {
    return tuple_id == o.tuple_id && image_path == o.image_path && captions == o.captions &&
           split == o.split;
  }
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  Vocabulary vocabulary;
  int image_h = 0, image_w = 0;
  std::filesystem::path root;  // directory holding manifest.jsonl

  std::filesystem::path image_file(const ManifestEntry& e) const { return root / e.image_path; }

  std::vector<const ManifestEntry*> split_entries(Split s) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
      if (e.split == s) out.push_back(&e);
    return out;
  }

  bool operator==(const DatasetManifest& o) const {
    return entries == o.entries && vocabulary == o.vocabulary && image_h == o.image_h &&
           image_w == o.image_w;
  }
};

struct GenConfig {
  int64_t n_tuples = 2400;
  int k = 5;
  uint64_t seed = 0;
  double train_frac = 2000.0 / 2400.0;
  double val_frac = 200.0 / 2400.0;
  double test_frac = 200.0 / 2400.0;
  int image_h = 96;
  int image_w = 96;

  void validate() const {
    if (n_tuples < 10) throw UsageError("generate_dataset: n_tuples must be >= 10");
    if (n_tuples > kMaxTuples)
      throw UsageError("generate_dataset: n_tuples exceeds the 6-digit shortcut space");
    if (k < 2 || k > 8) throw UsageError("generate_dataset: k must be in [2, 8]");
    const double total = train_frac + val_frac + test_frac;
    if (std::abs(total - 1.0) > 1e-9)
      throw UsageError("generate_dataset: split fractions must sum to 1");
    if (train_frac < 0 || val_frac < 0 || test_frac < 0)
      throw UsageError("generate_dataset: negative split fraction");
    if (image_h < 64 || image_w < 64)
      throw UsageError("generate_dataset: image size must be at least 64x64");
  }
};

// One tuple, deterministic in (seed, tuple_id).
inline SceneTuple generate_tuple(const GenConfig& cfg, int64_t tuple_id, Split split) {
  rng::Stream rng({cfg.seed, 0xDA7A5E7ull, uint64_t(tuple_id)});
  auto [spec, slots] = sample_scene(rng, cfg.k);
  SceneTuple t;
  t.tuple_id = tuple_id;
  t.split = split;
  t.image = render_scene(spec, cfg.image_h, cfg.image_w);
  for (const auto& slot : slots) t.captions.push_back(caption_text(spec, slot));
  return t;
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& dir) {
  std::ofstream f(dir / "manifest.jsonl");
  if (!f) throw std::runtime_error("cannot write manifest in " + dir.string());
  for (const auto& e : m.entries) {
    nlohmann::json j;
    j["tuple_id"] = e.tuple_id;
    j["image_path"] = e.image_path;
    j["captions"] = e.captions;
    j["split"] = split_name(e.split);
    f << j.dump() << "\n";
  }
  m.vocabulary.save(dir / "vocab.txt");
}

inline DatasetManifest generate_dataset(const GenConfig& cfg,
                                        const std::filesystem::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw std::runtime_error("cannot create output directory: " + out_dir.string());

  const int64_t n_train = llround(cfg.train_frac * double(cfg.n_tuples));
  const int64_t n_val = llround(cfg.val_frac * double(cfg.n_tuples));

  DatasetManifest m;
  m.vocabulary = Vocabulary::builtin();
  m.image_h = cfg.image_h;
  m.image_w = cfg.image_w;
  m.root = out_dir;
  for (int64_t id = 0; id < cfg.n_tuples; ++id) {
    const Split split = id < n_train ? Split::Train : (id < n_train + n_val ? Split::Val : Split::Test);
    SceneTuple t = generate_tuple(cfg, id, split);
    char name[32];
    std::snprintf(name, sizeof(name), "images/img_%06lld.pgm", (long long)id);
    write_pgm(out_dir / name, t.image);
    m.entries.push_back({id, name, std::move(t.captions), split});
  }
  save_manifest(m, out_dir);
  return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw std::runtime_error("cannot open manifest: " + manifest_path.string());
  DatasetManifest m;
  m.root = manifest_path.parent_path();
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    ManifestEntry e;
    try {
      e.tuple_id = j.at("tuple_id").get<int64_t>();
      e.image_path = j.at("image_path").get<std::string>();
      e.captions = j.at("captions").get<std::vector<std::string>>();
      e.split = split_from_name(j.at("split").get<std::string>());
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError("manifest line " + std::to_string(lineno) + ": " + ex.what());
    } catch (const ParseError& ex) {
      throw ParseError("manifest line " + std::to_string(lineno) + ": " + ex.what());
    }
    if (e.captions.empty())
      throw ParseError("manifest line " + std::to_string(lineno) + ": captions must be non-empty");
    m.entries.push_back(std::move(e));
  }
  // dense tuple ids 0..N-1
  std::vector<bool> seen(m.entries.size(), false);
  for (const auto& e : m.entries) {
    if (e.tuple_id < 0 || e.tuple_id >= int64_t(m.entries.size()) || seen[size_t(e.tuple_id)])
      throw ParseError("manifest: tuple_ids must be dense 0..N-1 (bad id " +
                       std::to_string(e.tuple_id) + ")");
    seen[size_t(e.tuple_id)] = true;
  }
  m.vocabulary = Vocabulary::load(m.root / "vocab.txt");
  for (int d = 0; d <= 9; ++d)
    if (!m.vocabulary.contains(std::to_string(d)))
      throw ParseError("manifest vocabulary: missing reserved digit token '" +
                       std::to_string(d) + "'");
  if (!m.entries.empty()) {
    const Raster first = read_pgm(m.image_file(m.entries.front()));
    m.image_h = first.h;
    m.image_w = first.w;
  }
  return m;
}

}  // namespace svl::datagen

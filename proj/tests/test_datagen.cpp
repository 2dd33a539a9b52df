#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "support/oracles.hpp"
#include "svl/datagen.hpp"

using namespace svl::datagen;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("svl_datagen_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<uint8_t> file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// 4-connected component count on pixels > 0.
int connected_components(const svl::Raster& img, int y_from) {
  std::vector<int> label(img.v.size(), 0);
  int count = 0;
  std::vector<std::pair<int, int>> stack;
  for (int y = y_from; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      if (img.at(y, x) <= 0.0f || label[size_t(y) * img.w + x]) continue;
      ++count;
      stack.push_back({y, x});
      while (!stack.empty()) {
        auto [cy, cx] = stack.back();
        stack.pop_back();
        if (cy < y_from || cy >= img.h || cx < 0 || cx >= img.w) continue;
        if (img.at(cy, cx) <= 0.0f || label[size_t(cy) * img.w + cx]) continue;
        label[size_t(cy) * img.w + cx] = count;
        stack.push_back({cy + 1, cx});
        stack.push_back({cy - 1, cx});
        stack.push_back({cy, cx + 1});
        stack.push_back({cy, cx - 1});
      }
    }
  return count;
}

}  // namespace

TEST_CASE("tokenize splits on whitespace and folds case") {
  const auto toks = split_tokens("A player  up\tto bat");
  CHECK(toks == std::vector<std::string>{"a", "player", "up", "to", "bat"});
  const auto vocab = Vocabulary::builtin();
  const auto ids = tokenize("A player up to bat", vocab);
  CHECK(ids.size() == 5);
  CHECK(ids[0] == vocab.id("a"));
  for (size_t i = 1; i < ids.size(); ++i) CHECK(ids[i] == vocab.unk_id());
}

TEST_CASE("builtin vocabulary reserves pad, unk and the ten digits") {
  const auto vocab = Vocabulary::builtin();
  CHECK(vocab.tokens[0] == "<pad>");
  CHECK(vocab.tokens[1] == "<unk>");
  for (int d = 0; d <= 9; ++d) CHECK(vocab.contains(std::to_string(d)));
}

TEST_CASE("render_scene basics") {
  SceneSpec empty;
  const auto blank = render_scene(empty, 96, 96);
  for (float v : blank.v) CHECK(v == 0.0f);

  SceneSpec three;
  three.objects = {{0, 1, 1, 0, 0, 0}, {1, 0, 0, 4, 1, -1}, {5, 1, 0, 8, -2, 2}};
  const auto a = render_scene(three, 96, 96);
  const auto b = render_scene(three, 96, 96);
  CHECK(a == b);
  CHECK(connected_components(a, 0) == 3);
  // strip stays blank
  for (int y = 0; y < kStripHeight; ++y)
    for (int x = 0; x < 96; ++x) CHECK(a.at(y, x) == 0.0f);

  SceneSpec overfull;
  for (int i = 0; i < 10; ++i) overfull.objects.push_back({0, 0, 0, i % 9, 0, 0});
  CHECK_THROWS_AS(render_scene(overfull, 96, 96), svl::UsageError);
  CHECK_THROWS_AS(render_scene(empty, 32, 96), svl::UsageError);
}

TEST_CASE("every tuple satisfies the shared/unique clause structure") {
  GenConfig cfg;
  cfg.n_tuples = 40;
  cfg.seed = 3;
  for (int64_t id = 0; id < cfg.n_tuples; ++id) {
    svl::rng::Stream rng({cfg.seed, 0xDA7A5E7ull, uint64_t(id)});
    auto [spec, slots] = sample_scene(rng, cfg.k);
    REQUIRE(int(slots.size()) == cfg.k);
    const auto shared = shared_clauses(spec);
    REQUIRE(!shared.empty());
    std::set<std::string> uniques;
    for (const auto& slot : slots) uniques.insert(specific_clause(spec, slot));
    CHECK(int(uniques.size()) == cfg.k);  // each caption has its own clause
    // removing the unique clause leaves a sub-bag of the sibling clause union
    for (int j = 0; j < cfg.k; ++j) {
      std::set<std::string> sibling_clauses;
      for (int o = 0; o < cfg.k; ++o) {
        if (o == j) continue;
        for (const auto& c : shared) sibling_clauses.insert(c);
        sibling_clauses.insert(specific_clause(spec, slots[size_t(o)]));
      }
      for (const auto& c : shared) CHECK(sibling_clauses.count(c) == 1);
      CHECK(sibling_clauses.count(specific_clause(spec, slots[size_t(j)])) == 0);
    }
  }
}

TEST_CASE("generated captions stay inside the vocabulary") {
  GenConfig cfg;
  cfg.n_tuples = 30;
  cfg.seed = 11;
  const auto vocab = Vocabulary::builtin();
  for (int64_t id = 0; id < cfg.n_tuples; ++id) {
    const auto t = generate_tuple(cfg, id, Split::Train);
    REQUIRE(int(t.captions.size()) == cfg.k);
    for (const auto& c : t.captions)
      for (int tok : tokenize(c, vocab)) CHECK(tok != vocab.unk_id());
  }
}

TEST_CASE("generate_dataset is deterministic and round-trips") {
  GenConfig cfg;
  cfg.n_tuples = 24;
  cfg.k = 5;
  cfg.seed = 7;
  cfg.train_frac = 0.5;
  cfg.val_frac = 0.25;
  cfg.test_frac = 0.25;

  const auto dir_a = fresh_dir("a");
  const auto dir_b = fresh_dir("b");
  const auto ma = generate_dataset(cfg, dir_a);
  const auto mb = generate_dataset(cfg, dir_b);
  CHECK(ma == mb);
  for (const auto& e : ma.entries)
    CHECK(file_bytes(dir_a / e.image_path) == file_bytes(dir_b / e.image_path));

  const auto loaded = load_manifest(dir_a / "manifest.jsonl");
  CHECK(loaded == ma);

  // splits are disjoint and cover all ids
  std::set<int64_t> seen;
  for (auto s : {Split::Train, Split::Val, Split::Test})
    for (const auto* e : loaded.split_entries(s)) CHECK(seen.insert(e->tuple_id).second);
  CHECK(int64_t(seen.size()) == cfg.n_tuples);
}

TEST_CASE("generation config validation") {
  GenConfig cfg;
  cfg.n_tuples = 5;
  CHECK_THROWS_AS(cfg.validate(), svl::UsageError);
  cfg.n_tuples = 1000001;
  CHECK_THROWS_AS(cfg.validate(), svl::UsageError);
  cfg.n_tuples = 100;
  cfg.val_frac = 0.9;  // fractions no longer sum to 1
  CHECK_THROWS_AS(cfg.validate(), svl::UsageError);
}

TEST_CASE("manifest parse errors carry line numbers") {
  const auto dir = fresh_dir("parse");
  {
    GenConfig cfg;
    cfg.n_tuples = 12;
    generate_dataset(cfg, dir);
  }
  // corrupt line 3
  std::ifstream in(dir / "manifest.jsonl");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  in.close();
  lines[2] = "{\"tuple_id\": \"oops\"}";
  std::ofstream out(dir / "manifest.jsonl");
  for (const auto& l : lines) out << l << "\n";
  out.close();
  CHECK_THROWS_WITH(load_manifest(dir / "manifest.jsonl"),
                    Catch::Matchers::ContainsSubstring("line 3"));
}

TEST_CASE("pgm round trip preserves bytes") {
  svl::Raster r(17, 23);
  svl::rng::Stream rng({1, 2});
  for (auto& v : r.v) v = float(rng.uniform());
  const auto dir = fresh_dir("pgm");
  write_pgm(dir / "x.pgm", r);
  const auto back = svl::read_pgm(dir / "x.pgm");
  REQUIRE(back.h == r.h);
  REQUIRE(back.w == r.w);
  write_pgm(dir / "y.pgm", back);
  CHECK(file_bytes(dir / "x.pgm") == file_bytes(dir / "y.pgm"));
}

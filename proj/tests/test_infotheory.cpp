#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "support/oracles.hpp"
#include "svl/infotheory.hpp"

using namespace svl::infotheory;
using svl::rng::Stream;

namespace {

DiscreteJoint bit_joint(const std::function<double(int, int, int)>& p) {
  DiscreteJoint j;
  j.x_labels = {"0", "1"};
  j.ca_labels = {"0", "1"};
  j.cb_labels = {"0", "1"};
  j.pmf.assign(8, 0.0);
  for (int x = 0; x < 2; ++x)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) j.p(x, a, b) = p(x, a, b);
  j.validate();
  return j;
}

const DiscreteJoint kIndependent =
    bit_joint([](int, int, int) { return 1.0 / 8.0; });
// x == c_A == c_B, fair
const DiscreteJoint kAllEqual =
    bit_joint([](int x, int a, int b) { return (x == a && a == b) ? 0.5 : 0.0; });
// c_B = x XOR c_A, x and c_A independent fair bits
const DiscreteJoint kXor =
    bit_joint([](int x, int a, int b) { return b == (x ^ a) ? 0.25 : 0.0; });

}  // namespace

TEST_CASE("entropy on elementary joints") {
  CHECK(entropy(kIndependent, kX) == Catch::Approx(1.0).margin(1e-12));
  // degenerate variable: all mass on one outcome
  const auto degenerate = bit_joint([](int x, int a, int b) {
    return (x == 0) ? ((a == 0 && b == 0) ? 1.0 : 0.0) : 0.0;
  });
  CHECK(entropy(degenerate, kX) == Catch::Approx(0.0).margin(1e-12));
  CHECK_THROWS_AS(entropy(kIndependent, VarSet{}), svl::UsageError);
}

TEST_CASE("entropy of the uniform 16-outcome marginal matches the direct sum") {
  const auto toy = oracles::toy_world();
  // independent oracle: -sum p log2 p over the x-marginal of the raw table
  std::vector<double> px(size_t(toy.nx()), 0.0);
  for (int x = 0; x < toy.nx(); ++x)
    for (int a = 0; a < toy.na(); ++a)
      for (int b = 0; b < toy.nb(); ++b) px[size_t(x)] += toy.p(x, a, b);
  double expect = 0.0;
  for (double p : px)
    if (p > 0) expect -= p * std::log2(p);
  CHECK(expect == Catch::Approx(4.0).margin(1e-12));
  CHECK(entropy(toy, kX) == Catch::Approx(expect).margin(1e-12));
}

TEST_CASE("mutual information basics") {
  CHECK(mutual_information(kIndependent, kX, kCA) == Catch::Approx(0.0).margin(1e-12));
  CHECK(mutual_information(kAllEqual, kX, kCA) == Catch::Approx(1.0).margin(1e-12));
  CHECK(mutual_information(oracles::toy_world(), kX, kCA) == Catch::Approx(2.0).margin(1e-9));
  CHECK_THROWS_AS(mutual_information(kIndependent, kX, kX), svl::UsageError);
}

TEST_CASE("conditional mutual information") {
  // c independent of (a, b) with a == b: conditioning is irrelevant
  DiscreteJoint j;
  j.x_labels = {"0", "1"};
  j.ca_labels = {"0", "1"};
  j.cb_labels = {"0", "1"};
  j.pmf.assign(8, 0.0);
  for (int x = 0; x < 2; ++x)
    for (int b = 0; b < 2; ++b) j.p(x, x, b) = 0.25;
  j.validate();
  CHECK(conditional_mi(j, kX, kCA, kCB) == Catch::Approx(1.0).margin(1e-12));
  CHECK(conditional_mi(kAllEqual, kX, kCA, kCB) == Catch::Approx(0.0).margin(1e-12));
  CHECK(conditional_mi(oracles::toy_world(), kX, kCA, kCB) == Catch::Approx(1.0).margin(1e-9));
  CHECK_THROWS_AS(conditional_mi(kAllEqual, kX, kCA, kCA), svl::UsageError);
}

TEST_CASE("interaction information signs") {
  CHECK(interaction_information(kIndependent) == Catch::Approx(0.0).margin(1e-12));
  CHECK(interaction_information(kAllEqual) == Catch::Approx(1.0).margin(1e-12));
  CHECK(interaction_information(kXor) == Catch::Approx(-1.0).margin(1e-12));
}

TEST_CASE("interaction information is symmetric under variable permutation") {
  Stream rng({42, 0xABC});
  for (int trial = 0; trial < 25; ++trial) {
    const auto j = random_joint(rng, 3, 4, 2);
    // permute (x, ca, cb) -> (cb, x, ca)
    DiscreteJoint perm;
    perm.x_labels = j.cb_labels;
    perm.ca_labels = j.x_labels;
    perm.cb_labels = j.ca_labels;
    perm.pmf.assign(j.pmf.size(), 0.0);
    for (int x = 0; x < j.nx(); ++x)
      for (int a = 0; a < j.na(); ++a)
        for (int b = 0; b < j.nb(); ++b) perm.p(b, x, a) = j.p(x, a, b);
    perm.validate();
    CHECK(interaction_information(j) ==
          Catch::Approx(interaction_information(perm)).margin(1e-9));
  }
}

TEST_CASE("decompose on the toy world and degenerate joints") {
  const auto d = decompose(oracles::toy_world());
  CHECK(d.ca_specific == Catch::Approx(1.0).margin(1e-9));
  CHECK(d.cb_specific == Catch::Approx(1.0).margin(1e-9));
  CHECK(d.shared == Catch::Approx(1.0).margin(1e-9));
  CHECK(d.task_irrelevant == Catch::Approx(1.0).margin(1e-9));
  CHECK(d.task_relevant == Catch::Approx(3.0).margin(1e-9));

  const auto ind = decompose(kIndependent);
  CHECK(ind.task_relevant == Catch::Approx(0.0).margin(1e-9));
  CHECK(ind.task_irrelevant == Catch::Approx(entropy(kIndependent, kX)).margin(1e-9));

  const auto eq = decompose(kAllEqual);
  CHECK(eq.shared == Catch::Approx(entropy(kAllEqual, kX)).margin(1e-9));
  CHECK(eq.ca_specific == Catch::Approx(0.0).margin(1e-9));
  CHECK(eq.cb_specific == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("decomposition identities on random joints") {
  Stream rng({7, 0xDEC});
  for (int trial = 0; trial < 120; ++trial) {
    const int nx = 2 + int(rng.uniform_int(7));
    const int na = 2 + int(rng.uniform_int(7));
    const int nb = 2 + int(rng.uniform_int(7));
    const auto j = random_joint(rng, nx, na, nb);
    const auto d = decompose(j);
    // Eq-1 identity: R == H(x) - H(x | c_A, c_B)
    const double r = entropy(j, kX) -
                     (entropy(j, kX | kCA | kCB) - entropy(j, kCA | kCB));
    CHECK(d.task_relevant == Catch::Approx(r).margin(1e-9));
    // chain rule: I(x; cA cB) == CMI_A + CMI_B + interaction
    const double joint_mi = mutual_information(j, kX, kCA | kCB);
    CHECK(joint_mi == Catch::Approx(d.ca_specific + d.cb_specific + d.shared).margin(1e-9));
    CHECK(d.ca_specific >= -1e-12);
    CHECK(d.cb_specific >= -1e-12);
    CHECK(d.task_irrelevant >= -1e-12);
  }
}

TEST_CASE("minimal sufficient representation") {
  const auto toy = oracles::toy_world();
  const auto rep = minimal_sufficient_representation(toy, Var::CA);
  CHECK(rep.num_classes == 4);  // grouped by (s, a)
  CHECK(representation_mi(toy, rep, kCA) == Catch::Approx(2.0).margin(1e-9));

  // deterministic bijection: identity partition on the support
  const auto bij = kAllEqual;
  const auto rep_bij = minimal_sufficient_representation(bij, Var::CA);
  CHECK(rep_bij.num_classes == 2);
  CHECK(representation_mi(bij, rep_bij, kCA) ==
        Catch::Approx(mutual_information(bij, kX, kCA)).margin(1e-9));

  // independence: one class, zero information
  const auto rep_ind = minimal_sufficient_representation(kIndependent, Var::CA);
  CHECK(rep_ind.num_classes == 1);
  CHECK(representation_mi(kIndependent, rep_ind, kCA) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("task optimal representation") {
  const auto toy = oracles::toy_world();
  const auto rep = task_optimal_representation(toy);
  CHECK(rep.num_classes == 8);  // grouped by (s, a, b)
  CHECK(representation_mi(toy, rep, kCA | kCB) == Catch::Approx(3.0).margin(1e-9));
  CHECK(representation_mi(toy, rep, kCA) ==
        Catch::Approx(mutual_information(toy, kX, kCA)).margin(1e-9));
  CHECK(representation_mi(toy, rep, kCB) ==
        Catch::Approx(mutual_information(toy, kX, kCB)).margin(1e-9));

  // duplicated caption: coincides with the minimally sufficient partition
  DiscreteJoint dup;
  dup.x_labels = {"0", "1", "2", "3"};
  dup.ca_labels = {"0", "1"};
  dup.cb_labels = {"0", "1"};
  dup.pmf.assign(16, 0.0);
  for (int x = 0; x < 4; ++x) dup.p(x, x / 2, x / 2) = 0.25;
  dup.validate();
  const auto opt = task_optimal_representation(dup);
  const auto min_a = minimal_sufficient_representation(dup, Var::CA);
  REQUIRE(opt.partition.size() == min_a.partition.size());
  // same grouping up to relabeling
  for (size_t i = 0; i < opt.partition.size(); ++i)
    for (size_t k = 0; k < opt.partition.size(); ++k)
      CHECK((opt.partition[i] == opt.partition[k]) ==
            (min_a.partition[i] == min_a.partition[k]));

  CHECK(task_optimal_representation(kIndependent).num_classes == 1);
}

TEST_CASE("sufficiency holds on random joints") {
  Stream rng({11, 0x5FF});
  for (int trial = 0; trial < 60; ++trial) {
    const auto j = random_joint(rng, 2 + int(rng.uniform_int(7)), 2 + int(rng.uniform_int(7)),
                                2 + int(rng.uniform_int(7)));
    for (Var which : {Var::CA, Var::CB}) {
      const auto rep = minimal_sufficient_representation(j, which);
      const VarSet c = which == Var::CA ? kCA : kCB;
      CHECK(representation_mi(j, rep, c) ==
            Catch::Approx(mutual_information(j, kX, c)).margin(1e-9));
    }
  }
}

TEST_CASE("brute-force minimality of the sufficient partition") {
  Stream rng({23, 0xB3});
  for (int trial = 0; trial < 8; ++trial) {
    const int nx = 4 + int(rng.uniform_int(3));  // Bell(6) = 203 partitions max
    const auto j = random_joint(rng, nx, 2 + int(rng.uniform_int(2)), 2);
    const auto rep = minimal_sufficient_representation(j, Var::CA);
    const double target_mi = mutual_information(j, kX, kCA);
    const double h_min = representation_entropy(j, rep);
    double best_h = 1e9;
    oracles::for_each_partition(nx, [&](const std::vector<int>& labels) {
      Representation cand;
      cand.partition = labels;
      cand.num_classes = 1 + *std::max_element(labels.begin(), labels.end());
      if (std::abs(representation_mi(j, cand, kCA) - target_mi) < 1e-9)
        best_h = std::min(best_h, representation_entropy(j, cand));
    });
    CHECK(h_min <= best_h + 1e-9);
  }
}

TEST_CASE("theorem verification on the toy world") {
  const auto rep = verify_theorem1(oracles::toy_world());
  CHECK(rep.h2_holds);
  CHECK(rep.gap_exists);
  CHECK(rep.i_opt == Catch::Approx(3.0).margin(1e-9));
  CHECK(rep.i_min_a == Catch::Approx(2.0).margin(1e-9));
  CHECK(rep.i_min_b == Catch::Approx(2.0).margin(1e-9));
}

TEST_CASE("no unique information means no hypothesis") {
  const auto rep = verify_theorem1(kAllEqual);  // c_A == c_B
  CHECK_FALSE(rep.h2_holds);
}

TEST_CASE("hypothesis implies the information gap on 100 random joints") {
  Stream rng({99, 0x7817});
  for (int trial = 0; trial < 100; ++trial) {
    const auto j = sample_h2_joint(rng, 8);
    const auto rep = verify_theorem1(j);
    REQUIRE(rep.h2_holds);
    CHECK(rep.gap_exists);
    // the minimally sufficient value decomposes as CMI + interaction
    CHECK(rep.i_min_a == Catch::Approx(rep.cmi_a + interaction_information(j)).margin(1e-9));
  }
}

TEST_CASE("joint JSON round trip and validation errors") {
  const auto toy = oracles::toy_world();
  const auto dir = std::filesystem::temp_directory_path() / "svl_infotheory_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "toy.json";
  std::ofstream(path) << toy.to_json().dump();
  const auto loaded = DiscreteJoint::from_json_file(path);
  CHECK(loaded.x_labels == toy.x_labels);
  CHECK(loaded.pmf == toy.pmf);

  nlohmann::json bad = toy.to_json();
  bad["pmf"][0][3] = 0.9;  // sum != 1
  CHECK_THROWS_WITH(DiscreteJoint::from_json(bad), Catch::Matchers::ContainsSubstring("sum"));

  nlohmann::json bad_label = toy.to_json();
  bad_label["pmf"][0][0] = "zzz";
  CHECK_THROWS_WITH(DiscreteJoint::from_json(bad_label),
                    Catch::Matchers::ContainsSubstring("not in outcome set"));

  nlohmann::json dup = toy.to_json();
  dup["pmf"].push_back(dup["pmf"][0]);
  CHECK_THROWS_WITH(DiscreteJoint::from_json(dup),
                    Catch::Matchers::ContainsSubstring("duplicate"));

  nlohmann::json neg = toy.to_json();
  neg["pmf"][0][3] = -0.1;
  CHECK_THROWS_AS(DiscreteJoint::from_json(neg), svl::UsageError);
}

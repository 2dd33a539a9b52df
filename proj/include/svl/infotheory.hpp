#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "svl/rng.hpp"
#include "svl/tensor.hpp"

// Exact information-theoretic computations over small discrete joints of
// (image, caption-A, caption-B). Everything enumerates the full table, so
// results are exact up to float64 rounding; units are bits (base-2 logs)
// with 0*log(0) := 0.

namespace svl::infotheory {

enum class Var : uint8_t { X = 0, CA = 1, CB = 2 };

// Subset of {x, ca, cb} as a 3-bit mask.
struct VarSet {
  uint8_t mask = 0;

  constexpr VarSet() = default;
  constexpr explicit VarSet(uint8_t m) : mask(m) {}
  constexpr VarSet(std::initializer_list<Var> vars) {
    for (Var v : vars) mask |= uint8_t(1u << uint8_t(v));
  }

  constexpr bool contains(Var v) const { return mask & (1u << uint8_t(v)); }
  constexpr bool empty() const { return mask == 0; }
  constexpr bool disjoint(VarSet o) const { return (mask & o.mask) == 0; }
  constexpr VarSet operator|(VarSet o) const { return VarSet(uint8_t(mask | o.mask)); }
};

inline constexpr VarSet kX{Var::X};
inline constexpr VarSet kCA{Var::CA};
inline constexpr VarSet kCB{Var::CB};

struct DiscreteJoint {
  std::vector<std::string> x_labels, ca_labels, cb_labels;
  std::vector<double> pmf;  // dense, index ((ix * na) + ia) * nb + ib

  int nx() const { return int(x_labels.size()); }
  int na() const { return int(ca_labels.size()); }
  int nb() const { return int(cb_labels.size()); }

  double p(int ix, int ia, int ib) const {
    return pmf[(size_t(ix) * na() + ia) * nb() + ib];
  }
  double& p(int ix, int ia, int ib) {
    return pmf[(size_t(ix) * na() + ia) * nb() + ib];
  }

  static constexpr int kMaxOutcomes = 4096;

  void validate() const {
    if (x_labels.empty() || ca_labels.empty() || cb_labels.empty())
      throw UsageError("joint: all three outcome sets must be non-empty");
    if (nx() > kMaxOutcomes || na() > kMaxOutcomes || nb() > kMaxOutcomes)
      throw UsageError("joint: outcome set exceeds enumeration bound (4096)");
    if (pmf.size() != size_t(nx()) * na() * nb())
      throw UsageError("joint: pmf size does not match outcome sets");
    double total = 0.0;
    for (double v : pmf) {
      if (v < 0.0) throw UsageError("joint: negative probability");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw UsageError("joint: probabilities sum to " + std::to_string(total) + ", expected 1");
  }

  static DiscreteJoint from_json(const nlohmann::json& j);
  static DiscreteJoint from_json_file(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

namespace detail {

inline double xlog2x_neg(double p) { return p > 0.0 ? -p * std::log2(p) : 0.0; }

// Entropy of the marginal over `vars`, by accumulating cell mass into the
// flattened projection index.
inline double marginal_entropy(const DiscreteJoint& j, VarSet vars) {
  const int nx = j.nx(), na = j.na(), nb = j.nb();
  size_t cells = 1;
  if (vars.contains(Var::X)) cells *= size_t(nx);
  if (vars.contains(Var::CA)) cells *= size_t(na);
  if (vars.contains(Var::CB)) cells *= size_t(nb);
  std::vector<double> marg(cells, 0.0);
  for (int ix = 0; ix < nx; ++ix)
    for (int ia = 0; ia < na; ++ia)
      for (int ib = 0; ib < nb; ++ib) {
        size_t idx = 0;
        if (vars.contains(Var::X)) idx = idx * nx + ix;
        if (vars.contains(Var::CA)) idx = idx * na + ia;
        if (vars.contains(Var::CB)) idx = idx * nb + ib;
        marg[idx] += j.p(ix, ia, ib);
      }
  double h = 0.0;
  for (double m : marg) h += xlog2x_neg(m);
  return h;
}

}  // namespace detail

inline double entropy(const DiscreteJoint& joint, VarSet vars) {
  if (vars.empty()) throw UsageError("entropy: empty variable subset");
  return detail::marginal_entropy(joint, vars);
}

inline double mutual_information(const DiscreteJoint& joint, VarSet a, VarSet b) {
  if (a.empty() || b.empty()) throw UsageError("mutual_information: empty variable subset");
  if (!a.disjoint(b)) throw UsageError("mutual_information: overlapping variable subsets");
  return entropy(joint, a) + entropy(joint, b) - entropy(joint, a | b);
}

inline double conditional_mi(const DiscreteJoint& joint, VarSet a, VarSet b, VarSet given) {
  if (a.empty() || b.empty()) throw UsageError("conditional_mi: empty variable subset");
  if (!a.disjoint(b) || !a.disjoint(given) || !b.disjoint(given))
    throw UsageError("conditional_mi: variable subsets must be pairwise disjoint");
  if (given.empty()) return mutual_information(joint, a, b);
  // I(A;B|G) = H(A,G) + H(B,G) - H(G) - H(A,B,G)
  return entropy(joint, a | given) + entropy(joint, b | given) - entropy(joint, given) -
         entropy(joint, a | b | given);
}

// I(x; c_A; c_B) = I(x; c_A) - I(x; c_A | c_B). Symmetric in the three
// variables; may be negative (e.g. XOR-coupled variables).
inline double interaction_information(const DiscreteJoint& joint) {
  return mutual_information(joint, kX, kCA) - conditional_mi(joint, kX, kCA, kCB);
}

struct InfoDecomposition {
  double ca_specific = 0.0;
  double cb_specific = 0.0;
  double shared = 0.0;
  double task_irrelevant = 0.0;
  double task_relevant = 0.0;
};

inline InfoDecomposition decompose(const DiscreteJoint& joint) {
  InfoDecomposition d;
  d.ca_specific = conditional_mi(joint, kX, kCA, kCB);
  d.cb_specific = conditional_mi(joint, kX, kCB, kCA);
  d.shared = interaction_information(joint);
  d.task_relevant = d.ca_specific + d.cb_specific + d.shared;
  // H(x | c_A, c_B)
  d.task_irrelevant = entropy(joint, kX | kCA | kCB) - entropy(joint, kCA | kCB);
  return d;
}

// Deterministic coarsening of the x-outcome space: partition[ix] is the
// class label of x-outcome ix.
struct Representation {
  std::vector<int> partition;
  int num_classes = 0;
};

namespace detail {

// Groups x-outcomes whose conditional rows match entrywise within tol.
// Zero-mass outcomes carry no information and share one class.
inline Representation group_by_conditional(const std::vector<double>& px,
                                           const std::vector<std::vector<double>>& cond,
                                           double tol) {
  const int n = int(px.size());
  Representation rep;
  rep.partition.assign(n, -1);
  std::vector<int> reps;  // representative outcome per class
  int zero_class = -1;
  for (int i = 0; i < n; ++i) {
    if (px[i] <= 0.0) {
      if (zero_class < 0) {
        zero_class = rep.num_classes++;
        reps.push_back(-1);
      }
      rep.partition[i] = zero_class;
      continue;
    }
    int found = -1;
    for (int c = 0; c < rep.num_classes; ++c) {
      if (reps[c] < 0) continue;
      const auto& a = cond[reps[c]];
      const auto& b = cond[i];
      bool same = true;
      for (size_t t = 0; t < a.size(); ++t) {
        if (std::abs(a[t] - b[t]) > tol) {
          same = false;
          break;
        }
      }
      if (same) {
        found = c;
        break;
      }
    }
    if (found < 0) {
      found = rep.num_classes++;
      reps.push_back(i);
    }
    rep.partition[i] = found;
  }
  return rep;
}

}  // namespace detail

// Smallest sufficient coarsening for one caption: x-outcomes are merged
// exactly when they induce the same p(c|x). Merging such outcomes cannot
// change I(z;c), and any further merge would; so the grouping is the
// minimum-entropy sufficient partition.
inline Representation minimal_sufficient_representation(const DiscreteJoint& joint, Var which) {
  if (which == Var::X) throw UsageError("minimal_sufficient_representation: which must be ca or cb");
  const int nx = joint.nx(), na = joint.na(), nb = joint.nb();
  const int nc = (which == Var::CA) ? na : nb;
  std::vector<double> px(nx, 0.0);
  std::vector<std::vector<double>> cond(nx, std::vector<double>(nc, 0.0));
  for (int ix = 0; ix < nx; ++ix)
    for (int ia = 0; ia < na; ++ia)
      for (int ib = 0; ib < nb; ++ib) {
        const double p = joint.p(ix, ia, ib);
        px[ix] += p;
        cond[ix][which == Var::CA ? ia : ib] += p;
      }
  for (int ix = 0; ix < nx; ++ix)
    if (px[ix] > 0.0)
      for (double& c : cond[ix]) c /= px[ix];
  return detail::group_by_conditional(px, cond, 1e-12);
}

// Coarsening sufficient for both captions jointly: groups by p(c_A, c_B | x).
inline Representation task_optimal_representation(const DiscreteJoint& joint) {
  const int nx = joint.nx(), na = joint.na(), nb = joint.nb();
  std::vector<double> px(nx, 0.0);
  std::vector<std::vector<double>> cond(nx, std::vector<double>(size_t(na) * nb, 0.0));
  for (int ix = 0; ix < nx; ++ix)
    for (int ia = 0; ia < na; ++ia)
      for (int ib = 0; ib < nb; ++ib) {
        const double p = joint.p(ix, ia, ib);
        px[ix] += p;
        cond[ix][size_t(ia) * nb + ib] += p;
      }
  for (int ix = 0; ix < nx; ++ix)
    if (px[ix] > 0.0)
      for (double& c : cond[ix]) c /= px[ix];
  return detail::group_by_conditional(px, cond, 1e-12);
}

// I(z; C) where z = rep(x) and C is the (joint) caption variable set.
inline double representation_mi(const DiscreteJoint& joint, const Representation& rep,
                                VarSet captions) {
  if (captions.contains(Var::X) || captions.empty())
    throw UsageError("representation_mi: caption set must be a non-empty subset of {ca, cb}");
  const int nx = joint.nx(), na = joint.na(), nb = joint.nb();
  if (int(rep.partition.size()) != nx)
    throw UsageError("representation_mi: partition does not cover the x-outcome space");
  const bool use_a = captions.contains(Var::CA);
  const bool use_b = captions.contains(Var::CB);
  const size_t ncap = (use_a ? size_t(na) : 1) * (use_b ? size_t(nb) : 1);
  std::vector<double> pz(size_t(rep.num_classes), 0.0);
  std::vector<double> pc(ncap, 0.0);
  std::vector<double> pzc(size_t(rep.num_classes) * ncap, 0.0);
  for (int ix = 0; ix < nx; ++ix)
    for (int ia = 0; ia < na; ++ia)
      for (int ib = 0; ib < nb; ++ib) {
        const double p = joint.p(ix, ia, ib);
        size_t ci = 0;
        if (use_a) ci = ci * na + ia;
        if (use_b) ci = ci * nb + ib;
        const int z = rep.partition[ix];
        pz[z] += p;
        pc[ci] += p;
        pzc[size_t(z) * ncap + ci] += p;
      }
  double h = 0.0;
  for (double v : pz) h += detail::xlog2x_neg(v);
  for (double v : pc) h += detail::xlog2x_neg(v);
  for (double v : pzc) h -= detail::xlog2x_neg(v);
  return h;
}

inline double representation_entropy(const DiscreteJoint& joint, const Representation& rep) {
  const int nx = joint.nx(), na = joint.na(), nb = joint.nb();
  std::vector<double> pz(size_t(rep.num_classes), 0.0);
  for (int ix = 0; ix < nx; ++ix)
    for (int ia = 0; ia < na; ++ia)
      for (int ib = 0; ib < nb; ++ib) pz[rep.partition[ix]] += joint.p(ix, ia, ib);
  double h = 0.0;
  for (double v : pz) h += detail::xlog2x_neg(v);
  return h;
}

struct Theorem1Report {
  bool h2_holds = false;   // at least one caption-specific CMI is positive
  bool gap_exists = false; // some minimally sufficient z carries less than z_opt
  double cmi_a = 0.0, cmi_b = 0.0;
  double i_min_a = 0.0;  // I(z_min^A; c_A)
  double i_min_b = 0.0;  // I(z_min^B; c_B)
  double i_opt = 0.0;    // I(z_opt; c_A c_B)
};

inline Theorem1Report verify_theorem1(const DiscreteJoint& joint) {
  constexpr double kTol = 1e-9;
  Theorem1Report r;
  r.cmi_a = conditional_mi(joint, kX, kCA, kCB);
  r.cmi_b = conditional_mi(joint, kX, kCB, kCA);
  r.h2_holds = r.cmi_a > kTol || r.cmi_b > kTol;
  const Representation zmin_a = minimal_sufficient_representation(joint, Var::CA);
  const Representation zmin_b = minimal_sufficient_representation(joint, Var::CB);
  const Representation zopt = task_optimal_representation(joint);
  r.i_min_a = representation_mi(joint, zmin_a, kCA);
  r.i_min_b = representation_mi(joint, zmin_b, kCB);
  r.i_opt = representation_mi(joint, zopt, kCA | kCB);
  r.gap_exists = (r.i_opt > r.i_min_a + kTol) || (r.i_opt > r.i_min_b + kTol);
  return r;
}

// --- random joints ---------------------------------------------------------

inline DiscreteJoint random_joint(rng::Stream& rng, int nx, int na, int nb) {
  DiscreteJoint j;
  j.x_labels.resize(nx);
  j.ca_labels.resize(na);
  j.cb_labels.resize(nb);
  for (int i = 0; i < nx; ++i) j.x_labels[i] = "x" + std::to_string(i);
  for (int i = 0; i < na; ++i) j.ca_labels[i] = "a" + std::to_string(i);
  for (int i = 0; i < nb; ++i) j.cb_labels[i] = "b" + std::to_string(i);
  j.pmf.resize(size_t(nx) * na * nb);
  double total = 0.0;
  for (double& p : j.pmf) {
    // Exp(1) draws normalized -> Dirichlet(1) over cells.
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    p = -std::log(u);
    total += p;
  }
  double acc = 0.0;
  for (size_t i = 0; i + 1 < j.pmf.size(); ++i) {
    j.pmf[i] /= total;
    acc += j.pmf[i];
  }
  j.pmf.back() = 1.0 - acc;  // exact unit sum
  return j;
}

// Rejection-samples a joint satisfying H2 (some caption-specific CMI > 0).
inline DiscreteJoint sample_h2_joint(rng::Stream& rng, int max_outcomes = 8) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const int nx = 2 + int(rng.uniform_int(uint64_t(max_outcomes - 1)));
    const int na = 2 + int(rng.uniform_int(uint64_t(max_outcomes - 1)));
    const int nb = 2 + int(rng.uniform_int(uint64_t(max_outcomes - 1)));
    DiscreteJoint j = random_joint(rng, nx, na, nb);
    if (conditional_mi(j, kX, kCA, kCB) > 1e-9 || conditional_mi(j, kX, kCB, kCA) > 1e-9)
      return j;
  }
  throw std::runtime_error("sample_h2_joint: rejection sampling did not converge");
}

// --- JSON ------------------------------------------------------------------

inline DiscreteJoint DiscreteJoint::from_json(const nlohmann::json& j) {
  DiscreteJoint out;
  try {
    out.x_labels = j.at("x").get<std::vector<std::string>>();
    out.ca_labels = j.at("ca").get<std::vector<std::string>>();
    out.cb_labels = j.at("cb").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("joint JSON: bad outcome sets: ") + e.what());
  }
  auto index_of = [](const std::vector<std::string>& labels, const std::string& s,
                     const char* set) {
    auto it = std::find(labels.begin(), labels.end(), s);
    if (it == labels.end())
      throw std::runtime_error("joint JSON: label '" + s + "' not in outcome set " + set);
    return int(it - labels.begin());
  };
  out.pmf.assign(size_t(out.nx()) * out.na() * out.nb(), 0.0);
  std::vector<bool> seen(out.pmf.size(), false);
  if (!j.contains("pmf") || !j.at("pmf").is_array())
    throw std::runtime_error("joint JSON: missing pmf array");
  for (const auto& row : j.at("pmf")) {
    if (!row.is_array() || row.size() != 4)
      throw std::runtime_error("joint JSON: pmf rows must be [x, ca, cb, p]");
    const int ix = index_of(out.x_labels, row[0].get<std::string>(), "x");
    const int ia = index_of(out.ca_labels, row[1].get<std::string>(), "ca");
    const int ib = index_of(out.cb_labels, row[2].get<std::string>(), "cb");
    const size_t cell = (size_t(ix) * out.na() + ia) * out.nb() + ib;
    if (seen[cell])
      throw std::runtime_error("joint JSON: duplicate pmf entry for (" +
                               row[0].get<std::string>() + ", " + row[1].get<std::string>() +
                               ", " + row[2].get<std::string>() + ")");
    seen[cell] = true;
    out.pmf[cell] = row[3].get<double>();
  }
  out.validate();
  return out;
}

inline DiscreteJoint DiscreteJoint::from_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open joint file: " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("joint JSON parse error in " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

inline nlohmann::json DiscreteJoint::to_json() const {
  nlohmann::json j;
  j["x"] = x_labels;
  j["ca"] = ca_labels;
  j["cb"] = cb_labels;
  auto rows = nlohmann::json::array();
  for (int ix = 0; ix < nx(); ++ix)
    for (int ia = 0; ia < na(); ++ia)
      for (int ib = 0; ib < nb(); ++ib)
        if (p(ix, ia, ib) > 0.0)
          rows.push_back({x_labels[ix], ca_labels[ia], cb_labels[ib], p(ix, ia, ib)});
  j["pmf"] = rows;
  return j;
}

}  // namespace svl::infotheory

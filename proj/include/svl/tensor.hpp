#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace svl {

template <class T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using VecC = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Named parameter tensors. Entries keep insertion order so checkpoint
// payload layout is stable; values are 2-D row-major matrices (a tensor of
// rank > 2 is stored flattened with its logical shape kept alongside).
template <class T>
struct ParamStore {
  struct Entry {
    std::string name;
    std::vector<int64_t> shape;
    MatR<T> value;
  };

  std::vector<Entry> entries;
  std::map<std::string, size_t> index;
  uint64_t init_seed = 0;

  MatR<T>& add(const std::string& name, std::vector<int64_t> shape) {
    if (index.count(name)) throw UsageError("duplicate parameter name: " + name);
    int64_t rows = shape.empty() ? 1 : shape[0];
    int64_t cols = 1;
    for (size_t i = 1; i < shape.size(); ++i) cols *= shape[i];
    entries.push_back({name, std::move(shape), MatR<T>::Zero(rows, cols)});
    index[name] = entries.size() - 1;
    return entries.back().value;
  }

  MatR<T>& at(const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw UsageError("unknown parameter: " + name);
    return entries[it->second].value;
  }
  const MatR<T>& at(const std::string& name) const {
    auto it = index.find(name);
    if (it == index.end()) throw UsageError("unknown parameter: " + name);
    return entries[it->second].value;
  }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& e : entries) n += e.value.size();
    return n;
  }

  bool all_finite() const {
    for (const auto& e : entries)
      if (!e.value.allFinite()) return false;
    return true;
  }

  void set_zero() {
    for (auto& e : entries) e.value.setZero();
  }

  // Same names/shapes, zero values. Used for gradients and optimizer moments.
  ParamStore like_zeros() const {
    ParamStore out;
    out.init_seed = init_seed;
    for (const auto& e : entries) out.add(e.name, e.shape);
    return out;
  }

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    out.init_seed = init_seed;
    for (const auto& e : entries) {
      auto& v = out.add(e.name, e.shape);
      v = e.value.template cast<U>();
    }
    return out;
  }

  bool same_values(const ParamStore& other) const {
    if (entries.size() != other.entries.size()) return false;
    for (size_t i = 0; i < entries.size(); ++i) {
      const auto& a = entries[i];
      const auto& b = other.entries[i];
      if (a.name != b.name || a.shape != b.shape) return false;
      if (a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols()) return false;
      if ((a.value.array() != b.value.array()).any()) return false;
    }
    return true;
  }
};

}  // namespace svl

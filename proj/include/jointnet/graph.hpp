#pragma once

// Networks, parent sets and the in-degree restricted parent-set space.
//
// Vertices are 0-based in memory and 1-based in every file format. A parent
// set is a bitmask over at most 64 vertices, so the structural Hamming
// distance between two sets is the popcount of their XOR.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "jointnet/errors.hpp"

namespace jointnet {

inline constexpr int kMaxVertices = 64;

class ParentSet {
 public:
  constexpr ParentSet() = default;
  constexpr explicit ParentSet(std::uint64_t bits) : bits_(bits) {}

  static ParentSet of(std::initializer_list<int> members) {
    ParentSet s;
    for (int m : members) s.insert(m);
    return s;
  }

  constexpr bool contains(int v) const { return (bits_ >> v) & 1u; }
  constexpr int size() const { return std::popcount(bits_); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint64_t bits() const { return bits_; }

  void insert(int v) {
    if (v < 0 || v >= kMaxVertices) throw InvalidArgument("vertex index out of range");
    bits_ |= std::uint64_t{1} << v;
  }
  void erase(int v) { bits_ &= ~(std::uint64_t{1} << v); }

  // Ascending member list.
  std::vector<int> members() const {
    std::vector<int> out;
    out.reserve(size());
    for (std::uint64_t b = bits_; b; b &= b - 1) out.push_back(std::countr_zero(b));
    return out;
  }

  // Largest member + 1, 0 for the empty set.
  int span() const { return bits_ ? kMaxVertices - std::countl_zero(bits_) : 0; }

  friend constexpr bool operator==(ParentSet, ParentSet) = default;

 private:
  std::uint64_t bits_ = 0;
};

// |a Δ b|
constexpr int shd(ParentSet a, ParentSet b) { return std::popcount(a.bits() ^ b.bits()); }

struct Network {
  Network() = default;
  explicit Network(int num_vertices) : parents(static_cast<std::size_t>(num_vertices)) {
    if (num_vertices <= 0 || num_vertices > kMaxVertices)
      throw InvalidArgument("network size must be in 1.." + std::to_string(kMaxVertices));
  }

  int size() const { return static_cast<int>(parents.size()); }
  bool has_edge(int source, int target) const { return parents[target].contains(source); }
  void add_edge(int source, int target) { parents[target].insert(source); }

  int edge_count() const {
    int n = 0;
    for (auto s : parents) n += s.size();
    return n;
  }

  // Throws if any parent lies outside 0..P-1.
  void validate() const {
    for (auto s : parents)
      if (s.span() > size()) throw InvalidArgument("parent index exceeds network size");
  }

  static Network complete(int num_vertices) {
    Network g(num_vertices);
    const std::uint64_t all =
        num_vertices == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << num_vertices) - 1;
    for (auto& s : g.parents) s = ParentSet(all);
    return g;
  }

  friend bool operator==(const Network&, const Network&) = default;

  std::vector<ParentSet> parents;
};

inline int shd_network(const Network& a, const Network& b) {
  if (a.size() != b.size()) throw InvalidArgument("networks differ in vertex count");
  int d = 0;
  for (int p = 0; p < a.size(); ++p) d += shd(a.parents[p], b.parents[p]);
  return d;
}

// Unnormalized log Gibbs weight -tau * shd(candidate, anchor).
inline double log_prior_weight(ParentSet candidate, ParentSet anchor, double inverse_temperature) {
  if (!(inverse_temperature >= 0.0)) throw InvalidArgument("inverse temperature must be >= 0");
  if (inverse_temperature == 0.0) return 0.0;
  return -inverse_temperature * shd(candidate, anchor);
}

// All parent sets of size <= c over P vertices, ordered by cardinality and
// then lexicographically by ascending member list. The same space serves
// every target vertex because self-loops are admissible.
class ParentSpace {
 public:
  ParentSpace(int num_vertices, int max_parents) : P_(num_vertices), c_(max_parents) {
    if (num_vertices <= 0 || num_vertices > kMaxVertices)
      throw InvalidArgument("vertex count must be in 1.." + std::to_string(kMaxVertices));
    if (max_parents < 0 || max_parents > num_vertices)
      throw InvalidArgument("in-degree cap must satisfy 0 <= c <= P");

    std::vector<int> combo;
    for (int k = 0; k <= c_; ++k) {
      combo.resize(static_cast<std::size_t>(k));
      for (int i = 0; i < k; ++i) combo[i] = i;
      while (true) {
        std::uint64_t bits = 0;
        for (int v : combo) bits |= std::uint64_t{1} << v;
        sets_.emplace_back(bits);
        // advance to the next k-combination in lexicographic order
        int i = k - 1;
        while (i >= 0 && combo[i] == P_ - k + i) --i;
        if (i < 0) break;
        ++combo[i];
        for (int r = i + 1; r < k; ++r) combo[r] = combo[r - 1] + 1;
      }
    }
    index_.reserve(sets_.size());
    for (std::size_t i = 0; i < sets_.size(); ++i) index_.emplace(sets_[i].bits(), i);
  }

  int num_vertices() const { return P_; }
  int max_parents() const { return c_; }
  std::size_t size() const { return sets_.size(); }
  const std::vector<ParentSet>& sets() const { return sets_; }
  ParentSet operator[](std::size_t i) const { return sets_[i]; }

  // Index of `s` in canonical order, or size() when s is not in the space.
  std::size_t index_of(ParentSet s) const {
    auto it = index_.find(s.bits());
    return it == index_.end() ? sets_.size() : it->second;
  }

  // FNV-1a over (P, c, set bits); identifies the canonical order in caches.
  std::uint64_t order_hash() const {
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&h](std::uint64_t v) {
      for (int b = 0; b < 8; ++b) {
        h ^= (v >> (8 * b)) & 0xffu;
        h *= 1099511628211ull;
      }
    };
    mix(static_cast<std::uint64_t>(P_));
    mix(static_cast<std::uint64_t>(c_));
    for (auto s : sets_) mix(s.bits());
    return h;
  }

 private:
  int P_;
  int c_;
  std::vector<ParentSet> sets_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

inline ParentSpace enumerate_parent_space(int num_vertices, int max_parents) {
  return ParentSpace(num_vertices, max_parents);
}

}  // namespace jointnet

#pragma once

#include <cstdint>
#include <vector>

#include "relmeta/common.hpp"
#include "relmeta/rng.hpp"
#include "relmeta/sim.hpp"

namespace relmeta {

// Assignment of a module index to every directed edge and every node.
// Directed edge slots are sender-major: slot(i,j) enumerates j≠i for each
// sender i in turn, so a node v's incoming edges are slots (i→v), i≠v, in
// ascending sender order.
struct Structure {
  int n = 0;
  std::vector<int> edge_assign;  // n·(n−1) entries
  std::vector<int> node_assign;  // n entries

  static int edge_count(int n) { return n * (n - 1); }
  static int slot(int n, int i, int j) {
    require(i != j && 0 <= i && i < n && 0 <= j && j < n, "Structure::slot: bad pair");
    return i * (n - 1) + (j < i ? j : j - 1);
  }

  int edge(int i, int j) const { return edge_assign[slot(n, i, j)]; }
  void set_edge(int i, int j, int m) { edge_assign[slot(n, i, j)] = m; }

  void validate(int n_edge_modules, int n_node_modules) const {
    require(n >= 2, "Structure: need at least two nodes");
    require(static_cast<int>(edge_assign.size()) == edge_count(n),
            "Structure: edge_assign size mismatch");
    require(static_cast<int>(node_assign.size()) == n, "Structure: node_assign size mismatch");
    for (int m : edge_assign)
      require(0 <= m && m < n_edge_modules, "Structure: edge module index out of range");
    for (int g : node_assign)
      require(0 <= g && g < n_node_modules, "Structure: node module index out of range");
  }

  bool operator==(const Structure&) const = default;
};

inline Structure make_structure(int n, int fill_edge = 0) {
  Structure s;
  s.n = n;
  s.edge_assign.assign(Structure::edge_count(n), fill_edge);
  s.node_assign.assign(n, 0);
  return s;
}

// Both directions of an unordered pair inherit the pair's relation label.
inline Structure structure_from_truth(const RelationGraph& g) {
  Structure s = make_structure(g.n_entities);
  for (int i = 0; i < g.n_entities; ++i)
    for (int j = 0; j < g.n_entities; ++j)
      if (i != j) s.set_edge(i, j, g.label(i, j));
  return s;
}

// Uniform edge assignment; node assignment stays 0 (one shared node module).
inline Structure random_structure(int n, int n_edge_modules, Rng& rng) {
  Structure s = make_structure(n);
  for (int& m : s.edge_assign) m = rng.uniform_int(n_edge_modules);
  return s;
}

// One edge slot reassigned to a different module, both drawn uniformly.
// Draw order: slot first, then the replacement among the other modules.
inline Structure random_proposal(const Structure& s, int n_edge_modules, Rng& rng) {
  require(n_edge_modules >= 2, "random_proposal: need at least two edge modules");
  require(!s.edge_assign.empty(), "random_proposal: structure has no edges");
  Structure out = s;
  const int slot = rng.uniform_int(static_cast<int>(s.edge_assign.size()));
  int pick = rng.uniform_int(n_edge_modules - 1);
  if (pick >= s.edge_assign[slot]) ++pick;
  out.edge_assign[slot] = pick;
  return out;
}

// Enumeration over all |H|^(n(n−1)) directed assignments, callers iterate
// code in [0, structure_space_size).
inline std::uint64_t structure_space_size(int n, int n_edge_modules) {
  std::uint64_t size = 1;
  for (int e = 0; e < Structure::edge_count(n); ++e) {
    std::uint64_t next = size * static_cast<std::uint64_t>(n_edge_modules);
    require(next / n_edge_modules == size, "structure_space_size: overflow");
    size = next;
  }
  return size;
}

inline Structure structure_from_code(std::uint64_t code, int n, int n_edge_modules) {
  Structure s = make_structure(n);
  for (int e = 0; e < Structure::edge_count(n); ++e) {
    s.edge_assign[e] = static_cast<int>(code % n_edge_modules);
    code /= n_edge_modules;
  }
  require(code == 0, "structure_from_code: code out of range");
  return s;
}

}  // namespace relmeta

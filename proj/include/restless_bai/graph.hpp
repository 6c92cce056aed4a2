#pragma once

#include <algorithm>
#include <vector>

namespace restless_bai {

// Tarjan strongly connected components, iterative so deep chains cannot blow
// the call stack. Returns a component id per node; ids are assigned in reverse
// topological order (an edge u->v across components has comp[u] > comp[v]).
inline std::vector<int> scc_components(const std::vector<std::vector<int>>& adj,
                                       int* n_components = nullptr) {
  const int n = static_cast<int>(adj.size());
  std::vector<int> index(n, -1), lowlink(n, 0), comp(n, -1);
  std::vector<bool> on_stack(n, false);
  std::vector<int> stack;
  int next_index = 0, next_comp = 0;

  struct Frame {
    int node;
    std::size_t child;
  };
  std::vector<Frame> call;

  for (int root = 0; root < n; ++root) {
    if (index[root] != -1) continue;
    call.push_back({root, 0});
    while (!call.empty()) {
      Frame& fr = call.back();
      int v = fr.node;
      if (fr.child == 0) {
        index[v] = lowlink[v] = next_index++;
        stack.push_back(v);
        on_stack[v] = true;
      }
      bool descended = false;
      while (fr.child < adj[v].size()) {
        int w = adj[v][fr.child++];
        if (index[w] == -1) {
          call.push_back({w, 0});
          descended = true;
          break;
        }
        if (on_stack[w]) lowlink[v] = std::min(lowlink[v], index[w]);
      }
      if (descended) continue;
      if (lowlink[v] == index[v]) {
        while (true) {
          int w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp[w] = next_comp;
          if (w == v) break;
        }
        ++next_comp;
      }
      call.pop_back();
      if (!call.empty()) {
        int parent = call.back().node;
        lowlink[parent] = std::min(lowlink[parent], lowlink[v]);
      }
    }
  }
  if (n_components) *n_components = next_comp;
  return comp;
}

inline bool strongly_connected(const std::vector<std::vector<int>>& adj) {
  if (adj.empty()) return false;
  int n_comp = 0;
  scc_components(adj, &n_comp);
  return n_comp == 1;
}

// Components with no edge leaving them: the recurrent classes of the support
// graph. Each entry lists the member nodes.
inline std::vector<std::vector<int>> closed_components(
    const std::vector<std::vector<int>>& adj) {
  int n_comp = 0;
  std::vector<int> comp = scc_components(adj, &n_comp);
  std::vector<bool> has_exit(n_comp, false);
  for (int v = 0; v < static_cast<int>(adj.size()); ++v)
    for (int w : adj[v])
      if (comp[w] != comp[v]) has_exit[comp[v]] = true;
  std::vector<std::vector<int>> out(n_comp);
  for (int v = 0; v < static_cast<int>(adj.size()); ++v) out[comp[v]].push_back(v);
  std::vector<std::vector<int>> closed;
  for (int c = 0; c < n_comp; ++c)
    if (!has_exit[c]) closed.push_back(std::move(out[c]));
  return closed;
}

}  // namespace restless_bai

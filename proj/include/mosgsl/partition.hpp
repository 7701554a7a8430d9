#pragma once

#include <vector>

#include "mosgsl/graph_io.hpp"
#include "mosgsl/matrix.hpp"

namespace mosgsl {

// A BFS subgraph of one parent graph.
struct SubgraphView {
    int parent = 0;                // index of the parent graph in its dataset
    int center = 0;                // parent node id; nodes[0] == center
    std::vector<std::size_t> nodes;  // parent node ids in BFS discovery order
    Matrix adjacency;              // induced weighted adjacency over nodes
    Matrix features;               // rows of the parent features, same order
};

// Centers are the min(K, n) highest-degree nodes (ties -> lower id). Each view
// holds the first M nodes reached by BFS from its center, expanding
// neighbours in ascending id order.
std::vector<SubgraphView> bfs_partition(const Graph& graph, int K, int M, int parent_id = 0);

// A single view spanning the whole graph in natural node order (used by the
// whole-graph structure-learning variants).
SubgraphView whole_graph_view(const Graph& graph, int parent_id = 0);

}  // namespace mosgsl

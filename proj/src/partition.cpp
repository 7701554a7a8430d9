#include "mosgsl/partition.hpp"

#include <algorithm>
#include <numeric>
#include <queue>

#include "mosgsl/error.hpp"

namespace mosgsl {

namespace {

SubgraphView make_view(const Graph& graph, const Matrix& dense, int parent_id, std::vector<std::size_t> nodes) {
    SubgraphView view;
    view.parent = parent_id;
    view.center = static_cast<int>(nodes.front());
    const std::size_t m = nodes.size();
    view.adjacency = Matrix(m, m, 0.0);
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b) view.adjacency(a, b) = dense(nodes[a], nodes[b]);
    const std::size_t f = graph.features.cols;
    view.features = Matrix(m, f, 0.0);
    if (graph.features.rows == static_cast<std::size_t>(graph.num_nodes)) {
        for (std::size_t a = 0; a < m; ++a)
            std::copy_n(graph.features.data.begin() + static_cast<std::ptrdiff_t>(nodes[a] * f), f,
                        view.features.data.begin() + static_cast<std::ptrdiff_t>(a * f));
    }
    view.nodes = std::move(nodes);
    return view;
}

}  // namespace

std::vector<SubgraphView> bfs_partition(const Graph& graph, int K, int M, int parent_id) {
    if (K < 1 || M < 1) throw ContractViolation("bfs_partition: K and M must be >= 1");
    if (graph.num_nodes <= 0) throw ContractViolation("bfs_partition: empty graph");

    const auto n = static_cast<std::size_t>(graph.num_nodes);
    const auto degree = graph.degrees();
    const auto neighbours = graph.neighbours();
    const Matrix dense = graph.dense_adjacency();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return degree[a] > degree[b]; });
    const std::size_t k = std::min(static_cast<std::size_t>(K), n);
    const auto budget = static_cast<std::size_t>(M);

    std::vector<SubgraphView> views;
    views.reserve(k);
    std::vector<char> seen(n);
    for (std::size_t c = 0; c < k; ++c) {
        std::fill(seen.begin(), seen.end(), 0);
        std::vector<std::size_t> nodes{order[c]};
        seen[order[c]] = 1;
        std::queue<std::size_t> frontier;
        frontier.push(order[c]);
        while (!frontier.empty() && nodes.size() < budget) {
            const std::size_t u = frontier.front();
            frontier.pop();
            for (int v : neighbours[u]) {
                const auto vi = static_cast<std::size_t>(v);
                if (seen[vi]) continue;
                seen[vi] = 1;
                nodes.push_back(vi);
                frontier.push(vi);
                if (nodes.size() == budget) break;
            }
        }
        views.push_back(make_view(graph, dense, parent_id, std::move(nodes)));
    }
    return views;
}

SubgraphView whole_graph_view(const Graph& graph, int parent_id) {
    if (graph.num_nodes <= 0) throw ContractViolation("whole_graph_view: empty graph");
    std::vector<std::size_t> nodes(static_cast<std::size_t>(graph.num_nodes));
    std::iota(nodes.begin(), nodes.end(), std::size_t{0});
    return make_view(graph, graph.dense_adjacency(), parent_id, std::move(nodes));
}

}  // namespace mosgsl

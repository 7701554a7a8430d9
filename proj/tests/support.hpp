#pragma once

// Helpers shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "mosgsl/autodiff.hpp"
#include "mosgsl/graph_io.hpp"
#include "mosgsl/rng.hpp"

namespace testing {

using namespace mosgsl;

inline Graph make_graph(int n, const std::vector<std::pair<int, int>>& edges, int label = 0) {
    Graph g;
    g.num_nodes = n;
    g.label = label;
    std::set<std::pair<int, int>> seen;
    for (auto [u, v] : edges) {
        if (u == v) continue;
        if (u > v) std::swap(u, v);
        if (seen.insert({u, v}).second) g.edges.push_back({u, v, 1.0});
    }
    std::sort(g.edges.begin(), g.edges.end(), [](const Edge& a, const Edge& b) {
        return a.u != b.u ? a.u < b.u : a.v < b.v;
    });
    return g;
}

// Two (or more) classes of small connected graphs. Every graph is a random
// tree; class c additionally carries copies of a class-specific pattern:
// class 0 triangles, class 1 four-cycles, class 2 stars.
inline Dataset planted_motif_dataset(int per_class, int classes, std::uint64_t seed) {
    Rng rng = make_stream(seed, "fixture");
    auto pick = [&](int n) { return static_cast<int>(uniform01(rng) * n); };
    Dataset ds;
    ds.name = "PLANTED";
    ds.num_classes = classes;
    for (int c = 0; c < classes; ++c) {
        for (int i = 0; i < per_class; ++i) {
            const int n = 8 + pick(6);
            std::vector<std::pair<int, int>> edges;
            for (int v = 1; v < n; ++v) edges.push_back({pick(v), v});
            const int copies = 2 + pick(2);
            for (int k = 0; k < copies; ++k) {
                const int a = pick(n), b = pick(n), d = pick(n), e = pick(n);
                if (c == 0) {
                    edges.push_back({a, b});
                    edges.push_back({b, d});
                    edges.push_back({a, d});
                } else if (c == 1) {
                    edges.push_back({a, b});
                    edges.push_back({b, d});
                    edges.push_back({d, e});
                    edges.push_back({e, a});
                } else {
                    edges.push_back({a, b});
                    edges.push_back({a, d});
                    edges.push_back({a, e});
                }
            }
            ds.graphs.push_back(make_graph(n, edges, c));
        }
    }
    return ds;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = scale * (2.0 * uniform01(rng) - 1.0);
    return m;
}

struct GradCheck {
    double max_rel = 0.0;
    bool ok = true;
    std::string where;
    std::size_t checked = 0;
    std::size_t skipped = 0;  // the +-step window crossed a relu/clamp/mask/ranking branch
};

// Central differences (step 1e-3) of f() with respect to every entry of each
// leaf, compared with the analytic gradient: |a - n| <= 1e-4 * max(|a|, |n|)
// or |a - n| <= 1e-6. Entries whose perturbed evaluations take a different
// branch of a piecewise op than the unperturbed one are not differentiable
// within the window; they are counted in `skipped` instead of compared.
// Default central-difference step; acceptance rescales it to probe truncation.
inline double default_grad_step = 1e-3;

inline GradCheck check_gradients(std::vector<ad::Value> leaves, const std::function<ad::Value()>& f,
                                 double step = default_grad_step, double rel_tol = 1e-4, double abs_floor = 1e-6) {
    GradCheck result;
    for (auto& leaf : leaves) leaf.zero_grad();
    ad::set_branch_tracking(true);
    ad::take_branch_fingerprint();
    const ad::Value root = f();
    const std::uint64_t centre = ad::take_branch_fingerprint();
    ad::backward(root);
    std::vector<std::vector<double>> analytic;
    for (auto& leaf : leaves) {
        const auto g = leaf.grad();
        analytic.emplace_back(g.begin(), g.end());
        if (analytic.back().empty()) analytic.back().assign(leaf.size(), 0.0);
    }
    for (std::size_t l = 0; l < leaves.size(); ++l) {
        auto data = leaves[l].mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double orig = data[i];
            data[i] = orig + step;
            const double up = f().item();
            const std::uint64_t up_branch = ad::take_branch_fingerprint();
            data[i] = orig - step;
            const double down = f().item();
            const std::uint64_t down_branch = ad::take_branch_fingerprint();
            data[i] = orig;
            if (up_branch != centre || down_branch != centre) {
                ++result.skipped;
                continue;
            }
            ++result.checked;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[l][i];
            const double err = std::abs(a - numeric);
            const double scale = std::max(std::abs(a), std::abs(numeric));
            const double rel = scale > 0 ? err / scale : 0.0;
            if (err > abs_floor) result.max_rel = std::max(result.max_rel, rel);
            if (err > abs_floor && rel > rel_tol) {
                if (result.ok) {
                    result.where = "leaf " + std::to_string(l) + " entry " + std::to_string(i) + ": analytic " +
                                   std::to_string(a) + " numeric " + std::to_string(numeric);
                }
                result.ok = false;
            }
        }
    }
    ad::set_branch_tracking(false);
    return result;
}

// Every connected labelled graph on n nodes (edge subsets of K_n).
inline std::vector<Graph> all_connected_graphs(int n) {
    std::vector<std::pair<int, int>> pairs;
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v) pairs.push_back({u, v});
    std::vector<Graph> out;
    const std::uint64_t subsets = std::uint64_t{1} << pairs.size();
    for (std::uint64_t mask = 0; mask < subsets; ++mask) {
        std::vector<int> parent(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) parent[static_cast<std::size_t>(i)] = i;
        std::function<int(int)> root = [&](int x) {
            while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)];
            return x;
        };
        std::vector<std::pair<int, int>> edges;
        int components = n;
        for (std::size_t e = 0; e < pairs.size(); ++e) {
            if (!(mask >> e & 1)) continue;
            edges.push_back(pairs[e]);
            const int a = root(pairs[e].first), b = root(pairs[e].second);
            if (a != b) {
                parent[static_cast<std::size_t>(a)] = b;
                --components;
            }
        }
        if (components == 1) out.push_back(make_graph(n, edges));
    }
    return out;
}

// Reference partition: repeated arg-max selection of centres, BFS over an
// adjacency matrix scanned in id order, induced adjacency from the edge list.
struct ReferenceView {
    int center = 0;
    std::vector<std::size_t> nodes;
    Matrix adjacency;
};

inline std::vector<ReferenceView> reference_partition(const Graph& g, int K, int M) {
    const int n = g.num_nodes;
    std::vector<std::vector<double>> adj(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n), 0.0));
    std::vector<int> degree(static_cast<std::size_t>(n), 0);
    for (const Edge& e : g.edges) {
        adj[static_cast<std::size_t>(e.u)][static_cast<std::size_t>(e.v)] = e.weight;
        adj[static_cast<std::size_t>(e.v)][static_cast<std::size_t>(e.u)] = e.weight;
        ++degree[static_cast<std::size_t>(e.u)];
        ++degree[static_cast<std::size_t>(e.v)];
    }
    std::vector<bool> taken(static_cast<std::size_t>(n), false);
    std::vector<ReferenceView> out;
    for (int k = 0; k < std::min(K, n); ++k) {
        int best = -1;
        for (int v = 0; v < n; ++v)
            if (!taken[static_cast<std::size_t>(v)] && (best < 0 || degree[static_cast<std::size_t>(v)] > degree[static_cast<std::size_t>(best)])) best = v;
        taken[static_cast<std::size_t>(best)] = true;
        ReferenceView view;
        view.center = best;
        std::vector<bool> seen(static_cast<std::size_t>(n), false);
        std::vector<int> queue{best};
        seen[static_cast<std::size_t>(best)] = true;
        for (std::size_t head = 0; head < queue.size() && static_cast<int>(view.nodes.size()) < M; ++head) {
            const int u = queue[head];
            view.nodes.push_back(static_cast<std::size_t>(u));
            for (int w = 0; w < n; ++w) {
                if (adj[static_cast<std::size_t>(u)][static_cast<std::size_t>(w)] != 0.0 && !seen[static_cast<std::size_t>(w)]) {
                    seen[static_cast<std::size_t>(w)] = true;
                    queue.push_back(w);
                }
            }
        }
        const std::size_t m = view.nodes.size();
        view.adjacency = Matrix(m, m);
        for (const Edge& e : g.edges)
            for (std::size_t a = 0; a < m; ++a)
                for (std::size_t b = 0; b < m; ++b)
                    if ((view.nodes[a] == static_cast<std::size_t>(e.u) && view.nodes[b] == static_cast<std::size_t>(e.v)) ||
                        (view.nodes[a] == static_cast<std::size_t>(e.v) && view.nodes[b] == static_cast<std::size_t>(e.u)))
                        view.adjacency(a, b) = e.weight;
        out.push_back(std::move(view));
    }
    return out;
}

// Reference Lloyd iteration written against a full distance table: nearest
// centroid by first minimum, means from explicit member lists, empty
// clusters reseeded at the unused point farthest from its own centroid.
struct ReferenceLloyd {
    Matrix centroids;
    std::vector<std::size_t> assignment;
};

inline ReferenceLloyd reference_lloyd(const Matrix& points, const Matrix& initial, int max_iterations = 100) {
    const std::size_t n = points.rows, k = initial.rows, d = initial.cols;
    auto table = [&](const Matrix& c) {
        std::vector<std::vector<double>> dist(n, std::vector<double>(k));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                double s = 0.0;
                for (std::size_t t = 0; t < d; ++t) s += (points(i, t) - c(j, t)) * (points(i, t) - c(j, t));
                dist[i][j] = s;
            }
        return dist;
    };
    auto nearest = [&](const Matrix& c) {
        const auto dist = table(c);
        std::vector<std::size_t> a(n);
        for (std::size_t i = 0; i < n; ++i)
            a[i] = static_cast<std::size_t>(std::min_element(dist[i].begin(), dist[i].end()) - dist[i].begin());
        return a;
    };
    ReferenceLloyd out{initial, {}};
    if (n == 0) return out;
    out.assignment = nearest(out.centroids);
    for (int it = 0; it < max_iterations; ++it) {
        const auto dist = table(out.centroids);
        std::vector<std::vector<std::size_t>> members(k);
        for (std::size_t i = 0; i < n; ++i) members[out.assignment[i]].push_back(i);
        Matrix next(k, d);
        std::vector<bool> reused(n, false);
        for (std::size_t j = 0; j < k; ++j) {
            if (!members[j].empty()) {
                for (std::size_t t = 0; t < d; ++t) {
                    double s = 0.0;
                    for (std::size_t i : members[j]) s += points(i, t);
                    next(j, t) = s / static_cast<double>(members[j].size());
                }
                continue;
            }
            std::size_t pick = n;
            for (std::size_t i = 0; i < n; ++i)
                if (!reused[i] && (pick == n || dist[i][out.assignment[i]] > dist[pick][out.assignment[pick]])) pick = i;
            for (std::size_t t = 0; t < d; ++t) next(j, t) = pick == n ? out.centroids(j, t) : points(pick, t);
            if (pick != n) reused[pick] = true;
        }
        out.centroids = next;
        const auto again = nearest(out.centroids);
        if (again == out.assignment) break;
        out.assignment = again;
    }
    return out;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    const char* base = std::getenv("TMPDIR");
    std::filesystem::path dir = std::filesystem::path(base && *base ? base : "/tmp") / ("mosgsl-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mosgsl/matrix.hpp"

namespace mosgsl {

struct Edge {
    int u = 0;  // u < v
    int v = 0;
    double weight = 1.0;

    bool operator==(const Edge&) const = default;
};

struct Graph {
    int num_nodes = 0;
    std::vector<Edge> edges;  // one entry per unordered pair, no self-loops
    Matrix features;          // num_nodes x F
    int label = 0;
    std::vector<int> node_labels;  // raw TU node labels, remapped to 0..; empty if absent

    std::vector<int> degrees() const;
    // Dense symmetric weighted adjacency.
    Matrix dense_adjacency() const;
    // Ascending neighbour ids per node.
    std::vector<std::vector<int>> neighbours() const;
};

struct Dataset {
    std::string name;
    std::vector<Graph> graphs;
    int num_classes = 0;
    int feature_dim = 0;
};

// Reads <dir>/<name>_A.txt, _graph_indicator.txt, _graph_labels.txt and the
// optional _node_labels.txt. Features are left empty; call
// synthesize_features() afterwards.
Dataset parse_tu_dataset(const std::filesystem::path& dir, const std::string& name);

// Writes the TU files for a dataset (node labels only if every graph has them).
void write_tu_dataset(const Dataset& dataset, const std::filesystem::path& dir);

inline constexpr int kDefaultDegreeCap = 64;

// One-hot node label when node labels exist, otherwise one-hot of
// min(degree, cap) with F = cap + 1.
Dataset synthesize_features(Dataset dataset, int cap = kDefaultDegreeCap);

// Convenience: parse + synthesize_features.
Dataset load_tu_dataset(const std::filesystem::path& dir, const std::string& name, int degree_cap);

struct Fold {
    std::vector<int> train;
    std::vector<int> val;
    std::vector<int> test;
};

struct FoldPlan {
    std::vector<Fold> folds;  // 10 entries
};

inline constexpr int kNumFolds = 10;

// Stratified 10-fold plan; validation is a stratified 10% of each fold's
// training portion. Deterministic in seed.
FoldPlan make_fold_plan(const Dataset& dataset, std::uint64_t seed);

// Refined-structure exchange format: one "<id>.txt" file per graph holding
// "u v w" lines (0-based, u < v), plus manifest.txt listing
// "<graph id> <node count> <file name>".
struct StructureFile {
    int graph_id = 0;
    int num_nodes = 0;
    std::vector<Edge> edges;
};

void write_structures(const std::filesystem::path& dir, const std::vector<StructureFile>& structures);
std::vector<StructureFile> read_structures(const std::filesystem::path& dir);

// Replaces each listed graph's edges with the refined ones. Node counts must
// match; graphs absent from the list keep their edges.
Dataset apply_structures(Dataset dataset, const std::vector<StructureFile>& structures);

// Dense weighted adjacency -> edge list of nonzero upper-triangle entries.
std::vector<Edge> edges_from_dense(const Matrix& adjacency, double threshold = 0.0);

}  // namespace mosgsl

#pragma once

#include <span>
#include <string>
#include <vector>

#include "mosgsl/autodiff.hpp"
#include "mosgsl/backbone.hpp"
#include "mosgsl/graph_io.hpp"
#include "mosgsl/nn.hpp"
#include "mosgsl/partition.hpp"
#include "mosgsl/structure_learner.hpp"

namespace mosgsl {

// Learnable direction p; importance of an embedding z is <z, p> / ||p||.
class ImportanceScorer {
public:
    ImportanceScorer() = default;
    ImportanceScorer(std::string name, std::size_t dim, Rng& init);

    // (V x d) embeddings -> (V x 1) scores.
    ad::Value score(const ad::Value& embeddings) const;

    Parameter& direction() { return p_; }
    void collect(ParameterList& params) { params.push_back(&p_); }
    void collect(TensorList& tensors) { tensors.push_back(tensor_ref(p_)); }

private:
    Parameter p_;  // 1 x d
};

// alpha_k for each view: encoder over the ORIGINAL local adjacency, mean
// pooled per view, then scored. Returns a (V x 1) value.
ad::Value score_subgraphs(std::span<const SubgraphView* const> views, GnnEncoder& encoder,
                          const ImportanceScorer& scorer, bool train, Rng& dropout_rng);

struct FusedStructure {
    ad::Value adjacency;  // n x n, symmetric, zero diagonal, entries in [0, 1]
    struct Contribution {
        int u = 0;
        int v = 0;
        std::vector<int> views;
    };
    std::vector<Contribution> provenance;  // pairs u < v covered by any view
};

// A = clamp(gamma * sum_k softmax(alpha)_k * scatter(refined_k) + (1 - gamma) * original, 0, 1).
// alpha is (K x 1) or (1 x K); refined[k] is indexed by views[k].nodes.
FusedStructure fuse(const Matrix& original, std::span<const ad::Value> refined, const ad::Value& alpha,
                    std::span<const SubgraphView* const> views, double gamma, bool with_provenance = true);

struct CandidateSet {
    std::vector<std::size_t> indices;  // view indices, highest score first
    std::vector<double> scores;
};

// Top ceil(epsilon * K) views by raw score; ties go to the lower index.
CandidateSet select_candidates(std::span<const double> alpha, double epsilon);

// Everything the subgraph structure learner produced for one minibatch.
struct SgslBatch {
    std::vector<ad::Value> fused;                    // per graph
    std::vector<std::vector<double>> alpha;          // per graph, per view
    std::vector<std::vector<std::size_t>> candidates;  // per graph, view indices
    ad::Value candidate_embeddings;                  // stacked rows, grouped by graph
    std::vector<std::size_t> candidate_offsets;      // graphs + 1 entries
};

struct SgslOptions {
    double gamma = 0.5;
    double epsilon = 0.6;
    Processor processor;
};

// Learner + encoder + importance direction. The encoder is shared between
// importance scoring and candidate (motif) embedding.
class SubgraphStructureLearner {
public:
    SubgraphStructureLearner() = default;
    SubgraphStructureLearner(std::string name, GnnKind kind, std::size_t in_dim, std::size_t hidden, double dropout,
                             SgslOptions options, Rng& init);

    // views[i] are the views of graphs[i]. Candidate embeddings are only
    // computed when with_candidates is set.
    SgslBatch forward(std::span<const Graph* const> graphs, std::span<const std::vector<SubgraphView>* const> views,
                      bool train, bool with_candidates, Rng& dropout_rng);

    GraphLearner& learner() { return learner_; }
    GnnEncoder& encoder() { return encoder_; }
    ImportanceScorer& scorer() { return scorer_; }
    const SgslOptions& options() const { return options_; }

    void collect(ParameterList& params);
    void collect(TensorList& tensors);

private:
    std::string name_;
    SgslOptions options_;
    GraphLearner learner_;
    GnnEncoder encoder_;
    ImportanceScorer scorer_;
};

// Encoder embeddings (mean pooled) for the given views over the given
// adjacency values (one per view).
ad::Value embed_views(std::span<const SubgraphView* const> views, std::vector<ad::Value> adjacency,
                      GnnEncoder& encoder, bool train, Rng& dropout_rng);

}  // namespace mosgsl

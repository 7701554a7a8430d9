#pragma once

#include <span>
#include <string>
#include <vector>

#include "mosgsl/autodiff.hpp"
#include "mosgsl/nn.hpp"
#include "mosgsl/partition.hpp"

namespace mosgsl {

// Sparsifies a similarity matrix and symmetrises it.
struct Processor {
    enum class Mode { knn, eps };
    Mode mode = Mode::knn;
    int k = 8;            // knn: neighbours kept per row, capped at m - 1
    double theta = 0.3;   // eps: entries below theta are dropped
};

Processor::Mode parse_processor_mode(const std::string& s);
std::string to_string(Processor::Mode mode);

// Node-wise 2-layer MLP followed by a sigmoid of the scaled inner product:
// S[u][v] = sigmoid(<W(x_u), W(x_v)> / sqrt(d)).
class GraphLearner {
public:
    GraphLearner() = default;
    GraphLearner(std::string name, std::size_t in_dim, std::size_t dim, Rng& init);

    ad::Value embed(const ad::Value& features) const;
    ad::Value similarity(const ad::Value& embedding) const;

    std::size_t dim() const { return dim_; }
    Linear& first() { return first_; }
    Linear& second() { return second_; }

    void collect(ParameterList& params);
    void collect(TensorList& tensors);

private:
    Linear first_;
    Linear second_;
    std::size_t dim_ = 0;
};

// Mask chosen on forward values (straight-through: gradients reach only kept
// entries), then (S + S^T) / 2 with a zero diagonal.
ad::Value apply_processor(const ad::Value& similarity, const Processor& processor);

// Refined local adjacency for one view (m x m).
ad::Value learn_structure(const SubgraphView& view, const GraphLearner& learner, const Processor& processor);

// Same as learn_structure for many views, embedding all their nodes in one pass.
std::vector<ad::Value> learn_structures(std::span<const SubgraphView* const> views, const GraphLearner& learner,
                                        const Processor& processor);

}  // namespace mosgsl

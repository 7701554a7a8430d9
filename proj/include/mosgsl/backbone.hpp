#pragma once

#include <string>
#include <vector>

#include "mosgsl/autodiff.hpp"
#include "mosgsl/nn.hpp"

namespace mosgsl {

enum class GnnKind { gcn, sage, gin };

GnnKind parse_gnn_kind(const std::string& s);
std::string to_string(GnnKind kind);

// Graphs stacked for one forward pass. Rows offsets[i]..offsets[i+1] of
// features belong to graph i, whose adjacency is adjacency[i].
struct GraphBatch {
    std::vector<ad::Value> adjacency;
    ad::Value features;
    std::vector<std::size_t> offsets;

    std::size_t size() const { return adjacency.size(); }
};

GraphBatch make_batch(std::vector<ad::Value> adjacency, std::vector<const Matrix*> features);

// Two message-passing layers, each followed by BatchNorm, ReLU and dropout.
// Edge weights are used as given: GCN normalises with weighted degrees, SAGE
// takes the weight-normalised neighbour mean, GIN sums weighted neighbours.
class GnnEncoder {
public:
    static constexpr int kLayers = 2;

    GnnEncoder() = default;
    GnnEncoder(std::string name, GnnKind kind, std::size_t in_dim, std::size_t hidden, double dropout, Rng& init);

    // Stacked node embeddings (N x hidden).
    ad::Value encode(const GraphBatch& batch, bool train, Rng& dropout_rng);

    GnnKind kind() const { return kind_; }
    std::size_t hidden() const { return hidden_; }

    void collect(ParameterList& params);
    void collect(TensorList& tensors);

private:
    struct Layer {
        Linear self;       // GCN: W (+b); SAGE: W_self (+b); GIN: first MLP layer
        Linear neighbour;  // SAGE: W_nbr (no bias); GIN: second MLP layer
        Parameter gin_eps;
        BatchNorm norm;
    };

    ad::Value conv(Layer& layer, const ad::Value& h, const std::vector<ad::Value>& propagation,
                   const std::vector<std::size_t>& offsets) const;

    std::string name_;
    GnnKind kind_ = GnnKind::gcn;
    std::size_t hidden_ = 0;
    double dropout_ = 0.5;
    std::vector<Layer> layers_;
};

// Column-wise mean of node embeddings.
ad::Value pool_mean(const ad::Value& node_embeddings);

// Encoder -> per-graph mean pooling -> linear head. This is the backbone f.
class GraphClassifier {
public:
    GraphClassifier() = default;
    GraphClassifier(std::string name, GnnKind kind, std::size_t in_dim, std::size_t hidden, std::size_t classes,
                    double dropout, Rng& init);

    // Logits (B x C).
    ad::Value forward(const GraphBatch& batch, bool train, Rng& dropout_rng);
    ad::Value classify(const ad::Value& graph_embeddings) const { return head_.forward(graph_embeddings); }

    GnnEncoder& encoder() { return encoder_; }
    Linear& head() { return head_; }

    void collect(ParameterList& params);
    void collect(TensorList& tensors);

private:
    GnnEncoder encoder_;
    Linear head_;
};

}  // namespace mosgsl

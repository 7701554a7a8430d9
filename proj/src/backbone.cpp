#include "mosgsl/backbone.hpp"

#include <cmath>

#include "mosgsl/error.hpp"

namespace mosgsl {

GnnKind parse_gnn_kind(const std::string& s) {
    if (s == "gcn") return GnnKind::gcn;
    if (s == "sage") return GnnKind::sage;
    if (s == "gin") return GnnKind::gin;
    throw ConfigError("unknown backbone '" + s + "' (expected gcn, sage or gin)");
}

std::string to_string(GnnKind kind) {
    switch (kind) {
        case GnnKind::gcn: return "gcn";
        case GnnKind::sage: return "sage";
        case GnnKind::gin: return "gin";
    }
    return "gcn";
}

GraphBatch make_batch(std::vector<ad::Value> adjacency, std::vector<const Matrix*> features) {
    if (adjacency.size() != features.size() || adjacency.empty()) {
        throw ContractViolation("make_batch: need one feature matrix per adjacency and at least one graph");
    }
    GraphBatch batch;
    batch.offsets.push_back(0);
    const std::size_t f = features[0]->cols;
    std::vector<double> stacked;
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i]->cols != f) throw ContractViolation("make_batch: feature widths differ");
        if (adjacency[i].rows() != features[i]->rows) {
            throw ContractViolation("make_batch: adjacency " + shape_string(adjacency[i].rows(), adjacency[i].cols()) +
                                    " does not match " + std::to_string(features[i]->rows) + " feature rows");
        }
        stacked.insert(stacked.end(), features[i]->data.begin(), features[i]->data.end());
        batch.offsets.push_back(batch.offsets.back() + features[i]->rows);
    }
    batch.features = ad::Value::constant(batch.offsets.back(), f, std::move(stacked));
    batch.adjacency = std::move(adjacency);
    return batch;
}

GnnEncoder::GnnEncoder(std::string name, GnnKind kind, std::size_t in_dim, std::size_t hidden, double dropout,
                       Rng& init)
    : name_(std::move(name)), kind_(kind), hidden_(hidden), dropout_(dropout) {
    layers_.resize(kLayers);
    for (int l = 0; l < kLayers; ++l) {
        const std::string prefix = name_ + ".layer" + std::to_string(l);
        const std::size_t in = l == 0 ? in_dim : hidden;
        Layer& layer = layers_[static_cast<std::size_t>(l)];
        switch (kind_) {
            case GnnKind::gcn: layer.self = Linear(prefix + ".lin", in, hidden, init); break;
            case GnnKind::sage:
                layer.self = Linear(prefix + ".lin_self", in, hidden, init);
                layer.neighbour = Linear(prefix + ".lin_neighbour", in, hidden, init, false);
                break;
            case GnnKind::gin:
                layer.self = Linear(prefix + ".mlp0", in, hidden, init);
                layer.neighbour = Linear(prefix + ".mlp1", hidden, hidden, init);
                layer.gin_eps = Parameter(prefix + ".eps", Matrix(1, 1, 0.0));
                break;
        }
        layer.norm = BatchNorm(prefix + ".bn", hidden);
    }
}

ad::Value GnnEncoder::conv(Layer& layer, const ad::Value& h, const std::vector<ad::Value>& propagation,
                           const std::vector<std::size_t>& offsets) const {
    switch (kind_) {
        case GnnKind::gcn: {
            ad::Value z = ad::block_matmul(propagation, layer.self.project(h), offsets);
            return ad::add(z, layer.self.bias().value);
        }
        case GnnKind::sage: {
            ad::Value agg = ad::block_matmul(propagation, h, offsets);
            return ad::add(layer.self.forward(h), layer.neighbour.project(agg));
        }
        case GnnKind::gin: {
            ad::Value agg = ad::add(ad::mul(h, ad::add_scalar(layer.gin_eps.value, 1.0)),
                                    ad::block_matmul(propagation, h, offsets));
            return layer.neighbour.forward(ad::relu(layer.self.forward(agg)));
        }
    }
    return h;
}

namespace {

void check_adjacency(const ad::Value& a) {
    const std::size_t n = a.rows();
    if (a.cols() != n) throw ContractViolation("encoder: adjacency is not square " + shape_string(n, a.cols()));
    const auto d = a.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            const double x = d[i * n + j], y = d[j * n + i];
            if (x < 0.0 || std::abs(x - y) > 1e-12 * std::max(1.0, std::abs(x))) {
                throw ContractViolation("encoder: adjacency must be symmetric and non-negative (entry " +
                                        std::to_string(i) + "," + std::to_string(j) + ")");
            }
        }
}

}  // namespace

ad::Value GnnEncoder::encode(const GraphBatch& batch, bool train, Rng& dropout_rng) {
    std::vector<ad::Value> propagation;
    propagation.reserve(batch.size());
    for (const auto& a : batch.adjacency) {
        check_adjacency(a);
        switch (kind_) {
            case GnnKind::gcn: propagation.push_back(ad::gcn_normalize(a)); break;
            case GnnKind::sage: propagation.push_back(ad::row_normalize(a)); break;
            case GnnKind::gin: propagation.push_back(a); break;
        }
    }
    ad::Value h = batch.features;
    for (auto& layer : layers_) {
        h = conv(layer, h, propagation, batch.offsets);
        h = layer.norm.forward(h, train);
        h = ad::relu(h);
        h = ad::dropout(h, dropout_, train, dropout_rng);
    }
    return h;
}

void GnnEncoder::collect(ParameterList& params) {
    for (auto& layer : layers_) {
        layer.self.collect(params);
        if (kind_ != GnnKind::gcn) layer.neighbour.collect(params);
        if (kind_ == GnnKind::gin) params.push_back(&layer.gin_eps);
        layer.norm.collect(params);
    }
}

void GnnEncoder::collect(TensorList& tensors) {
    for (auto& layer : layers_) {
        layer.self.collect(tensors);
        if (kind_ != GnnKind::gcn) layer.neighbour.collect(tensors);
        if (kind_ == GnnKind::gin) tensors.push_back(tensor_ref(layer.gin_eps));
        layer.norm.collect(tensors);
    }
}

ad::Value pool_mean(const ad::Value& node_embeddings) {
    if (node_embeddings.rows() == 0) throw ContractViolation("pool_mean: no rows");
    return ad::mean(node_embeddings, ad::Axis::col_wise);
}

GraphClassifier::GraphClassifier(std::string name, GnnKind kind, std::size_t in_dim, std::size_t hidden,
                                 std::size_t classes, double dropout, Rng& init)
    : encoder_(name + ".encoder", kind, in_dim, hidden, dropout, init),
      head_(name + ".head", hidden, classes, init) {}

ad::Value GraphClassifier::forward(const GraphBatch& batch, bool train, Rng& dropout_rng) {
    ad::Value h = encoder_.encode(batch, train, dropout_rng);
    return head_.forward(ad::segment_mean(h, batch.offsets));
}

void GraphClassifier::collect(ParameterList& params) {
    encoder_.collect(params);
    head_.collect(params);
}

void GraphClassifier::collect(TensorList& tensors) {
    encoder_.collect(tensors);
    head_.collect(tensors);
}

}  // namespace mosgsl

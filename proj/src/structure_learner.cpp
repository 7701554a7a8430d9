#include "mosgsl/structure_learner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mosgsl/error.hpp"

namespace mosgsl {

Processor::Mode parse_processor_mode(const std::string& s) {
    if (s == "knn") return Processor::Mode::knn;
    if (s == "eps") return Processor::Mode::eps;
    throw ConfigError("unknown processor '" + s + "' (expected knn or eps)");
}

std::string to_string(Processor::Mode mode) { return mode == Processor::Mode::knn ? "knn" : "eps"; }

GraphLearner::GraphLearner(std::string name, std::size_t in_dim, std::size_t dim, Rng& init)
    : first_(name + ".mlp0", in_dim, dim, init), second_(name + ".mlp1", dim, dim, init), dim_(dim) {}

ad::Value GraphLearner::embed(const ad::Value& features) const {
    return second_.forward(ad::relu(first_.forward(features)));
}

ad::Value GraphLearner::similarity(const ad::Value& embedding) const {
    const double s = 1.0 / std::sqrt(static_cast<double>(dim_));
    return ad::sigmoid(ad::scale(ad::matmul(embedding, ad::transpose(embedding)), s));
}

void GraphLearner::collect(ParameterList& params) {
    first_.collect(params);
    second_.collect(params);
}

void GraphLearner::collect(TensorList& tensors) {
    first_.collect(tensors);
    second_.collect(tensors);
}

ad::Value apply_processor(const ad::Value& similarity, const Processor& processor) {
    const std::size_t m = similarity.rows();
    if (m == 0 || similarity.cols() != m) {
        throw ContractViolation("apply_processor: expected a non-empty square matrix, got " +
                                shape_string(m, similarity.cols()));
    }
    const auto s = similarity.data();
    std::vector<double> mask(m * m, 0.0);
    if (processor.mode == Processor::Mode::knn) {
        if (processor.k < 1) throw ConfigError("knn processor needs k >= 1");
        const std::size_t keep = std::min(static_cast<std::size_t>(processor.k), m - 1);
        std::vector<std::size_t> cand;
        for (std::size_t i = 0; i < m; ++i) {
            cand.clear();
            for (std::size_t j = 0; j < m; ++j)
                if (j != i) cand.push_back(j);
            std::stable_sort(cand.begin(), cand.end(),
                             [&](std::size_t a, std::size_t b) { return s[i * m + a] > s[i * m + b]; });
            for (std::size_t t = 0; t < keep; ++t) mask[i * m + cand[t]] = 1.0;
        }
    } else {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j)
                if (i != j && s[i * m + j] >= processor.theta) mask[i * m + j] = 1.0;
    }
    if (ad::branch_tracking())
        for (double v : mask) ad::record_branch(v != 0.0);
    ad::Value kept = ad::mul(similarity, ad::Value::constant(m, m, std::move(mask)));
    return ad::scale(ad::add(kept, ad::transpose(kept)), 0.5);
}

ad::Value learn_structure(const SubgraphView& view, const GraphLearner& learner, const Processor& processor) {
    const SubgraphView* ptr = &view;
    return learn_structures(std::span<const SubgraphView* const>(&ptr, 1), learner, processor).front();
}

std::vector<ad::Value> learn_structures(std::span<const SubgraphView* const> views, const GraphLearner& learner,
                                        const Processor& processor) {
    if (views.empty()) return {};
    std::vector<double> stacked;
    std::vector<std::size_t> offsets{0};
    const std::size_t f = views[0]->features.cols;
    for (const SubgraphView* v : views) {
        if (v->nodes.empty()) throw ContractViolation("learn_structure: view has no nodes");
        if (v->features.cols != f) throw ContractViolation("learn_structure: feature widths differ");
        stacked.insert(stacked.end(), v->features.data.begin(), v->features.data.end());
        offsets.push_back(offsets.back() + v->nodes.size());
    }
    const ad::Value embedding = learner.embed(ad::Value::constant(offsets.back(), f, std::move(stacked)));
    std::vector<ad::Value> out;
    out.reserve(views.size());
    for (std::size_t k = 0; k < views.size(); ++k) {
        const ad::Value local = ad::slice_rows(embedding, offsets[k], offsets[k + 1]);
        out.push_back(apply_processor(learner.similarity(local), processor));
    }
    return out;
}

}  // namespace mosgsl

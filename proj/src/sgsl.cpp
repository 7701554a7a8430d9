#include "mosgsl/sgsl.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "mosgsl/error.hpp"

namespace mosgsl {

ImportanceScorer::ImportanceScorer(std::string name, std::size_t dim, Rng& init) {
    Matrix p(1, dim);
    double norm = 0.0;
    while (norm < 1e-3) {
        norm = 0.0;
        for (double& v : p.data) {
            v = standard_normal(init) / std::sqrt(static_cast<double>(dim));
            norm += v * v;
        }
        norm = std::sqrt(norm);
    }
    p_ = Parameter(std::move(name) + ".p", p);
}

ad::Value ImportanceScorer::score(const ad::Value& embeddings) const {
    const ad::Value dot = ad::matmul(embeddings, ad::transpose(p_.value));
    return ad::mul(dot, ad::pow(ad::l2norm(p_.value), -1.0));
}

ad::Value embed_views(std::span<const SubgraphView* const> views, std::vector<ad::Value> adjacency,
                      GnnEncoder& encoder, bool train, Rng& dropout_rng) {
    std::vector<const Matrix*> features;
    features.reserve(views.size());
    for (const SubgraphView* v : views) features.push_back(&v->features);
    const GraphBatch batch = make_batch(std::move(adjacency), std::move(features));
    return ad::segment_mean(encoder.encode(batch, train, dropout_rng), batch.offsets);
}

ad::Value score_subgraphs(std::span<const SubgraphView* const> views, GnnEncoder& encoder,
                          const ImportanceScorer& scorer, bool train, Rng& dropout_rng) {
    if (views.empty()) throw ContractViolation("score_subgraphs: no views");
    std::vector<ad::Value> adjacency;
    adjacency.reserve(views.size());
    for (const SubgraphView* v : views) adjacency.push_back(ad::Value::constant(v->adjacency));
    return scorer.score(embed_views(views, std::move(adjacency), encoder, train, dropout_rng));
}

FusedStructure fuse(const Matrix& original, std::span<const ad::Value> refined, const ad::Value& alpha,
                    std::span<const SubgraphView* const> views, double gamma, bool with_provenance) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("fusion gamma must lie in [0, 1]");
    if (refined.size() != views.size() || alpha.size() != views.size()) {
        throw ContractViolation("fuse: need one refined matrix and one score per view");
    }
    if (original.rows != original.cols) throw ContractViolation("fuse: original adjacency must be square");
    const std::size_t n = original.rows;

    FusedStructure out;
    const ad::Value base = ad::scale(ad::Value::constant(original), 1.0 - gamma);
    if (views.empty()) {
        out.adjacency = ad::clamp(base, 0.0, 1.0);
        return out;
    }
    std::vector<std::vector<std::size_t>> maps;
    maps.reserve(views.size());
    for (const SubgraphView* v : views) maps.push_back(v->nodes);

    const ad::Value row_alpha = alpha.rows() == 1 ? alpha : ad::transpose(alpha);
    const ad::Value weights = ad::softmax_rows(row_alpha);
    const ad::Value vote = ad::weighted_scatter_sum(refined, weights, maps, n);
    out.adjacency = ad::clamp(ad::add(ad::scale(vote, gamma), base), 0.0, 1.0);

    if (with_provenance) {
        std::map<std::pair<int, int>, std::vector<int>> contrib;
        for (std::size_t k = 0; k < maps.size(); ++k) {
            const auto& map = maps[k];
            for (std::size_t a = 0; a < map.size(); ++a)
                for (std::size_t b = a + 1; b < map.size(); ++b) {
                    const auto u = static_cast<int>(std::min(map[a], map[b]));
                    const auto v = static_cast<int>(std::max(map[a], map[b]));
                    auto& ids = contrib[{u, v}];
                    if (ids.empty() || ids.back() != static_cast<int>(k)) ids.push_back(static_cast<int>(k));
                }
        }
        out.provenance.reserve(contrib.size());
        for (auto& [uv, ids] : contrib) out.provenance.push_back({uv.first, uv.second, std::move(ids)});
    }
    return out;
}

CandidateSet select_candidates(std::span<const double> alpha, double epsilon) {
    if (!(epsilon > 0.0 && epsilon <= 1.0)) throw ConfigError("candidate ratio epsilon must lie in (0, 1]");
    CandidateSet out;
    if (alpha.empty()) return out;
    std::vector<std::size_t> order(alpha.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return alpha[a] > alpha[b]; });
    // Guard against 0.6 * 5 = 3.0000000000000004 rounding up to 4.
    const double raw = epsilon * static_cast<double>(alpha.size());
    auto count = static_cast<std::size_t>(std::ceil(raw - 1e-9));
    count = std::clamp<std::size_t>(count, 1, alpha.size());
    out.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
    for (std::size_t i : out.indices) ad::record_branch(i);
    for (std::size_t i : out.indices) out.scores.push_back(alpha[i]);
    return out;
}

SubgraphStructureLearner::SubgraphStructureLearner(std::string name, GnnKind kind, std::size_t in_dim,
                                                   std::size_t hidden, double dropout, SgslOptions options,
                                                   Rng& init)
    : name_(std::move(name)),
      options_(options),
      learner_(name_ + ".learner", in_dim, hidden, init),
      encoder_(name_ + ".encoder", kind, in_dim, hidden, dropout, init),
      scorer_(name_ + ".scorer", hidden, init) {
    if (!(options_.gamma >= 0.0 && options_.gamma <= 1.0)) throw ConfigError("fusion gamma must lie in [0, 1]");
    if (!(options_.epsilon > 0.0 && options_.epsilon <= 1.0)) {
        throw ConfigError("candidate ratio epsilon must lie in (0, 1]");
    }
}

SgslBatch SubgraphStructureLearner::forward(std::span<const Graph* const> graphs,
                                            std::span<const std::vector<SubgraphView>* const> views, bool train,
                                            bool with_candidates, Rng& dropout_rng) {
    if (graphs.size() != views.size()) throw ContractViolation("SGSL forward: one view list per graph required");
    std::vector<const SubgraphView*> flat;
    std::vector<std::size_t> view_offsets{0};
    for (const auto* list : views) {
        if (list->empty()) throw ContractViolation("SGSL forward: graph without views");
        for (const auto& v : *list) flat.push_back(&v);
        view_offsets.push_back(flat.size());
    }

    const std::vector<ad::Value> refined = learn_structures(flat, learner_, options_.processor);
    const ad::Value alpha = score_subgraphs(flat, encoder_, scorer_, train, dropout_rng);

    SgslBatch out;
    out.fused.reserve(graphs.size());
    const auto alpha_values = alpha.data();
    for (std::size_t g = 0; g < graphs.size(); ++g) {
        const std::size_t b = view_offsets[g], e = view_offsets[g + 1];
        const ad::Value graph_alpha = ad::slice_rows(alpha, b, e);
        FusedStructure fused =
            fuse(graphs[g]->dense_adjacency(), std::span<const ad::Value>(refined).subspan(b, e - b), graph_alpha,
                 std::span<const SubgraphView* const>(flat).subspan(b, e - b), options_.gamma, false);
        out.fused.push_back(std::move(fused.adjacency));
        out.alpha.emplace_back(alpha_values.begin() + static_cast<std::ptrdiff_t>(b),
                               alpha_values.begin() + static_cast<std::ptrdiff_t>(e));
        out.candidates.push_back(select_candidates(out.alpha.back(), options_.epsilon).indices);
    }

    if (with_candidates) {
        std::vector<const SubgraphView*> cand_views;
        std::vector<ad::Value> cand_adj;
        out.candidate_offsets.push_back(0);
        for (std::size_t g = 0; g < graphs.size(); ++g) {
            for (std::size_t k : out.candidates[g]) {
                cand_views.push_back(flat[view_offsets[g] + k]);
                cand_adj.push_back(refined[view_offsets[g] + k]);
            }
            out.candidate_offsets.push_back(cand_views.size());
        }
        out.candidate_embeddings = embed_views(cand_views, std::move(cand_adj), encoder_, train, dropout_rng);
    }
    return out;
}

void SubgraphStructureLearner::collect(ParameterList& params) {
    learner_.collect(params);
    encoder_.collect(params);
    scorer_.collect(params);
}

void SubgraphStructureLearner::collect(TensorList& tensors) {
    learner_.collect(tensors);
    encoder_.collect(tensors);
    scorer_.collect(tensors);
}

}  // namespace mosgsl

#include "mosgsl/motif.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mosgsl/error.hpp"

namespace mosgsl {

std::vector<std::size_t> MotifBank::motifs_of(int cls) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < class_of.size(); ++j)
        if (class_of[j] == cls) out.push_back(j);
    return out;
}

std::vector<std::size_t> MotifBank::motifs_not_of(int cls) const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < class_of.size(); ++j)
        if (class_of[j] != cls) out.push_back(j);
    return out;
}

MotifBank make_motif_bank(std::size_t num_classes, std::size_t per_class, Matrix motifs) {
    if (per_class == 0) throw ConfigError("motifs per class must be >= 1");
    if (motifs.rows != num_classes * per_class) {
        throw ContractViolation("make_motif_bank: " + std::to_string(motifs.rows) + " motifs for " +
                                std::to_string(num_classes) + " classes x " + std::to_string(per_class));
    }
    MotifBank bank;
    bank.per_class = per_class;
    bank.num_classes = num_classes;
    bank.motifs = std::move(motifs);
    for (std::size_t j = 0; j < bank.motifs.rows; ++j) bank.class_of.push_back(static_cast<int>(j / per_class));
    return bank;
}

MotifBank random_motif_bank(std::size_t num_classes, std::size_t per_class, std::size_t dim, Rng& rng) {
    Matrix m(num_classes * per_class, dim);
    for (std::size_t j = 0; j < m.rows; ++j) {
        double norm = 0.0;
        while (norm == 0.0) {
            norm = 0.0;
            for (std::size_t c = 0; c < dim; ++c) {
                m(j, c) = standard_normal(rng);
                norm += m(j, c) * m(j, c);
            }
        }
        norm = std::sqrt(norm);
        for (std::size_t c = 0; c < dim; ++c) m(j, c) /= norm;
    }
    return make_motif_bank(num_classes, per_class, std::move(m));
}

MotifInit parse_motif_init(const std::string& s) {
    if (s == "random") return MotifInit::random;
    if (s == "pretrain") return MotifInit::pretrain;
    throw ConfigError("unknown motif init '" + s + "' (expected random or pretrain)");
}

std::string to_string(MotifInit init) { return init == MotifInit::random ? "random" : "pretrain"; }

Numerator parse_numerator(const std::string& s) {
    if (s == "min") return Numerator::min;
    if (s == "max") return Numerator::max;
    throw ConfigError("unknown numerator '" + s + "' (expected min or max)");
}

std::string to_string(Numerator n) { return n == Numerator::min ? "min" : "max"; }

double motif_similarity(std::span<const double> h, std::span<const double> m) {
    if (h.size() != m.size()) throw ContractViolation("motif_similarity: dimension mismatch");
    double dot = 0.0, hh = 0.0, mm = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        dot += h[i] * m[i];
        hh += h[i] * h[i];
        mm += m[i] * m[i];
    }
    if (hh == 0.0 || mm == 0.0) throw ContractViolation("motif_similarity: zero-norm input");
    return dot / (std::sqrt(hh) * std::sqrt(mm));
}

ad::Value motif_similarity_matrix(const ad::Value& embeddings, const Matrix& motifs) {
    if (embeddings.cols() != motifs.cols) {
        throw ContractViolation("motif_similarity_matrix: embedding dim " + std::to_string(embeddings.cols()) +
                                " vs motif dim " + std::to_string(motifs.cols));
    }
    const ad::Value norms = ad::l2norm(embeddings, ad::Axis::row_wise);
    for (double n : norms.data())
        if (n == 0.0) throw ContractViolation("motif_similarity_matrix: zero-norm embedding");

    // Motifs are constants: normalise them directly, transposed to d x L.
    const std::size_t L = motifs.rows, d = motifs.cols;
    std::vector<double> unit(d * L);
    for (std::size_t j = 0; j < L; ++j) {
        double nn = 0.0;
        for (std::size_t c = 0; c < d; ++c) nn += motifs(j, c) * motifs(j, c);
        if (nn == 0.0) throw ContractViolation("motif_similarity_matrix: zero-norm motif " + std::to_string(j));
        nn = std::sqrt(nn);
        for (std::size_t c = 0; c < d; ++c) unit[c * L + j] = motifs(j, c) / nn;
    }
    const ad::Value normalised = ad::mul(embeddings, ad::pow(norms, -1.0));
    return ad::matmul(normalised, ad::Value::constant(d, L, std::move(unit)));
}

ad::Value alignment_loss(const ad::Value& candidate_embeddings, int label, const MotifBank& bank, double temperature,
                         Numerator numerator) {
    if (temperature <= 0.0) throw ConfigError("motif temperature must be > 0");
    if (bank.num_classes < 2) throw ConfigError("alignment loss needs at least two classes (no negative motifs)");
    if (candidate_embeddings.rows() == 0) throw ContractViolation("alignment_loss: no candidates");
    const auto positives = bank.motifs_of(label);
    const auto negatives = bank.motifs_not_of(label);
    if (positives.empty() || negatives.empty()) {
        throw ContractViolation("alignment_loss: label " + std::to_string(label) + " has no positive or negative motifs");
    }
    const ad::Value sim = ad::scale(motif_similarity_matrix(candidate_embeddings, bank.motifs), 1.0 / temperature);
    const ad::Value pos = ad::exp(ad::gather_cols(sim, positives));
    const ad::Value neg = ad::exp(ad::gather_cols(sim, negatives));
    const ad::Value num = numerator == Numerator::min ? ad::min_reduce(pos, ad::Axis::row_wise)
                                                      : ad::max_reduce(pos, ad::Axis::row_wise);
    const ad::Value den = ad::sum(neg, ad::Axis::row_wise);
    return ad::mean(ad::sub(ad::log(num), ad::log(den)));
}

ad::Value total_loss(const ad::Value& task_loss, const ad::Value& motif_loss, double lambda) {
    if (lambda < 0.0) throw ConfigError("motif loss coefficient must be >= 0");
    return ad::sub(task_loss, ad::scale(motif_loss, lambda));
}

CandidateBuffer::CandidateBuffer(std::size_t num_classes, std::size_t capacity)
    : entries_(num_classes), capacity_(capacity) {}

void CandidateBuffer::add(int cls, std::span<const double> embedding, int graph_id) {
    if (cls < 0 || static_cast<std::size_t>(cls) >= entries_.size()) {
        throw ContractViolation("CandidateBuffer::add: class " + std::to_string(cls) + " out of range");
    }
    auto& q = entries_[static_cast<std::size_t>(cls)];
    if (capacity_ > 0 && q.size() == capacity_) q.pop_front();
    q.push_back({std::vector<double>(embedding.begin(), embedding.end()), graph_id});
}

void CandidateBuffer::clear() {
    for (auto& q : entries_) q.clear();
}

Matrix CandidateBuffer::points(int cls) const {
    const auto& q = entries_[static_cast<std::size_t>(cls)];
    if (q.empty()) return {};
    Matrix m(q.size(), q.front().embedding.size());
    for (std::size_t i = 0; i < q.size(); ++i) std::copy(q[i].embedding.begin(), q[i].embedding.end(), m.data.begin() + static_cast<std::ptrdiff_t>(i * m.cols));
    return m;
}

std::vector<int> CandidateBuffer::sources(int cls) const {
    std::vector<int> out;
    for (const auto& e : entries_[static_cast<std::size_t>(cls)]) out.push_back(e.graph_id);
    return out;
}

namespace {

double squared_distance(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.cols; ++c) {
        const double d = a(i, c) - b(j, c);
        s += d * d;
    }
    return s;
}

std::vector<std::size_t> assign(const Matrix& points, const Matrix& centroids) {
    std::vector<std::size_t> out(points.rows, 0);
    for (std::size_t i = 0; i < points.rows; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < centroids.rows; ++j) {
            const double d = squared_distance(points, i, centroids, j);
            if (d < best) {
                best = d;
                out[i] = j;
            }
        }
    }
    return out;
}

Matrix update(const Matrix& points, const std::vector<std::size_t>& assignment, const Matrix& current) {
    const std::size_t k = current.rows, d = current.cols;
    Matrix next(k, d, 0.0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < points.rows; ++i) {
        ++count[assignment[i]];
        for (std::size_t c = 0; c < d; ++c) next(assignment[i], c) += points(i, c);
    }
    std::vector<char> used(points.rows, 0);
    for (std::size_t j = 0; j < k; ++j) {
        if (count[j] > 0) {
            for (std::size_t c = 0; c < d; ++c) next(j, c) /= static_cast<double>(count[j]);
            continue;
        }
        // Empty cluster: reseed at the point farthest from its own centroid.
        std::size_t pick = points.rows;
        double far = -1.0;
        for (std::size_t i = 0; i < points.rows; ++i) {
            if (used[i]) continue;
            const double dist = squared_distance(points, i, current, assignment[i]);
            if (dist > far) {
                far = dist;
                pick = i;
            }
        }
        if (pick == points.rows) {
            for (std::size_t c = 0; c < d; ++c) next(j, c) = current(j, c);
            continue;
        }
        used[pick] = 1;
        for (std::size_t c = 0; c < d; ++c) next(j, c) = points(pick, c);
    }
    return next;
}

double inertia(const Matrix& points, const Matrix& centroids, const std::vector<std::size_t>& assignment) {
    double s = 0.0;
    for (std::size_t i = 0; i < points.rows; ++i) s += squared_distance(points, i, centroids, assignment[i]);
    return s;
}

}  // namespace

LloydResult lloyd_kmeans(const Matrix& points, const Matrix& initial, int max_iterations) {
    if (initial.rows == 0) throw ContractViolation("lloyd_kmeans: no initial centroids");
    if (points.rows > 0 && points.cols != initial.cols) {
        throw ContractViolation("lloyd_kmeans: point dim " + std::to_string(points.cols) + " vs centroid dim " +
                                std::to_string(initial.cols));
    }
    LloydResult result;
    result.centroids = initial;
    if (points.rows == 0) {
        result.converged = true;
        return result;
    }
    result.assignment = assign(points, result.centroids);
    for (int it = 0; it < max_iterations; ++it) {
        result.centroids = update(points, result.assignment, result.centroids);
        ++result.iterations;
        auto next = assign(points, result.centroids);
        if (next == result.assignment) {
            result.converged = true;
            break;
        }
        result.assignment = std::move(next);
    }
    result.inertia = inertia(points, result.centroids, result.assignment);
    return result;
}

LloydResult kmeans_random_restarts(const Matrix& points, std::size_t k, int restarts, Rng& rng) {
    if (points.rows == 0) throw ContractViolation("kmeans_random_restarts: no points");
    if (k == 0) throw ContractViolation("kmeans_random_restarts: k must be >= 1");
    LloydResult best;
    bool have = false;
    for (int r = 0; r < std::max(1, restarts); ++r) {
        std::vector<std::size_t> ids(points.rows);
        std::iota(ids.begin(), ids.end(), std::size_t{0});
        shuffle_in_place(std::span<std::size_t>(ids), rng);
        Matrix init(k, points.cols);
        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t src = ids[j % ids.size()];
            for (std::size_t c = 0; c < points.cols; ++c) init(j, c) = points(src, c);
        }
        LloydResult run = lloyd_kmeans(points, init);
        if (!have || run.inertia < best.inertia) {
            best = std::move(run);
            have = true;
        }
    }
    return best;
}

void extract_motifs(CandidateBuffer& buffer, MotifBank& bank) {
    for (std::size_t c = 0; c < bank.num_classes && c < buffer.num_classes(); ++c) {
        const int cls = static_cast<int>(c);
        if (buffer.count(cls) == 0) continue;
        const auto ids = bank.motifs_of(cls);
        Matrix init(ids.size(), bank.dim());
        for (std::size_t r = 0; r < ids.size(); ++r)
            for (std::size_t col = 0; col < bank.dim(); ++col) init(r, col) = bank.motifs(ids[r], col);
        const LloydResult run = lloyd_kmeans(buffer.points(cls), init);
        for (std::size_t r = 0; r < ids.size(); ++r)
            for (std::size_t col = 0; col < bank.dim(); ++col) bank.motifs(ids[r], col) = run.centroids(r, col);
    }
    buffer.clear();
    bank.staleness = 0;
}

}  // namespace mosgsl

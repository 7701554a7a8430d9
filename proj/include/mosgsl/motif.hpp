#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "mosgsl/autodiff.hpp"
#include "mosgsl/matrix.hpp"
#include "mosgsl/rng.hpp"

namespace mosgsl {

// R motif vectors per class; motif j belongs to class j / R.
struct MotifBank {
    std::size_t per_class = 0;
    std::size_t num_classes = 0;
    Matrix motifs;               // (R * C) x d
    std::vector<int> class_of;   // motif index -> class
    long staleness = 0;          // epochs since the last extraction

    std::size_t size() const { return motifs.rows; }
    std::size_t dim() const { return motifs.cols; }
    std::vector<std::size_t> motifs_of(int cls) const;
    std::vector<std::size_t> motifs_not_of(int cls) const;
};

MotifBank make_motif_bank(std::size_t num_classes, std::size_t per_class, Matrix motifs);

// Unit-normalised Gaussian motifs.
MotifBank random_motif_bank(std::size_t num_classes, std::size_t per_class, std::size_t dim, Rng& rng);

enum class MotifInit { random, pretrain };
enum class Numerator { min, max };

MotifInit parse_motif_init(const std::string& s);
std::string to_string(MotifInit init);
Numerator parse_numerator(const std::string& s);
std::string to_string(Numerator n);

// Cosine similarity; throws ContractViolation on a zero-norm input.
double motif_similarity(std::span<const double> h, std::span<const double> m);

// Cosine similarity of every embedding row against every motif (rows x L).
// Motifs are constants.
ad::Value motif_similarity_matrix(const ad::Value& embeddings, const Matrix& motifs);

// Mean over candidate rows of
//   log( min_{y(j)=label} e^{s_j/t} / sum_{y(j)!=label} e^{s_j/t} ).
// With Numerator::max the numerator takes the best-matching positive instead.
// The value is maximised during training.
ad::Value alignment_loss(const ad::Value& candidate_embeddings, int label, const MotifBank& bank, double temperature,
                         Numerator numerator = Numerator::min);

// task - lambda * motif.
ad::Value total_loss(const ad::Value& task_loss, const ad::Value& motif_loss, double lambda);

// Detached candidate embeddings collected between motif extractions, kept
// per class in a bounded FIFO.
class CandidateBuffer {
public:
    static constexpr std::size_t kDefaultCapacity = 4096;

    explicit CandidateBuffer(std::size_t num_classes = 0, std::size_t capacity = kDefaultCapacity);

    void add(int cls, std::span<const double> embedding, int graph_id);
    void clear();

    std::size_t count(int cls) const { return entries_[static_cast<std::size_t>(cls)].size(); }
    std::size_t num_classes() const { return entries_.size(); }
    // Buffered embeddings of one class as rows, oldest first.
    Matrix points(int cls) const;
    std::vector<int> sources(int cls) const;

private:
    struct Entry {
        std::vector<double> embedding;
        int graph_id = 0;
    };
    std::vector<std::deque<Entry>> entries_;
    std::size_t capacity_;
};

struct LloydResult {
    Matrix centroids;
    std::vector<std::size_t> assignment;
    int iterations = 0;
    bool converged = false;
    double inertia = 0.0;
};

inline constexpr int kLloydMaxIterations = 100;

// Lloyd's k-means from the given initial centroids. Points go to the nearest
// centroid (squared Euclidean, ties to the lower index); an empty cluster is
// reseeded at the point farthest from its current centroid. Stops when an
// assignment repeats or after max_iterations updates.
LloydResult lloyd_kmeans(const Matrix& points, const Matrix& initial, int max_iterations = kLloydMaxIterations);

// k-means with k distinct random points as initial centroids; keeps the best
// of `restarts` runs by inertia.
LloydResult kmeans_random_restarts(const Matrix& points, std::size_t k, int restarts, Rng& rng);

// Class-wise motif update: each class with buffered candidates gets the
// k-means centroids of its buffer, started from its current motifs. Classes
// without candidates keep their motifs. The buffer is cleared.
void extract_motifs(CandidateBuffer& buffer, MotifBank& bank);

}  // namespace mosgsl

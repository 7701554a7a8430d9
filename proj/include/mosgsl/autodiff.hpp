#pragma once

// Reverse-mode differentiation over dense 2-D double tensors.
//
// Every tensor is a (rows x cols) matrix; vectors are 1xN rows and scalars are
// 1x1. Each op records its parents and a local backward rule; backward() runs
// the rules in reverse topological order. Values that do not depend on any
// requires-grad leaf are folded into constants and record nothing.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "mosgsl/matrix.hpp"
#include "mosgsl/rng.hpp"

namespace mosgsl::ad {

struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first touched by backward()
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_rule;

    std::vector<double>& ensure_grad();
};

using NodePtr = std::shared_ptr<Node>;

class Value {
public:
    Value() = default;
    explicit Value(NodePtr node) : node_(std::move(node)) {}

    static Value constant(const Matrix& m);
    static Value constant(std::size_t rows, std::size_t cols, std::vector<double> data);
    static Value scalar(double v);
    // A leaf that accumulates gradients (a trainable tensor).
    static Value leaf(const Matrix& m);

    bool defined() const { return node_ != nullptr; }
    std::size_t rows() const { return node_->rows; }
    std::size_t cols() const { return node_->cols; }
    std::size_t size() const { return node_->data.size(); }
    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return !node_->backward_rule; }

    std::span<const double> data() const { return node_->data; }
    std::span<double> mutable_data() { return node_->data; }
    // Gradient, or an empty span if backward() never reached this value.
    std::span<const double> grad() const { return node_->grad; }
    double at(std::size_t r, std::size_t c) const { return node_->data[r * node_->cols + c]; }
    double item() const;

    Matrix to_matrix() const { return Matrix(rows(), cols(), node_->data); }
    void zero_grad();

    const NodePtr& node() const { return node_; }

private:
    NodePtr node_;
};

enum class Axis {
    all,       // -> 1x1
    col_wise,  // reduce each column over its rows -> 1 x cols
    row_wise,  // reduce each row over its columns -> rows x 1
};

// Linear algebra and elementwise arithmetic. Binary elementwise ops broadcast
// a dimension of size 1 against the other operand.
Value matmul(const Value& a, const Value& b);
Value transpose(const Value& a);
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value scale(const Value& a, double s);
Value add_scalar(const Value& a, double s);

Value relu(const Value& a);
Value sigmoid(const Value& a);
Value exp(const Value& a);
Value log(const Value& a);
Value pow(const Value& a, double exponent);
Value clamp(const Value& a, double lo, double hi);
Value softmax_rows(const Value& a);

Value sum(const Value& a, Axis axis = Axis::all);
Value mean(const Value& a, Axis axis = Axis::all);
Value min_reduce(const Value& a, Axis axis = Axis::all);
Value max_reduce(const Value& a, Axis axis = Axis::all);
// Euclidean norm: Frobenius for Axis::all, per row / column otherwise.
Value l2norm(const Value& a, Axis axis = Axis::all);

Value concat_rows(std::span<const Value> parts);
Value gather_rows(const Value& a, std::span<const std::size_t> index);
Value gather_cols(const Value& a, std::span<const std::size_t> index);
Value slice_rows(const Value& a, std::size_t begin, std::size_t end);
// out[index[i], :] += a[i, :], out has out_rows rows.
Value scatter_add_rows(const Value& a, std::span<const std::size_t> index, std::size_t out_rows);

// Inverted dropout: kept entries are scaled by 1/(1-rate) at train time;
// identity when train is false.
Value dropout(const Value& a, double rate, bool train, Rng& rng);

struct BatchNormStats {
    std::vector<double> running_mean;
    std::vector<double> running_var;
};

// Per-column batch normalisation of an (N x d) input. At train time uses the
// batch statistics and updates stats with the given momentum; at eval time
// uses stats.
Value batch_norm(const Value& x, const Value& gamma, const Value& beta, BatchNormStats& stats,
                 bool train, double momentum = 0.1, double eps = 1e-5);

// Mean over rows of softmax cross-entropy; labels[i] indexes a column of row i.
Value cross_entropy_with_logits(const Value& logits, std::span<const int> labels);

// Graph-specific fused ops.

// D^{-1/2} (A + I) D^{-1/2} with D the weighted degree of A + I.
Value gcn_normalize(const Value& adjacency);
// D^{-1} A; rows with zero weighted degree map to zero.
Value row_normalize(const Value& adjacency);
// Block-diagonal product: rows offsets[i]..offsets[i+1] of the result are
// blocks[i] times the matching rows of x. offsets has blocks.size()+1 entries.
Value block_matmul(std::span<const Value> blocks, const Value& x, std::span<const std::size_t> offsets);
// Mean (or sum) of each row segment of x -> (segments x cols).
Value segment_mean(const Value& x, std::span<const std::size_t> offsets);
Value segment_sum(const Value& x, std::span<const std::size_t> offsets);
// sum_k weights[k] * scatter(blocks[k]) into an (n x n) matrix, where block k's
// local index a maps to node_maps[k][a].
Value weighted_scatter_sum(std::span<const Value> blocks, const Value& weights,
                           std::span<const std::vector<std::size_t>> node_maps, std::size_t n);

// Branch fingerprint of piecewise ops (relu, clamp, min/max, sparsification
// masks, rankings). Off by default. Gradient checks use it to tell whether two
// nearby evaluations stayed on the same smooth piece.
void set_branch_tracking(bool on);
bool branch_tracking();
void record_branch(std::uint64_t choice);
// Fingerprint of the branches recorded since the last call; resets it.
std::uint64_t take_branch_fingerprint();

// Accumulates d(root)/d(x) into every requires-grad ancestor x. root must be
// 1x1. Leaf gradients accumulate across calls until zeroed.
void backward(const Value& root);

}  // namespace mosgsl::ad

#pragma once

// Trainable parameters, the Adam optimizer and the small layers shared by
// the backbone, the structure learner and the subgraph encoder.

#include <span>
#include <string>
#include <vector>

#include "mosgsl/autodiff.hpp"
#include "mosgsl/rng.hpp"

namespace mosgsl {

struct Parameter {
    std::string name;
    ad::Value value;  // requires-grad leaf

    Parameter() = default;
    Parameter(std::string n, const Matrix& init) : name(std::move(n)), value(ad::Value::leaf(init)) {}
};

// Named view of a tensor owned by a module: either a parameter's data or a
// non-trainable buffer such as batch-norm running statistics.
struct TensorRef {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::span<double> data;
};

using ParameterList = std::vector<Parameter*>;
using TensorList = std::vector<TensorRef>;

TensorRef tensor_ref(Parameter& p);
void zero_grad(std::span<Parameter* const> params);

// Deep copy of a module's tensors, used to restore the best-validation epoch.
struct Snapshot {
    std::vector<std::vector<double>> values;
};
Snapshot take_snapshot(const TensorList& tensors);
void restore_snapshot(const TensorList& tensors, const Snapshot& snapshot);

struct AdamOptions {
    double lr = 1e-3;
    double weight_decay = 0.0;  // L2 term added to the gradient
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    long step = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
};

// One bias-corrected Adam update. Parameters whose gradient was never
// populated are skipped. The parameter list must be the same (same order)
// on every call with a given state.
void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamOptions& options);

// Glorot-uniform (rows x cols) matrix.
Matrix glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng);

class Linear {
public:
    Linear() = default;
    Linear(std::string name, std::size_t in, std::size_t out, Rng& rng, bool bias = true);

    ad::Value forward(const ad::Value& x) const;
    // x W without the bias term.
    ad::Value project(const ad::Value& x) const;

    std::size_t in_features() const { return weight_.value.rows(); }
    std::size_t out_features() const { return weight_.value.cols(); }

    Parameter& weight() { return weight_; }
    Parameter& bias() { return bias_; }
    bool has_bias() const { return has_bias_; }

    void collect(ParameterList& params);
    void collect(TensorList& tensors);

private:
    Parameter weight_;  // in x out
    Parameter bias_;    // 1 x out
    bool has_bias_ = true;
};

class BatchNorm {
public:
    BatchNorm() = default;
    BatchNorm(std::string name, std::size_t dim);

    ad::Value forward(const ad::Value& x, bool train);

    void collect(ParameterList& params);
    void collect(TensorList& tensors);

private:
    std::string name_;
    Parameter gamma_;
    Parameter beta_;
    ad::BatchNormStats stats_;
};

}  // namespace mosgsl

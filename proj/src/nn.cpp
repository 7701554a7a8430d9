#include "mosgsl/nn.hpp"

#include <cmath>

#include "mosgsl/error.hpp"

namespace mosgsl {

TensorRef tensor_ref(Parameter& p) { return {p.name, p.value.rows(), p.value.cols(), p.value.mutable_data()}; }

void zero_grad(std::span<Parameter* const> params) {
    for (Parameter* p : params) p->value.zero_grad();
}

Snapshot take_snapshot(const TensorList& tensors) {
    Snapshot s;
    s.values.reserve(tensors.size());
    for (const auto& t : tensors) s.values.emplace_back(t.data.begin(), t.data.end());
    return s;
}

void restore_snapshot(const TensorList& tensors, const Snapshot& snapshot) {
    if (tensors.size() != snapshot.values.size()) throw ContractViolation("restore_snapshot: tensor count changed");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (tensors[i].data.size() != snapshot.values[i].size()) {
            throw ContractViolation("restore_snapshot: size mismatch for " + tensors[i].name);
        }
        std::copy(snapshot.values[i].begin(), snapshot.values[i].end(), tensors[i].data.begin());
    }
}

void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamOptions& options) {
    if (params.empty()) return;
    if (state.first_moment.size() != params.size()) {
        state.first_moment.assign(params.size(), {});
        state.second_moment.assign(params.size(), {});
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.first_moment[i].assign(params[i]->value.size(), 0.0);
            state.second_moment[i].assign(params[i]->value.size(), 0.0);
        }
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(options.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(options.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& value = params[i]->value;
        const auto grad = value.grad();
        if (grad.empty()) continue;
        auto data = value.mutable_data();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        for (std::size_t j = 0; j < data.size(); ++j) {
            const double g = grad[j] + options.weight_decay * data[j];
            m[j] = options.beta1 * m[j] + (1.0 - options.beta1) * g;
            v[j] = options.beta2 * v[j] + (1.0 - options.beta2) * g * g;
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            data[j] -= options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
        }
    }
}

Matrix glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix m(rows, cols);
    for (double& v : m.data) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        v = (2.0 * u - 1.0) * limit;
    }
    return m;
}

Linear::Linear(std::string name, std::size_t in, std::size_t out, Rng& rng, bool bias)
    : weight_(name + ".weight", glorot_uniform(in, out, rng)), has_bias_(bias) {
    if (bias) bias_ = Parameter(name + ".bias", Matrix(1, out, 0.0));
}

ad::Value Linear::project(const ad::Value& x) const { return ad::matmul(x, weight_.value); }

ad::Value Linear::forward(const ad::Value& x) const {
    ad::Value y = project(x);
    return has_bias_ ? ad::add(y, bias_.value) : y;
}

void Linear::collect(ParameterList& params) {
    params.push_back(&weight_);
    if (has_bias_) params.push_back(&bias_);
}

void Linear::collect(TensorList& tensors) {
    tensors.push_back(tensor_ref(weight_));
    if (has_bias_) tensors.push_back(tensor_ref(bias_));
}

BatchNorm::BatchNorm(std::string name, std::size_t dim)
    : name_(name), gamma_(name + ".gamma", Matrix(1, dim, 1.0)), beta_(name + ".beta", Matrix(1, dim, 0.0)) {
    stats_.running_mean.assign(dim, 0.0);
    stats_.running_var.assign(dim, 1.0);
}

ad::Value BatchNorm::forward(const ad::Value& x, bool train) {
    return ad::batch_norm(x, gamma_.value, beta_.value, stats_, train);
}

void BatchNorm::collect(ParameterList& params) {
    params.push_back(&gamma_);
    params.push_back(&beta_);
}

void BatchNorm::collect(TensorList& tensors) {
    tensors.push_back(tensor_ref(gamma_));
    tensors.push_back(tensor_ref(beta_));
    const std::size_t d = stats_.running_mean.size();
    tensors.push_back({name_ + ".running_mean", 1, d, stats_.running_mean});
    tensors.push_back({name_ + ".running_var", 1, d, stats_.running_var});
}

}  // namespace mosgsl

#include "mosgsl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "mosgsl/error.hpp"

namespace mosgsl::ad {

namespace {
thread_local bool tracking_on = false;
thread_local std::uint64_t fingerprint = 1469598103934665603ull;
}  // namespace

void set_branch_tracking(bool on) { tracking_on = on; }
bool branch_tracking() { return tracking_on; }

void record_branch(std::uint64_t choice) {
    if (!tracking_on) return;
    fingerprint = (fingerprint ^ (choice + 0x9e3779b97f4a7c15ull)) * 1099511628211ull;
}

std::uint64_t take_branch_fingerprint() {
    const std::uint64_t out = fingerprint;
    fingerprint = 1469598103934665603ull;
    return out;
}

std::vector<double>& Node::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
}

Value Value::constant(const Matrix& m) { return constant(m.rows, m.cols, m.data); }

Value Value::constant(std::size_t rows, std::size_t cols, std::vector<double> data) {
    if (data.size() != rows * cols) {
        throw ContractViolation("Value::constant: " + std::to_string(data.size()) + " values for shape " +
                                shape_string(rows, cols));
    }
    auto node = std::make_shared<Node>();
    node->rows = rows;
    node->cols = cols;
    node->data = std::move(data);
    return Value(std::move(node));
}

Value Value::scalar(double v) { return constant(1, 1, {v}); }

Value Value::leaf(const Matrix& m) {
    Value v = constant(m);
    v.node_->requires_grad = true;
    return v;
}

double Value::item() const {
    if (size() != 1) throw ContractViolation("item() on non-scalar of shape " + shape_string(rows(), cols()));
    return node_->data[0];
}

void Value::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

namespace {

using Rule = std::function<void(Node&)>;

Value make_result(std::size_t rows, std::size_t cols, std::vector<double> data, std::vector<NodePtr> parents,
                  Rule rule) {
    auto node = std::make_shared<Node>();
    node->rows = rows;
    node->cols = cols;
    node->data = std::move(data);
    node->requires_grad =
        std::any_of(parents.begin(), parents.end(), [](const NodePtr& p) { return p->requires_grad; });
    if (node->requires_grad) {
        node->parents = std::move(parents);
        node->backward_rule = std::move(rule);
    }
    return Value(std::move(node));
}

[[noreturn]] void shape_error(const char* op, const Value& a, const Value& b) {
    throw ContractViolation(std::string(op) + ": incompatible shapes " + shape_string(a.rows(), a.cols()) +
                            " and " + shape_string(b.rows(), b.cols()));
}

std::size_t broadcast_dim(std::size_t x, std::size_t y, bool& ok) {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    ok = false;
    return 0;
}

enum class BinaryKind { add, sub, mul };

Value binary(const Value& a, const Value& b, BinaryKind kind, const char* name) {
    bool ok = true;
    const std::size_t rows = broadcast_dim(a.rows(), b.rows(), ok);
    const std::size_t cols = broadcast_dim(a.cols(), b.cols(), ok);
    if (!ok) shape_error(name, a, b);

    const std::size_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
    auto a_index = [ar, ac](std::size_t r, std::size_t c) { return (ar == 1 ? 0 : r) * ac + (ac == 1 ? 0 : c); };
    auto b_index = [br, bc](std::size_t r, std::size_t c) { return (br == 1 ? 0 : r) * bc + (bc == 1 ? 0 : c); };

    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<double> out(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const double x = ad[a_index(r, c)];
            const double y = bd[b_index(r, c)];
            double v = 0.0;
            switch (kind) {
                case BinaryKind::add: v = x + y; break;
                case BinaryKind::sub: v = x - y; break;
                case BinaryKind::mul: v = x * y; break;
            }
            out[r * cols + c] = v;
        }
    }

    return make_result(rows, cols, std::move(out), {a.node(), b.node()},
                       [kind, rows, cols, a_index, b_index](Node& self) {
                           Node& pa = *self.parents[0];
                           Node& pb = *self.parents[1];
                           for (std::size_t r = 0; r < rows; ++r) {
                               for (std::size_t c = 0; c < cols; ++c) {
                                   const double g = self.grad[r * cols + c];
                                   const std::size_t ia = a_index(r, c);
                                   const std::size_t ib = b_index(r, c);
                                   if (pa.requires_grad) {
                                       pa.ensure_grad()[ia] += kind == BinaryKind::mul ? g * pb.data[ib] : g;
                                   }
                                   if (pb.requires_grad) {
                                       double gb = g;
                                       if (kind == BinaryKind::sub) gb = -g;
                                       if (kind == BinaryKind::mul) gb = g * pa.data[ia];
                                       pb.ensure_grad()[ib] += gb;
                                   }
                               }
                           }
                       });
}

// Elementwise unary op: forward f(x), backward g * df(x, y).
template <typename F, typename DF>
Value unary(const Value& a, F f, DF df) {
    const auto ad = a.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < ad.size(); ++i) out[i] = f(ad[i]);
    return make_result(a.rows(), a.cols(), std::move(out), {a.node()}, [df](Node& self) {
        Node& p = *self.parents[0];
        auto& pg = p.ensure_grad();
        for (std::size_t i = 0; i < self.data.size(); ++i) pg[i] += self.grad[i] * df(p.data[i], self.data[i]);
    });
}

void gemm_acc(const double* a, const double* b, double* out, std::size_t n, std::size_t k, std::size_t m) {
    // out(n x m) += a(n x k) * b(k x m)
    for (std::size_t i = 0; i < n; ++i) {
        double* orow = out + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = b + p * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
}

// out(k x m) += a(n x k)^T * g(n x m)
void gemm_at_acc(const double* a, const double* g, double* out, std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* grow = g + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            double* orow = out + p * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += av * grow[j];
        }
    }
}

// out(n x k) += g(n x m) * b(k x m)^T
void gemm_bt_acc(const double* g, const double* b, double* out, std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* grow = g + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * m;
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) s += grow[j] * brow[j];
            out[i * k + p] += s;
        }
    }
}

struct ReduceLayout {
    std::size_t out_rows;
    std::size_t out_cols;
    // Output slot for input element (r, c).
    std::size_t slot(std::size_t r, std::size_t c, Axis axis) const {
        switch (axis) {
            case Axis::all: return 0;
            case Axis::col_wise: return c;
            case Axis::row_wise: return r;
        }
        return 0;
    }
};

ReduceLayout reduce_layout(const Value& a, Axis axis) {
    switch (axis) {
        case Axis::all: return {1, 1};
        case Axis::col_wise: return {1, a.cols()};
        case Axis::row_wise: return {a.rows(), 1};
    }
    return {1, 1};
}

Value extreme_reduce(const Value& a, Axis axis, bool take_min, const char* name) {
    if (a.size() == 0) throw ContractViolation(std::string(name) + ": empty input");
    const auto layout = reduce_layout(a, axis);
    const std::size_t cols = a.cols();
    const auto ad = a.data();
    std::vector<double> out(layout.out_rows * layout.out_cols);
    std::vector<std::size_t> arg(out.size(), std::numeric_limits<std::size_t>::max());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t s = layout.slot(r, c, axis);
            const double v = ad[r * cols + c];
            const bool better = arg[s] == std::numeric_limits<std::size_t>::max() ||
                                (take_min ? v < out[s] : v > out[s]);
            if (better) {
                out[s] = v;
                arg[s] = r * cols + c;
            }
        }
    }
    if (tracking_on)
        for (std::size_t s : arg) record_branch(s);
    return make_result(layout.out_rows, layout.out_cols, std::move(out), {a.node()},
                       [arg = std::move(arg)](Node& self) {
                           auto& pg = self.parents[0]->ensure_grad();
                           for (std::size_t s = 0; s < arg.size(); ++s) pg[arg[s]] += self.grad[s];
                       });
}

void require_rank_match(const char* op, std::size_t a, std::size_t b, const std::string& what) {
    if (a != b) {
        throw ContractViolation(std::string(op) + ": " + what + " mismatch (" + std::to_string(a) + " vs " +
                                std::to_string(b) + ")");
    }
}

}  // namespace

Value matmul(const Value& a, const Value& b) {
    if (a.cols() != b.rows()) shape_error("matmul", a, b);
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    std::vector<double> out(n * m, 0.0);
    gemm_acc(a.data().data(), b.data().data(), out.data(), n, k, m);
    return make_result(n, m, std::move(out), {a.node(), b.node()}, [n, k, m](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) gemm_bt_acc(self.grad.data(), pb.data.data(), pa.ensure_grad().data(), n, k, m);
        if (pb.requires_grad) gemm_at_acc(pa.data.data(), self.grad.data(), pb.ensure_grad().data(), n, k, m);
    });
}

Value transpose(const Value& a) {
    const std::size_t r = a.rows(), c = a.cols();
    const auto ad = a.data();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = ad[i * c + j];
    return make_result(c, r, std::move(out), {a.node()}, [r, c](Node& self) {
        auto& pg = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) pg[i * c + j] += self.grad[j * r + i];
    });
}

Value add(const Value& a, const Value& b) { return binary(a, b, BinaryKind::add, "add"); }
Value sub(const Value& a, const Value& b) { return binary(a, b, BinaryKind::sub, "sub"); }
Value mul(const Value& a, const Value& b) { return binary(a, b, BinaryKind::mul, "mul"); }

Value scale(const Value& a, double s) {
    return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Value add_scalar(const Value& a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}


Value relu(const Value& a) {
    if (tracking_on)
        for (double x : a.data()) record_branch(x > 0.0);
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Value sigmoid(const Value& a) {
    return unary(
        a,
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Value exp(const Value& a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Value log(const Value& a) {
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Value pow(const Value& a, double exponent) {
    return unary(
        a, [exponent](double x) { return std::pow(x, exponent); },
        [exponent](double x, double) { return exponent * std::pow(x, exponent - 1.0); });
}

Value clamp(const Value& a, double lo, double hi) {
    if (lo > hi) throw ContractViolation("clamp: lo > hi");
    if (tracking_on)
        for (double x : a.data()) record_branch(x < lo ? 0 : (x > hi ? 2 : 1));
    return unary(
        a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Value softmax_rows(const Value& a) {
    const std::size_t r = a.rows(), c = a.cols();
    if (c == 0) throw ContractViolation("softmax_rows: zero columns");
    const auto ad = a.data();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        const double* row = ad.data() + i * c;
        const double mx = *std::max_element(row, row + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += (out[i * c + j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
    }
    return make_result(r, c, std::move(out), {a.node()}, [r, c](Node& self) {
        auto& pg = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < r; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += self.grad[i * c + j] * self.data[i * c + j];
            for (std::size_t j = 0; j < c; ++j) pg[i * c + j] += self.data[i * c + j] * (self.grad[i * c + j] - dot);
        }
    });
}

Value sum(const Value& a, Axis axis) {
    const auto layout = reduce_layout(a, axis);
    const std::size_t rows = a.rows(), cols = a.cols();
    const auto ad = a.data();
    std::vector<double> out(layout.out_rows * layout.out_cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[layout.slot(r, c, axis)] += ad[r * cols + c];
    return make_result(layout.out_rows, layout.out_cols, std::move(out), {a.node()},
                       [layout, rows, cols, axis](Node& self) {
                           auto& pg = self.parents[0]->ensure_grad();
                           for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t c = 0; c < cols; ++c)
                                   pg[r * cols + c] += self.grad[layout.slot(r, c, axis)];
                       });
}

Value mean(const Value& a, Axis axis) {
    std::size_t count = 0;
    switch (axis) {
        case Axis::all: count = a.size(); break;
        case Axis::col_wise: count = a.rows(); break;
        case Axis::row_wise: count = a.cols(); break;
    }
    if (count == 0) throw ContractViolation("mean: empty input of shape " + shape_string(a.rows(), a.cols()));
    return scale(sum(a, axis), 1.0 / static_cast<double>(count));
}

Value min_reduce(const Value& a, Axis axis) { return extreme_reduce(a, axis, true, "min_reduce"); }
Value max_reduce(const Value& a, Axis axis) { return extreme_reduce(a, axis, false, "max_reduce"); }

Value l2norm(const Value& a, Axis axis) {
    const auto layout = reduce_layout(a, axis);
    const std::size_t rows = a.rows(), cols = a.cols();
    const auto ad = a.data();
    std::vector<double> out(layout.out_rows * layout.out_cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            const double v = ad[r * cols + c];
            out[layout.slot(r, c, axis)] += v * v;
        }
    for (double& v : out) v = std::sqrt(v);
    return make_result(layout.out_rows, layout.out_cols, std::move(out), {a.node()},
                       [layout, rows, cols, axis](Node& self) {
                           Node& p = *self.parents[0];
                           auto& pg = p.ensure_grad();
                           for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t c = 0; c < cols; ++c) {
                                   const std::size_t s = layout.slot(r, c, axis);
                                   if (self.data[s] > 0.0)
                                       pg[r * cols + c] += self.grad[s] * p.data[r * cols + c] / self.data[s];
                               }
                       });
}

Value concat_rows(std::span<const Value> parts) {
    if (parts.empty()) throw ContractViolation("concat_rows: no inputs");
    const std::size_t cols = parts[0].cols();
    std::size_t rows = 0;
    std::vector<NodePtr> parents;
    parents.reserve(parts.size());
    for (const auto& p : parts) {
        if (p.cols() != cols) shape_error("concat_rows", parts[0], p);
        rows += p.rows();
        parents.push_back(p.node());
    }
    std::vector<double> out;
    out.reserve(rows * cols);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    return make_result(rows, cols, std::move(out), std::move(parents), [](Node& self) {
        std::size_t offset = 0;
        for (auto& p : self.parents) {
            const std::size_t n = p->data.size();
            if (p->requires_grad) {
                auto& pg = p->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) pg[i] += self.grad[offset + i];
            }
            offset += n;
        }
    });
}

Value gather_rows(const Value& a, std::span<const std::size_t> index) {
    const std::size_t cols = a.cols();
    const auto ad = a.data();
    std::vector<double> out(index.size() * cols);
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= a.rows()) {
            throw ContractViolation("gather_rows: index " + std::to_string(index[i]) + " out of range for " +
                                    shape_string(a.rows(), cols));
        }
        std::copy_n(ad.data() + index[i] * cols, cols, out.data() + i * cols);
    }
    return make_result(index.size(), cols, std::move(out), {a.node()},
                       [idx = std::vector<std::size_t>(index.begin(), index.end()), cols](Node& self) {
                           auto& pg = self.parents[0]->ensure_grad();
                           for (std::size_t i = 0; i < idx.size(); ++i)
                               for (std::size_t c = 0; c < cols; ++c) pg[idx[i] * cols + c] += self.grad[i * cols + c];
                       });
}

Value gather_cols(const Value& a, std::span<const std::size_t> index) {
    const std::size_t rows = a.rows(), cols = a.cols(), k = index.size();
    for (std::size_t j : index)
        if (j >= cols) {
            throw ContractViolation("gather_cols: index " + std::to_string(j) + " out of range for " +
                                    shape_string(rows, cols));
        }
    const auto ad = a.data();
    std::vector<double> out(rows * k);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < k; ++j) out[r * k + j] = ad[r * cols + index[j]];
    return make_result(rows, k, std::move(out), {a.node()},
                       [idx = std::vector<std::size_t>(index.begin(), index.end()), rows, cols](Node& self) {
                           auto& pg = self.parents[0]->ensure_grad();
                           const std::size_t k = idx.size();
                           for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t j = 0; j < k; ++j) pg[r * cols + idx[j]] += self.grad[r * k + j];
                       });
}

Value slice_rows(const Value& a, std::size_t begin, std::size_t end) {
    if (begin > end || end > a.rows()) {
        throw ContractViolation("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                                ") out of range for " + shape_string(a.rows(), a.cols()));
    }
    const std::size_t cols = a.cols();
    std::vector<double> out(a.data().begin() + begin * cols, a.data().begin() + end * cols);
    return make_result(end - begin, cols, std::move(out), {a.node()}, [begin, cols](Node& self) {
        auto& pg = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < self.data.size(); ++i) pg[begin * cols + i] += self.grad[i];
    });
}

Value scatter_add_rows(const Value& a, std::span<const std::size_t> index, std::size_t out_rows) {
    require_rank_match("scatter_add_rows", a.rows(), index.size(), "row count vs index length");
    const std::size_t cols = a.cols();
    const auto ad = a.data();
    std::vector<double> out(out_rows * cols, 0.0);
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= out_rows) {
            throw ContractViolation("scatter_add_rows: index " + std::to_string(index[i]) + " >= " +
                                    std::to_string(out_rows));
        }
        for (std::size_t c = 0; c < cols; ++c) out[index[i] * cols + c] += ad[i * cols + c];
    }
    return make_result(out_rows, cols, std::move(out), {a.node()},
                       [idx = std::vector<std::size_t>(index.begin(), index.end()), cols](Node& self) {
                           auto& pg = self.parents[0]->ensure_grad();
                           for (std::size_t i = 0; i < idx.size(); ++i)
                               for (std::size_t c = 0; c < cols; ++c) pg[i * cols + c] += self.grad[idx[i] * cols + c];
                       });
}

Value dropout(const Value& a, double rate, bool train, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ContractViolation("dropout: rate must lie in [0, 1)");
    if (!train || rate == 0.0) return a;
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(a.size());
    for (double& m : mask) {
        // 53-bit uniform in [0, 1), independent of the standard library's
        // distribution implementations.
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        m = u < rate ? 0.0 : keep_scale;
    }
    const auto ad = a.data();
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * mask[i];
    return make_result(a.rows(), a.cols(), std::move(out), {a.node()}, [mask = std::move(mask)](Node& self) {
        auto& pg = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < mask.size(); ++i) pg[i] += self.grad[i] * mask[i];
    });
}

Value batch_norm(const Value& x, const Value& gamma, const Value& beta, BatchNormStats& stats, bool train,
                 double momentum, double eps) {
    const std::size_t n = x.rows(), d = x.cols();
    if (gamma.size() != d || beta.size() != d) shape_error("batch_norm", x, gamma);
    if (n == 0) throw ContractViolation("batch_norm: empty batch");
    if (stats.running_mean.size() != d) {
        stats.running_mean.assign(d, 0.0);
        stats.running_var.assign(d, 1.0);
    }
    const auto xd = x.data();
    std::vector<double> mu(d, 0.0), inv_std(d, 0.0);
    if (train) {
        std::vector<double> var(d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) mu[j] += xd[i * d + j];
        for (double& m : mu) m /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                const double c = xd[i * d + j] - mu[j];
                var[j] += c * c;
            }
        for (std::size_t j = 0; j < d; ++j) {
            const double biased = var[j] / static_cast<double>(n);
            const double unbiased = n > 1 ? var[j] / static_cast<double>(n - 1) : biased;
            inv_std[j] = 1.0 / std::sqrt(biased + eps);
            stats.running_mean[j] = (1.0 - momentum) * stats.running_mean[j] + momentum * mu[j];
            stats.running_var[j] = (1.0 - momentum) * stats.running_var[j] + momentum * unbiased;
        }
    } else {
        for (std::size_t j = 0; j < d; ++j) {
            mu[j] = stats.running_mean[j];
            inv_std[j] = 1.0 / std::sqrt(stats.running_var[j] + eps);
        }
    }
    const auto gd = gamma.data();
    const auto bd = beta.data();
    std::vector<double> xhat(n * d), out(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (xd[i * d + j] - mu[j]) * inv_std[j];
            xhat[i * d + j] = h;
            out[i * d + j] = gd[j] * h + bd[j];
        }
    return make_result(
        n, d, std::move(out), {x.node(), gamma.node(), beta.node()},
        [n, d, train, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
            Node& px = *self.parents[0];
            Node& pgam = *self.parents[1];
            Node& pbet = *self.parents[2];
            if (pbet.requires_grad) {
                auto& g = pbet.ensure_grad();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[i * d + j];
            }
            if (pgam.requires_grad) {
                auto& g = pgam.ensure_grad();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[i * d + j] * xhat[i * d + j];
            }
            if (!px.requires_grad) return;
            auto& gx = px.ensure_grad();
            if (!train) {
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < d; ++j)
                        gx[i * d + j] += self.grad[i * d + j] * pgam.data[j] * inv_std[j];
                return;
            }
            const double inv_n = 1.0 / static_cast<double>(n);
            for (std::size_t j = 0; j < d; ++j) {
                double sum_g = 0.0, sum_gx = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double dxhat = self.grad[i * d + j] * pgam.data[j];
                    sum_g += dxhat;
                    sum_gx += dxhat * xhat[i * d + j];
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double dxhat = self.grad[i * d + j] * pgam.data[j];
                    gx[i * d + j] += inv_n * inv_std[j] *
                                     (static_cast<double>(n) * dxhat - sum_g - xhat[i * d + j] * sum_gx);
                }
            }
        });
}

Value cross_entropy_with_logits(const Value& logits, std::span<const int> labels) {
    const std::size_t n = logits.rows(), c = logits.cols();
    require_rank_match("cross_entropy_with_logits", n, labels.size(), "batch size vs label count");
    if (n == 0 || c == 0) throw ContractViolation("cross_entropy_with_logits: empty logits");
    const auto ld = logits.data();
    std::vector<double> probs(n * c);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
            throw ContractViolation("cross_entropy_with_logits: label " + std::to_string(labels[i]) +
                                    " outside [0, " + std::to_string(c) + ")");
        }
        const double* row = ld.data() + i * c;
        const double mx = *std::max_element(row, row + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += (probs[i * c + j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= z;
        loss += (mx + std::log(z)) - row[labels[i]];
    }
    loss /= static_cast<double>(n);
    return make_result(1, 1, {loss}, {logits.node()},
                       [probs = std::move(probs), lab = std::vector<int>(labels.begin(), labels.end()), n,
                        c](Node& self) {
                           auto& pg = self.parents[0]->ensure_grad();
                           const double g = self.grad[0] / static_cast<double>(n);
                           for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t j = 0; j < c; ++j) {
                                   const double target = static_cast<int>(j) == lab[i] ? 1.0 : 0.0;
                                   pg[i * c + j] += g * (probs[i * c + j] - target);
                               }
                       });
}

Value gcn_normalize(const Value& adjacency) {
    const std::size_t n = adjacency.rows();
    if (adjacency.cols() != n) shape_error("gcn_normalize", adjacency, adjacency);
    const auto ad = adjacency.data();
    std::vector<double> deg(n, 1.0), s(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) deg[i] += ad[i * n + j];
    for (std::size_t i = 0; i < n; ++i) s[i] = deg[i] > 0.0 ? 1.0 / std::sqrt(deg[i]) : 0.0;
    std::vector<double> out(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double a = ad[i * n + j] + (i == j ? 1.0 : 0.0);
            out[i * n + j] = s[i] * a * s[j];
        }
    return make_result(n, n, std::move(out), {adjacency.node()},
                       [n, deg = std::move(deg), s = std::move(s)](Node& self) {
                           Node& p = *self.parents[0];
                           auto& pg = p.ensure_grad();
                           // d out_ij / d s_i and d s_j, folded into per-node sums.
                           std::vector<double> gs(n, 0.0);
                           for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t j = 0; j < n; ++j) {
                                   const double g = self.grad[i * n + j];
                                   const double a = p.data[i * n + j] + (i == j ? 1.0 : 0.0);
                                   pg[i * n + j] += g * s[i] * s[j];
                                   gs[i] += g * a * s[j];
                                   gs[j] += g * s[i] * a;
                               }
                           for (std::size_t i = 0; i < n; ++i) {
                               if (deg[i] <= 0.0) continue;
                               const double gdeg = gs[i] * (-0.5) * s[i] / deg[i];
                               for (std::size_t j = 0; j < n; ++j) pg[i * n + j] += gdeg;
                           }
                       });
}

Value row_normalize(const Value& adjacency) {
    const std::size_t n = adjacency.rows(), m = adjacency.cols();
    const auto ad = adjacency.data();
    std::vector<double> deg(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) deg[i] += ad[i * m + j];
    std::vector<double> out(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (deg[i] == 0.0) continue;
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] = ad[i * m + j] / deg[i];
    }
    return make_result(n, m, std::move(out), {adjacency.node()}, [n, m, deg = std::move(deg)](Node& self) {
        auto& pg = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
            if (deg[i] == 0.0) continue;
            double dot = 0.0;
            for (std::size_t j = 0; j < m; ++j) dot += self.grad[i * m + j] * self.data[i * m + j];
            for (std::size_t j = 0; j < m; ++j) pg[i * m + j] += (self.grad[i * m + j] - dot) / deg[i];
        }
    });
}

Value block_matmul(std::span<const Value> blocks, const Value& x, std::span<const std::size_t> offsets) {
    require_rank_match("block_matmul", offsets.size(), blocks.size() + 1, "offset count");
    if (offsets.back() != x.rows()) {
        throw ContractViolation("block_matmul: offsets cover " + std::to_string(offsets.back()) + " rows, x has " +
                                std::to_string(x.rows()));
    }
    const std::size_t cols = x.cols();
    std::vector<NodePtr> parents{x.node()};
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const std::size_t nb = offsets[b + 1] - offsets[b];
        if (blocks[b].rows() != nb || blocks[b].cols() != nb) {
            throw ContractViolation("block_matmul: block " + std::to_string(b) + " has shape " +
                                    shape_string(blocks[b].rows(), blocks[b].cols()) + ", expected " +
                                    shape_string(nb, nb));
        }
        parents.push_back(blocks[b].node());
    }
    std::vector<double> out(x.rows() * cols, 0.0);
    const double* xd = x.data().data();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const std::size_t o = offsets[b], nb = offsets[b + 1] - o;
        gemm_acc(blocks[b].data().data(), xd + o * cols, out.data() + o * cols, nb, nb, cols);
    }
    return make_result(x.rows(), cols, std::move(out), std::move(parents),
                       [offs = std::vector<std::size_t>(offsets.begin(), offsets.end()), cols](Node& self) {
                           Node& px = *self.parents[0];
                           for (std::size_t b = 0; b + 1 < offs.size(); ++b) {
                               Node& pb = *self.parents[b + 1];
                               const std::size_t o = offs[b], nb = offs[b + 1] - o;
                               const double* g = self.grad.data() + o * cols;
                               if (pb.requires_grad)
                                   gemm_bt_acc(g, px.data.data() + o * cols, pb.ensure_grad().data(), nb, nb, cols);
                               if (px.requires_grad)
                                   gemm_at_acc(pb.data.data(), g, px.ensure_grad().data() + o * cols, nb, nb, cols);
                           }
                       });
}

namespace {

Value segment_reduce(const Value& x, std::span<const std::size_t> offsets, bool average, const char* name) {
    if (offsets.size() < 2 || offsets.back() != x.rows()) {
        throw ContractViolation(std::string(name) + ": offsets do not cover " + std::to_string(x.rows()) + " rows");
    }
    const std::size_t segs = offsets.size() - 1, cols = x.cols();
    std::vector<double> weight(segs);
    for (std::size_t s = 0; s < segs; ++s) {
        const std::size_t len = offsets[s + 1] - offsets[s];
        if (len == 0 && average) throw ContractViolation(std::string(name) + ": empty segment " + std::to_string(s));
        weight[s] = average ? 1.0 / static_cast<double>(len) : 1.0;
    }
    const auto xd = x.data();
    std::vector<double> out(segs * cols, 0.0);
    for (std::size_t s = 0; s < segs; ++s)
        for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r)
            for (std::size_t c = 0; c < cols; ++c) out[s * cols + c] += xd[r * cols + c];
    for (std::size_t s = 0; s < segs; ++s)
        for (std::size_t c = 0; c < cols; ++c) out[s * cols + c] *= weight[s];
    return make_result(segs, cols, std::move(out), {x.node()},
                       [offs = std::vector<std::size_t>(offsets.begin(), offsets.end()), weight = std::move(weight),
                        cols](Node& self) {
                           auto& pg = self.parents[0]->ensure_grad();
                           for (std::size_t s = 0; s + 1 < offs.size(); ++s)
                               for (std::size_t r = offs[s]; r < offs[s + 1]; ++r)
                                   for (std::size_t c = 0; c < cols; ++c)
                                       pg[r * cols + c] += self.grad[s * cols + c] * weight[s];
                       });
}

}  // namespace

Value segment_mean(const Value& x, std::span<const std::size_t> offsets) {
    return segment_reduce(x, offsets, true, "segment_mean");
}

Value segment_sum(const Value& x, std::span<const std::size_t> offsets) {
    return segment_reduce(x, offsets, false, "segment_sum");
}

Value weighted_scatter_sum(std::span<const Value> blocks, const Value& weights,
                           std::span<const std::vector<std::size_t>> node_maps, std::size_t n) {
    require_rank_match("weighted_scatter_sum", blocks.size(), node_maps.size(), "block count vs node maps");
    require_rank_match("weighted_scatter_sum", blocks.size(), weights.size(), "block count vs weights");
    std::vector<NodePtr> parents{weights.node()};
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        const std::size_t m = node_maps[k].size();
        if (blocks[k].rows() != m || blocks[k].cols() != m) {
            throw ContractViolation("weighted_scatter_sum: block " + std::to_string(k) + " has shape " +
                                    shape_string(blocks[k].rows(), blocks[k].cols()) + " but maps " +
                                    std::to_string(m) + " nodes");
        }
        for (std::size_t u : node_maps[k])
            if (u >= n) throw ContractViolation("weighted_scatter_sum: node index out of range");
        parents.push_back(blocks[k].node());
    }
    const auto wd = weights.data();
    std::vector<double> out(n * n, 0.0);
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        const auto& map = node_maps[k];
        const std::size_t m = map.size();
        const auto bd = blocks[k].data();
        for (std::size_t a = 0; a < m; ++a)
            for (std::size_t b = 0; b < m; ++b) out[map[a] * n + map[b]] += wd[k] * bd[a * m + b];
    }
    return make_result(n, n, std::move(out), std::move(parents),
                       [maps = std::vector<std::vector<std::size_t>>(node_maps.begin(), node_maps.end()),
                        n](Node& self) {
                           Node& pw = *self.parents[0];
                           for (std::size_t k = 0; k < maps.size(); ++k) {
                               Node& pb = *self.parents[k + 1];
                               const auto& map = maps[k];
                               const std::size_t m = map.size();
                               double gw = 0.0;
                               const double w = pw.data[k];
                               std::vector<double>* gb = pb.requires_grad ? &pb.ensure_grad() : nullptr;
                               for (std::size_t a = 0; a < m; ++a)
                                   for (std::size_t b = 0; b < m; ++b) {
                                       const double g = self.grad[map[a] * n + map[b]];
                                       gw += g * pb.data[a * m + b];
                                       if (gb) (*gb)[a * m + b] += g * w;
                                   }
                               if (pw.requires_grad) pw.ensure_grad()[k] += gw;
                           }
                       });
}

void backward(const Value& root) {
    if (root.size() != 1) {
        throw ContractViolation("backward: root must be scalar, got " + shape_string(root.rows(), root.cols()));
    }
    if (!root.requires_grad()) return;

    // Iterative post-order DFS -> topological order (parents before children).
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Interior gradients restart from zero so that repeated calls only
    // accumulate into leaves.
    for (Node* node : order)
        if (node->backward_rule) {
            auto& g = node->ensure_grad();
            std::fill(g.begin(), g.end(), 0.0);
        }
    root.node()->ensure_grad()[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_rule) (*it)->backward_rule(**it);
    }
}

}  // namespace mosgsl::ad

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mosgsl/autodiff.hpp"
#include "mosgsl/error.hpp"
#include "support.hpp"

using namespace mosgsl;
using ad::Value;

namespace {

Value leaf(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
    return Value::leaf(testing::random_matrix(r, c, rng, scale));
}

// Scalar probe: sum(out * W) with a fixed random W, so every output entry
// gets a distinct weight.
Value probe(const Value& out, std::uint64_t seed = 99) {
    Rng rng = make_stream(seed, "probe");
    const Value w = Value::constant(testing::random_matrix(out.rows(), out.cols(), rng));
    return ad::sum(ad::mul(out, w));
}

void require_ok(const testing::GradCheck& g) {
    INFO(g.where);
    CHECK(g.ok);
}

// Entries pushed away from zero so relu/abs-style kinks are not straddled.
Value leaf_away_from_zero(std::size_t r, std::size_t c, Rng& rng) {
    Matrix m = testing::random_matrix(r, c, rng);
    for (double& v : m.data) v = v < 0 ? v - 0.1 : v + 0.1;
    return Value::leaf(m);
}

}  // namespace

TEST_CASE("relu, softmax and matmul examples") {
    const Value r = ad::relu(Value::constant(1, 2, {-1.0, 2.0}));
    CHECK(r.at(0, 0) == 0.0);
    CHECK(r.at(0, 1) == 2.0);

    const Value s = ad::softmax_rows(Value::constant(1, 2, {0.0, 0.0}));
    CHECK(s.at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(s.at(0, 1) == doctest::Approx(0.5).epsilon(1e-15));

    const Value m = ad::matmul(Value::constant(2, 2, {1, 2, 3, 4}), Value::constant(2, 1, {1, 1}));
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 1);
    CHECK(m.at(0, 0) == 3.0);
    CHECK(m.at(1, 0) == 7.0);
}

TEST_CASE("backward examples") {
    const Value x = Value::leaf(Matrix(1, 3, {0.3, -2.0, 5.0}));
    ad::backward(ad::sum(x));
    REQUIRE(x.grad().size() == 3);
    for (double g : x.grad()) CHECK(g == 1.0);

    const Value z = Value::leaf(Matrix(1, 1, {0.0}));
    ad::backward(ad::sigmoid(z));
    CHECK(z.grad()[0] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("backward accumulates into leaves until zeroed") {
    Value x = Value::leaf(Matrix(1, 2, {1.0, 2.0}));
    const Value root = ad::sum(ad::scale(x, 3.0));
    ad::backward(root);
    ad::backward(root);
    CHECK(x.grad()[0] == 6.0);
    x.zero_grad();
    ad::backward(root);
    CHECK(x.grad()[1] == 3.0);
}

TEST_CASE("shape errors and non-scalar roots are contract violations") {
    const Value a = Value::constant(Matrix(2, 3));
    const Value b = Value::constant(Matrix(2, 2));
    CHECK_THROWS_AS(ad::matmul(a, b), ContractViolation);
    CHECK_THROWS_WITH_AS(ad::add(a, b), doctest::Contains("2x3"), ContractViolation);
    CHECK_THROWS_AS(ad::backward(Value::leaf(Matrix(1, 2))), ContractViolation);
}

TEST_CASE("constants fold and record nothing") {
    const Value c = ad::exp(Value::constant(1, 2, {0.0, 1.0}));
    CHECK_FALSE(c.requires_grad());
    CHECK(c.is_leaf());
}

TEST_CASE("dropout is the identity at eval time and inverted-scaled at train time") {
    Rng rng = make_stream(1, "drop");
    const Value x = Value::constant(testing::random_matrix(4, 5, rng));
    const Value eval = ad::dropout(x, 0.5, false, rng);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(eval.data()[i] == x.data()[i]);
    const Value train = ad::dropout(x, 0.5, true, rng);
    int kept = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (train.data()[i] != 0.0) {
            CHECK(train.data()[i] == doctest::Approx(2.0 * x.data()[i]).epsilon(1e-15));
            ++kept;
        }
    }
    CHECK(kept > 0);
    CHECK(kept < 20);
}

TEST_CASE("batch norm uses batch statistics in training and running statistics at eval") {
    const Value x = Value::constant(3, 1, {1.0, 2.0, 3.0});
    const Value gamma = Value::constant(1, 1, {1.0});
    const Value beta = Value::constant(1, 1, {0.0});
    ad::BatchNormStats stats{{0.0}, {1.0}};
    const Value y = ad::batch_norm(x, gamma, beta, stats, true);
    // Biased batch variance 2/3.
    CHECK(y.at(0, 0) == doctest::Approx(-1.0 / std::sqrt(2.0 / 3.0 + 1e-5)).epsilon(1e-12));
    CHECK(stats.running_mean[0] == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(stats.running_var[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0).epsilon(1e-15));
    const Value e = ad::batch_norm(x, gamma, beta, stats, false);
    CHECK(e.at(2, 0) == doctest::Approx((3.0 - 0.2) / std::sqrt(1.0 + 1e-5)).epsilon(1e-12));
}

TEST_CASE("cross entropy of uniform logits is ln C") {
    const Value logits = Value::constant(Matrix(2, 4));
    const int labels[] = {0, 3};
    CHECK(ad::cross_entropy_with_logits(logits, labels).item() == doctest::Approx(std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("gcn_normalize matches a hand evaluation") {
    // Two nodes joined by weight 1: A + I = [[1,1],[1,1]], degrees 2.
    const Value p = ad::gcn_normalize(Value::constant(2, 2, {0, 1, 1, 0}));
    for (double v : p.data()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
    const Value r = ad::row_normalize(Value::constant(2, 2, {0, 2, 0, 0}));
    CHECK(r.at(0, 1) == 1.0);
    CHECK(r.at(1, 0) == 0.0);
}

TEST_CASE("gradient check: elementwise and linear algebra") {
    Rng rng = make_stream(7, "grad");
    const Value a = leaf(3, 4, rng), b = leaf(3, 4, rng), row = leaf(1, 4, rng), col = leaf(3, 1, rng);
    const Value w = leaf(4, 2, rng);
    require_ok(testing::check_gradients({a, w}, [&] { return probe(ad::matmul(a, w)); }));
    require_ok(testing::check_gradients({a}, [&] { return probe(ad::transpose(a)); }));
    require_ok(testing::check_gradients({a, row}, [&] { return probe(ad::add(a, row)); }));
    require_ok(testing::check_gradients({a, col}, [&] { return probe(ad::sub(col, a)); }));
    require_ok(testing::check_gradients({a, b}, [&] { return probe(ad::mul(a, b)); }));
    require_ok(testing::check_gradients({a, row}, [&] { return probe(ad::mul(row, a)); }));
    require_ok(testing::check_gradients({a}, [&] { return probe(ad::scale(a, -1.7)); }));
    require_ok(testing::check_gradients({a}, [&] { return probe(ad::add_scalar(a, 0.3)); }));

    const Value k = leaf_away_from_zero(3, 4, rng);
    require_ok(testing::check_gradients({k}, [&] { return probe(ad::relu(k)); }));
    require_ok(testing::check_gradients({a}, [&] { return probe(ad::sigmoid(a)); }));
    require_ok(testing::check_gradients({a}, [&] { return probe(ad::exp(a)); }));
    const Value pos = Value::leaf([&] {
        Matrix m = testing::random_matrix(3, 4, rng);
        for (double& v : m.data) v = std::abs(v) + 0.5;
        return m;
    }());
    require_ok(testing::check_gradients({pos}, [&] { return probe(ad::log(pos)); }));
    require_ok(testing::check_gradients({pos}, [&] { return probe(ad::pow(pos, -1.5)); }));
    require_ok(testing::check_gradients({pos}, [&] { return probe(ad::pow(pos, 2.0)); }));
    require_ok(testing::check_gradients({a}, [&] { return probe(ad::clamp(a, -0.5, 0.5)); }));
    require_ok(testing::check_gradients({a}, [&] { return probe(ad::softmax_rows(a)); }));
}

TEST_CASE("gradient check: reductions") {
    Rng rng = make_stream(8, "grad");
    const Value a = leaf(3, 4, rng);
    for (auto axis : {ad::Axis::all, ad::Axis::col_wise, ad::Axis::row_wise}) {
        require_ok(testing::check_gradients({a}, [&] { return probe(ad::sum(a, axis)); }));
        require_ok(testing::check_gradients({a}, [&] { return probe(ad::mean(a, axis)); }));
        require_ok(testing::check_gradients({a}, [&] { return probe(ad::min_reduce(a, axis)); }));
        require_ok(testing::check_gradients({a}, [&] { return probe(ad::max_reduce(a, axis)); }));
        require_ok(testing::check_gradients({a}, [&] { return probe(ad::l2norm(a, axis)); }));
    }
}

TEST_CASE("gradient check: indexing") {
    Rng rng = make_stream(9, "grad");
    const Value a = leaf(4, 3, rng), b = leaf(2, 3, rng);
    const std::size_t rows[] = {2, 0, 2, 3};
    const std::size_t cols[] = {1, 1, 0};
    const std::size_t targets[] = {1, 0, 1, 4};
    require_ok(testing::check_gradients({a, b}, [&] {
        const Value parts[] = {a, b};
        return probe(ad::concat_rows(parts));
    }));
    require_ok(testing::check_gradients({a}, [&] { return probe(ad::gather_rows(a, rows)); }));
    require_ok(testing::check_gradients({a}, [&] { return probe(ad::gather_cols(a, cols)); }));
    require_ok(testing::check_gradients({a}, [&] { return probe(ad::slice_rows(a, 1, 3)); }));
    require_ok(testing::check_gradients({a}, [&] { return probe(ad::scatter_add_rows(a, targets, 5)); }));
}

TEST_CASE("gradient check: dropout, batch norm and cross entropy") {
    Rng rng = make_stream(10, "grad");
    const Value a = leaf(5, 3, rng);
    require_ok(testing::check_gradients({a}, [&] {
        Rng mask = make_stream(3, "mask");
        return probe(ad::dropout(a, 0.4, true, mask));
    }));
    const Value gamma = leaf(1, 3, rng), beta = leaf(1, 3, rng);
    ad::BatchNormStats stats{std::vector<double>(3, 0.0), std::vector<double>(3, 1.0)};
    require_ok(testing::check_gradients({a, gamma, beta},
                                        [&] { return probe(ad::batch_norm(a, gamma, beta, stats, true)); }));
    require_ok(testing::check_gradients({a, gamma, beta},
                                        [&] { return probe(ad::batch_norm(a, gamma, beta, stats, false)); }));
    const int labels[] = {0, 2, 1, 1, 0};
    require_ok(testing::check_gradients({a}, [&] { return ad::cross_entropy_with_logits(a, labels); }));
}

TEST_CASE("gradient check: graph ops") {
    Rng rng = make_stream(11, "grad");
    auto sym = [&](std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) m(i, j) = m(j, i) = 0.1 + 0.8 * uniform01(rng);
        return Value::leaf(m);
    };
    const Value A = sym(4), B = sym(2);
    require_ok(testing::check_gradients({A}, [&] { return probe(ad::gcn_normalize(A)); }));
    require_ok(testing::check_gradients({A}, [&] { return probe(ad::row_normalize(A)); }));

    const Value x = leaf(6, 3, rng);
    const std::size_t offsets[] = {0, 4, 6};
    require_ok(testing::check_gradients({A, B, x}, [&] {
        const Value blocks[] = {A, B};
        return probe(ad::block_matmul(blocks, x, offsets));
    }));
    require_ok(testing::check_gradients({x}, [&] { return probe(ad::segment_mean(x, offsets)); }));
    require_ok(testing::check_gradients({x}, [&] { return probe(ad::segment_sum(x, offsets)); }));

    const Value weights = leaf(1, 2, rng);
    const std::vector<std::vector<std::size_t>> maps = {{3, 0, 1, 4}, {1, 2}};
    require_ok(testing::check_gradients({A, B, weights}, [&] {
        const Value blocks[] = {A, B};
        return probe(ad::weighted_scatter_sum(blocks, weights, maps, 5));
    }));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mosgsl/error.hpp"
#include "mosgsl/structure_learner.hpp"
#include "support.hpp"

using namespace mosgsl;
using ad::Value;

namespace {

SubgraphView view_with(const Matrix& features) {
    SubgraphView v;
    v.features = features;
    v.adjacency = Matrix(features.rows, features.rows);
    for (std::size_t i = 0; i < features.rows; ++i) v.nodes.push_back(i);
    return v;
}

void set_identity(Linear& lin) {
    auto w = lin.weight().value.mutable_data();
    const std::size_t n = lin.weight().value.cols();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = (i / n == i % n) ? 1.0 : 0.0;
    auto b = lin.bias().value.mutable_data();
    std::fill(b.begin(), b.end(), 0.0);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_valid_structure(const Value& a) {
    const std::size_t m = a.rows();
    for (std::size_t i = 0; i < m; ++i) {
        CHECK(a.at(i, i) == 0.0);
        for (std::size_t j = 0; j < m; ++j) {
            CHECK(a.at(i, j) == a.at(j, i));
            CHECK(a.at(i, j) >= 0.0);
            CHECK(a.at(i, j) <= 1.0);
        }
    }
}

}  // namespace

TEST_CASE("identical features give equal off-diagonal scores") {
    Rng rng = make_stream(1, "init");
    GraphLearner learner("gl", 3, 4, rng);
    const SubgraphView v = view_with(Matrix(4, 3, 0.7));
    const Value a = learn_structure(v, learner, Processor{Processor::Mode::eps, 8, 0.0});
    const double first = a.at(0, 1);
    CHECK(first > 0.0);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            if (i != j) CHECK(a.at(i, j) == doctest::Approx(first).epsilon(1e-15));
}

TEST_CASE("a single node gives a 1x1 zero matrix") {
    Rng rng = make_stream(2, "init");
    GraphLearner learner("gl", 2, 3, rng);
    const Value a = learn_structure(view_with(Matrix(1, 2, {0.4, -0.3})), learner, Processor{});
    REQUIRE(a.rows() == 1);
    REQUIRE(a.cols() == 1);
    CHECK(a.at(0, 0) == 0.0);
}

TEST_CASE("empty view is a contract violation") {
    Rng rng = make_stream(3, "init");
    GraphLearner learner("gl", 2, 3, rng);
    SubgraphView v;
    v.features = Matrix(0, 2);
    CHECK_THROWS_AS(learn_structure(v, learner, Processor{}), ContractViolation);
}

TEST_CASE("hand-set learner on three nodes") {
    Rng rng = make_stream(4, "init");
    GraphLearner learner("gl", 2, 2, rng);
    set_identity(learner.first());
    set_identity(learner.second());
    // Embeddings equal the features: (1,0), (0,1), (1,1).
    const SubgraphView v = view_with(Matrix(3, 2, {1, 0, 0, 1, 1, 1}));
    const double half = sigmoid(0.0), one = sigmoid(1.0 / std::sqrt(2.0));

    SUBCASE("knn k=2 keeps every off-diagonal entry") {
        const Value a = learn_structure(v, learner, Processor{Processor::Mode::knn, 2, 0.3});
        CHECK(a.at(0, 1) == doctest::Approx(half).epsilon(1e-15));
        CHECK(a.at(0, 2) == doctest::Approx(one).epsilon(1e-15));
        CHECK(a.at(1, 2) == doctest::Approx(one).epsilon(1e-15));
        check_valid_structure(a);
    }
    SUBCASE("knn k=1 keeps the best neighbour per row, then symmetrises") {
        // Row 0 keeps 2, row 1 keeps 2, row 2 ties between 0 and 1 and keeps 0.
        const Value a = learn_structure(v, learner, Processor{Processor::Mode::knn, 1, 0.3});
        CHECK(a.at(0, 1) == 0.0);
        CHECK(a.at(0, 2) == doctest::Approx(one).epsilon(1e-15));
        CHECK(a.at(1, 2) == doctest::Approx(one / 2.0).epsilon(1e-15));
        check_valid_structure(a);
    }
    SUBCASE("eps drops entries below theta") {
        const Value a = learn_structure(v, learner, Processor{Processor::Mode::eps, 8, 0.6});
        CHECK(a.at(0, 1) == 0.0);
        CHECK(a.at(0, 2) == doctest::Approx(one).epsilon(1e-15));
    }
}

TEST_CASE("eps with theta 0 is the full similarity matrix") {
    Rng rng = make_stream(5, "init");
    GraphLearner learner("gl", 3, 4, rng);
    const SubgraphView v = view_with(testing::random_matrix(5, 3, rng));
    const Value a = learn_structure(v, learner, Processor{Processor::Mode::eps, 8, 0.0});
    const Value s = learner.similarity(learner.embed(Value::constant(v.features)));
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j)
            if (i != j) CHECK(a.at(i, j) == doctest::Approx(s.at(i, j)).epsilon(1e-15));
}

TEST_CASE("knn output is symmetric, zero-diagonal, in [0,1] and sparse") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng = make_stream(seed, "prop");
        GraphLearner learner("gl", 3, 4, rng);
        const std::size_t m = 2 + seed % 5;
        const SubgraphView v = view_with(testing::random_matrix(m, 3, rng, 2.0));
        const int k = 1 + static_cast<int>(seed % 3);
        const Value a = learn_structure(v, learner, Processor{Processor::Mode::knn, k, 0.3});
        check_valid_structure(a);
        std::size_t nonzero = 0;
        for (double x : a.data()) nonzero += x != 0.0;
        CHECK(nonzero <= 2 * static_cast<std::size_t>(k) * m);
    }
}

TEST_CASE("unknown processor name is a configuration error") {
    CHECK(parse_processor_mode("knn") == Processor::Mode::knn);
    CHECK(parse_processor_mode("eps") == Processor::Mode::eps);
    CHECK_THROWS_AS(parse_processor_mode("concrete"), ConfigError);
}

TEST_CASE("gradients reach the learner through kept entries") {
    for (Processor::Mode mode : {Processor::Mode::knn, Processor::Mode::eps}) {
        Rng rng = make_stream(6, "init");
        GraphLearner learner("gl", 3, 4, rng);
        const SubgraphView v = view_with(testing::random_matrix(3, 3, rng));
        const Matrix target = testing::random_matrix(3, 3, rng);
        ParameterList params;
        learner.collect(params);
        std::vector<Value> leaves;
        for (Parameter* p : params) leaves.push_back(p->value);
        const auto g = testing::check_gradients(leaves, [&] {
            const Value a = learn_structure(v, learner, Processor{mode, 1, 0.5});
            return ad::sum(ad::mul(a, Value::constant(target)));
        });
        INFO(g.where);
        CHECK(g.ok);
        CHECK(g.checked > 4 * g.skipped);
    }
}

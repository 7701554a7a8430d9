#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "mosgsl/config.hpp"
#include "mosgsl/error.hpp"
#include "support.hpp"

using namespace mosgsl;

TEST_CASE("defaults validate") { CHECK_NOTHROW(RunConfig{}.validate()); }

TEST_CASE("sections and keys parse") {
    const RunConfig c = parse_config(R"(
[data]
name = "ENZYMES"
degree_cap = 32

[model]
backbone = "gin"
hidden = 16

[sgsl]
K = 4
M = 8
epsilon = 0.4
processor = "eps"
eps_theta = 0.25

[motif]
R = 3
lambda = 0
init = "random"
numerator = "max"

[train]
lr = 0.01
seed = 9
regime = "test"
variant = "fixed-motif"
)");
    CHECK(c.dataset == "ENZYMES");
    CHECK(c.degree_cap == 32);
    CHECK(c.backbone == GnnKind::gin);
    CHECK(c.hidden == 16);
    CHECK(c.K == 4);
    CHECK(c.epsilon == 0.4);
    CHECK(c.processor == Processor::Mode::eps);
    CHECK(c.R == 3);
    CHECK(c.lambda == 0.0);  // integer accepted for a real
    CHECK(c.init == MotifInit::random);
    CHECK(c.numerator == Numerator::max);
    CHECK(c.lr == 0.01);
    CHECK(c.seed == 9);
    CHECK(c.regime == Regime::test);
    CHECK(c.variant == Variant::fixed_motif);
    CHECK(c.max_epochs == 400);  // untouched default
}

TEST_CASE("unknown sections, keys and values are rejected") {
    CHECK_THROWS_AS(parse_config("[optim]\nlr = 0.1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[train]\nlearning_rate = 0.1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[train]\nvariant = \"everything\"\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[train]\nregime = \"joint\"\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[train]\nbatch_size = \"big\"\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[train\n"), ConfigError);
}

TEST_CASE("range checks") {
    CHECK_THROWS_AS(parse_config("[sgsl]\ngamma = 1.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[sgsl]\nepsilon = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[motif]\nlambda = -0.1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[train]\nmax_epochs = 10\npatience = 50\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[train]\nseed = -1\n"), ConfigError);
}

TEST_CASE("missing file names the path") {
    CHECK_THROWS_WITH_AS(load_config("/nonexistent/run.toml"), doctest::Contains("/nonexistent/run.toml"), ConfigError);
}

TEST_CASE("overrides by section.key and bare key") {
    RunConfig c;
    set_config_value(c, "sgsl.gamma", "0.25");
    set_config_value(c, "R", "4");
    set_config_value(c, "train.variant", "gsl+motif");
    CHECK(c.gamma == 0.25);
    CHECK(c.R == 4);
    CHECK(c.variant == Variant::gsl_motif);
    CHECK_THROWS_AS(set_config_value(c, "nope", "1"), ConfigError);
    CHECK_THROWS_AS(set_config_value(c, "train.lr", "fast"), ConfigError);
}

TEST_CASE("TOML round trip reproduces the config") {
    RunConfig c = preset_config("ENZYMES");
    c.seed = 12345;
    c.temperature = 0.1 + 0.2;  // not representable in short form
    c.variant = Variant::gsl_motif;
    c.data_dir = "/data/tu";
    const RunConfig back = parse_config(config_to_toml(c));
    CHECK(config_to_json(back) == config_to_json(c));
    CHECK(back.temperature == c.temperature);

    const auto path = testing::scratch_dir("config") / "run.toml";
    std::ofstream(path) << config_to_toml(c);
    CHECK(config_to_json(load_config(path)) == config_to_json(c));
}

TEST_CASE("presets carry the per-dataset table values") {
    struct Row {
        const char* name;
        int R;
        double eps, lambda, gamma;
        int bs;
        double lr, wd;
    };
    const Row rows[] = {{"IMDB-BINARY", 2, 0.6, 0.1, 0.5, 64, 1e-3, 5e-4},
                        {"IMDB-MULTI", 4, 0.6, 0.01, 0.3, 128, 1e-2, 5e-4},
                        {"REDDIT-BINARY", 2, 0.4, 0.1, 0.3, 128, 1e-2, 0.0},
                        {"ENZYMES", 2, 0.4, 0.01, 0.3, 128, 1e-3, 5e-4},
                        {"PROTEINS", 1, 0.6, 0.01, 0.5, 32, 1e-3, 5e-6}};
    for (const Row& r : rows) {
        CAPTURE(r.name);
        const RunConfig c = preset_config(r.name);
        CHECK(c.dataset == r.name);
        CHECK(c.R == r.R);
        CHECK(c.epsilon == r.eps);
        CHECK(c.lambda == r.lambda);
        CHECK(c.gamma == r.gamma);
        CHECK(c.batch_size == r.bs);
        CHECK(c.lr == r.lr);
        CHECK(c.weight_decay == r.wd);
        CHECK(c.max_epochs == 400);
        CHECK(c.patience == 50);
        CHECK_NOTHROW(c.validate());
    }
    CHECK_THROWS_AS(preset_config("MUTAG"), ConfigError);
}

TEST_CASE("variant and regime names") {
    for (Variant v : {Variant::full, Variant::gsl, Variant::sgsl, Variant::gsl_motif, Variant::fixed_motif,
                      Variant::backbone})
        CHECK(parse_variant(to_string(v)) == v);
    for (Regime r : {Regime::co, Regime::pre, Regime::test}) CHECK(parse_regime(to_string(r)) == r);
    CHECK(to_string(Variant::gsl_motif) == "gsl+motif");
}

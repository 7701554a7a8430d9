#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "mosgsl/graph_io.hpp"
#include "support.hpp"

using namespace mosgsl;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string output;
};

Run run(const std::string& args) {
    const std::string cmd = std::string(MOSGSL_CLI) + " " + args + " 2>&1";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Planted fixture on disk plus a small config pointing at it.
struct Workspace {
    fs::path root;
    fs::path config;
    Dataset data;

    explicit Workspace(const std::string& tag, const std::string& extra = "") {
        root = testing::scratch_dir(tag);
        data = testing::planted_motif_dataset(10, 2, 21);
        write_tu_dataset(data, root / "data" / "PLANTED");
        config = root / "run.toml";
        std::ofstream(config) << "[data]\nname = \"PLANTED\"\ndir = \"" << (root / "data").string()
                              << "\"\ndegree_cap = 6\n\n[model]\nhidden = 8\n\n[sgsl]\nK = 3\nM = 5\n\n"
                              << "[motif]\nR = 2\neta = 2\npretrain_epochs = 2\n\n"
                              << "[train]\nbatch_size = 8\nlr = 0.01\nmax_epochs = 4\npatience = 2\nfolds = 3\n"
                              << extra;
    }

    std::string base(const std::string& cmd, const std::string& out) const {
        return cmd + " --config " + config.string() + " --out " + (root / out).string();
    }
};

}  // namespace

TEST_CASE("missing config file exits 2 and names the path") {
    const Run r = run("train --config /nonexistent/imdb_b.toml --out /tmp/mosgsl-cli-unused");
    CHECK(r.code == 2);
    CHECK(r.output.find("/nonexistent/imdb_b.toml") != std::string::npos);
}

TEST_CASE("unknown variant and bad overrides exit 2") {
    const Workspace w("cli-bad");
    CHECK(run(w.base("train", "o") + " --variant everything").code == 2);
    CHECK(run(w.base("ablate", "o") + " --variants full,nonsense").code == 2);
    CHECK(run(w.base("train", "o") + " --set sgsl.gamma=2").code == 2);
    CHECK(run(w.base("train", "o") + " --set nokey=1").code == 2);
    CHECK(run("train --bogus-flag").code == 2);
}

TEST_CASE("missing dataset exits 1") {
    const Workspace w("cli-nodata");
    CHECK(run(w.base("train", "o") + " --data-dir " + (w.root / "empty").string()).code == 1);
}

TEST_CASE("diverging training exits 3") {
    const Workspace w("cli-diverge");
    const Run r = run(w.base("train", "o") + " --set train.lr=1e300 --set motif.lambda=0");
    CHECK(r.code == 3);
    CHECK(r.output.find("diverged") != std::string::npos);
}

TEST_CASE("train writes its outputs and repeats byte for byte, serial or parallel") {
    const Workspace w("cli-train");
    REQUIRE(run(w.base("train", "a") + " --seed 7").code == 0);
    REQUIRE(run(w.base("train", "b") + " --seed 7").code == 0);
    REQUIRE(run(w.base("train", "c") + " --seed 7 --jobs 3").code == 0);
    for (const char* f : {"summary.json", "traces.csv", "effective_config.toml", "timing.json",
                          "checkpoints/fold_00.ckpt", "checkpoints/fold_02.ckpt"})
        CHECK(fs::exists(w.root / "a" / f));
    const std::string summary = slurp(w.root / "a" / "summary.json");
    CHECK(summary == slurp(w.root / "b" / "summary.json"));
    CHECK(summary == slurp(w.root / "c" / "summary.json"));
    CHECK(slurp(w.root / "a" / "traces.csv") == slurp(w.root / "c" / "traces.csv"));
    CHECK(summary.find("\"spec_version\": \"1.0\"") != std::string::npos);

    // Re-feeding the effective config reproduces the run.
    REQUIRE(run("train --config " + (w.root / "a" / "effective_config.toml").string() + " --out " +
                (w.root / "d").string())
                .code == 0);
    CHECK(slurp(w.root / "d" / "summary.json") == summary);
}

TEST_CASE("ablate deduplicates variants and writes one row per variant") {
    const Workspace w("cli-ablate");
    const Run r = run(w.base("ablate", "abl") + " --variants sgsl,backbone,sgsl");
    REQUIRE(r.code == 0);
    CHECK(r.output.find("duplicate variant") != std::string::npos);
    const std::string csv = slurp(w.root / "abl" / "ablation.csv");
    CHECK(csv.rfind("variant,mean,std,fold_0,fold_1,fold_2\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK(fs::exists(w.root / "abl" / "sgsl" / "summary.json"));

    REQUIRE(run(w.base("ablate", "one") + " --variants gsl").code == 0);
    const std::string single = slurp(w.root / "one" / "ablation.csv");
    CHECK(std::count(single.begin(), single.end(), '\n') == 2);
}

TEST_CASE("export with gamma 0 reproduces the input edges; shape mismatch exits 2") {
    const Workspace w("cli-export");
    REQUIRE(run(w.base("train", "run") + " --set sgsl.gamma=0 --set train.folds=1").code == 0);
    const Run e = run(w.base("export", "structures") + " --set sgsl.gamma=0 --checkpoint " + (w.root / "run").string());
    REQUIRE(e.code == 0);
    const auto files = read_structures(w.root / "structures");
    REQUIRE(files.size() == w.data.graphs.size());
    for (const auto& s : files) {
        CHECK(s.edges == w.data.graphs[static_cast<std::size_t>(s.graph_id)].edges);
        for (const auto& edge : s.edges) CHECK(edge.weight == 1.0);
    }
    CHECK(fs::exists(w.root / "structures" / "manifest.txt"));

    const Run bad = run(w.base("export", "x") + " --set model.hidden=12 --checkpoint " + (w.root / "run").string());
    CHECK(bad.code == 2);
    CHECK(bad.output.find("checkpoint mismatch") != std::string::npos);
}

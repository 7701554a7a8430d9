#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "mosgsl/backbone.hpp"
#include "mosgsl/motif.hpp"
#include "mosgsl/structure_learner.hpp"

namespace mosgsl {

enum class Regime { co, pre, test };

// Pipeline variants. `full` is the complete method; the others switch off
// one part of it. `backbone` trains the plain classifier on the input graphs.
enum class Variant { full, gsl, sgsl, gsl_motif, fixed_motif, backbone };

Regime parse_regime(const std::string& s);
std::string to_string(Regime r);
Variant parse_variant(const std::string& s);
std::string to_string(Variant v);

struct RunConfig {
    // [data]
    std::string dataset = "IMDB-BINARY";
    std::string data_dir;    // empty: MOSGSL_DATA_DIR
    int degree_cap = 64;
    std::string structures;  // refined-structure directory for the pre regime

    // [model]
    GnnKind backbone = GnnKind::gcn;
    int hidden = 64;
    double dropout = 0.5;

    // [sgsl]
    int K = 8;
    int M = 16;
    double epsilon = 0.6;
    double gamma = 0.5;
    Processor::Mode processor = Processor::Mode::knn;
    int knn_k = 8;
    double eps_theta = 0.3;

    // [motif]
    int R = 2;
    double lambda = 0.1;
    double temperature = 0.5;
    int eta = 20;  // <= 0 means never update (fixed motifs)
    MotifInit init = MotifInit::pretrain;
    Numerator numerator = Numerator::min;
    int pretrain_epochs = 50;
    int kmeans_restarts = 5;
    int buffer_capacity = 4096;

    // [train]
    double lr = 1e-3;
    double weight_decay = 5e-4;
    int batch_size = 64;
    int max_epochs = 400;
    int patience = 50;
    std::uint64_t seed = 0;
    Regime regime = Regime::co;
    Variant variant = Variant::full;
    int folds = 10;  // number of folds of the 10-fold plan to run
    int jobs = 1;

    // Throws ConfigError naming the first invalid field.
    void validate() const;
};

// Parses a TOML document with sections [data] [model] [sgsl] [motif] [train].
// Unknown sections or keys are rejected. Missing keys keep their defaults.
RunConfig parse_config(const std::string& toml_text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

// Sets one "section.key" (or bare key) from a string, as a command-line
// override would.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

nlohmann::ordered_json config_to_json(const RunConfig& config);
std::string config_to_toml(const RunConfig& config);

// Per-dataset defaults for the five benchmark datasets.
RunConfig preset_config(const std::string& dataset);

}  // namespace mosgsl

#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "mosgsl/backbone.hpp"
#include "mosgsl/config.hpp"
#include "mosgsl/graph_io.hpp"
#include "mosgsl/motif.hpp"
#include "mosgsl/partition.hpp"
#include "mosgsl/sgsl.hpp"

namespace mosgsl {

inline constexpr const char* kSpecVersion = "1.0";

// Dataset plus everything derived from it once per run: dense adjacency,
// BFS views, whole-graph views and the fold plan.
struct PreparedDataset {
    Dataset data;
    std::vector<Matrix> adjacency;
    std::vector<std::vector<SubgraphView>> partition;
    std::vector<std::vector<SubgraphView>> whole;
    FoldPlan plan;

    const std::vector<std::vector<SubgraphView>>& views_for(Variant variant) const;
};

// Features must already be present on the graphs.
PreparedDataset prepare_dataset(Dataset data, const RunConfig& config);

// Resolves the dataset directory (config, then MOSGSL_DATA_DIR; either the
// directory itself or its <name>/ child) and loads it with degree features.
Dataset load_configured_dataset(const RunConfig& config);

bool uses_sgsl(Variant variant);
bool uses_motif(Variant variant);

// Backbone, optional subgraph structure learner and motif bank of one fold.
// Holds references into itself, so it is neither copied nor moved.
class FoldModel {
public:
    FoldModel(const RunConfig& config, std::size_t in_dim, std::size_t classes, std::uint64_t fold_seed);
    FoldModel(const FoldModel&) = delete;
    FoldModel& operator=(const FoldModel&) = delete;

    GraphClassifier backbone;
    std::unique_ptr<SubgraphStructureLearner> sgsl;  // null for the plain backbone
    MotifBank bank;

    ParameterList backbone_parameters();
    ParameterList sgsl_parameters();
    // Every tensor that defines the model, including batch-norm buffers and
    // the motif bank.
    TensorList tensors();
};

struct EpochTrace {
    int fold = 0;
    std::string phase;  // co, backbone, gsl, pretrain-backbone
    int epoch = 0;
    double train_loss = 0.0;  // mean task loss over minibatches
    double val_loss = 0.0;
    double motif_loss = 0.0;  // mean of -L_motif (the minimised term); 0 without motifs
    bool motif_update = false;
};

struct FoldResult {
    int fold = 0;
    double accuracy = 0.0;  // percent
    int best_epoch = 0;
    int epochs_run = 0;
    std::vector<EpochTrace> traces;
    std::shared_ptr<FoldModel> model;  // the structure-learning model (backbone for variant backbone)
};

struct RunResult {
    std::string variant;
    std::vector<FoldResult> folds;
    std::vector<double> fold_accuracies;
    double mean = 0.0;
    double std = 0.0;  // population standard deviation
    double wall_clock_seconds = 0.0;
};

// Random or pretrained initial motif bank for one fold. The pretrained mode
// trains a subgraph GNN on the training split; when warm_start is given its
// encoder weights are copied there so motifs and candidates share a space.
MotifBank init_motifs(MotifInit mode, const RunConfig& config, const PreparedDataset& data, int fold,
                      GnnEncoder* warm_start = nullptr);

// One fold of the configured regime and variant.
FoldResult train_fold(const RunConfig& config, const PreparedDataset& data, int fold);

// All configured folds, `config.jobs` at a time; results ordered by fold.
RunResult run_regime(const RunConfig& config, const PreparedDataset& data);

RunResult run_ablation(RunConfig config, const PreparedDataset& data, Variant variant);

// Refined structure of every graph under a trained model (eval mode).
std::vector<StructureFile> export_structures(FoldModel& model, const RunConfig& config, const PreparedDataset& data);

double test_accuracy(FoldModel& model, const RunConfig& config, const PreparedDataset& data,
                     const std::vector<int>& ids);

void summarize(RunResult& result);

nlohmann::ordered_json summary_json(const RunConfig& config, const RunResult& result);
std::string traces_csv(const RunResult& result);

// Text checkpoint: every tensor as "name rows cols" then its values, plus the
// motif class map.
void write_checkpoint(const std::filesystem::path& path, FoldModel& model);
// Throws ConfigError if the checkpoint's tensors do not match the model.
void read_checkpoint(const std::filesystem::path& path, FoldModel& model);

}  // namespace mosgsl

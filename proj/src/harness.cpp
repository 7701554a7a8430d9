#include "mosgsl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "mosgsl/error.hpp"

namespace mosgsl {

const std::vector<std::vector<SubgraphView>>& PreparedDataset::views_for(Variant variant) const {
    return variant == Variant::gsl || variant == Variant::gsl_motif ? whole : partition;
}

PreparedDataset prepare_dataset(Dataset data, const RunConfig& config) {
    PreparedDataset out;
    out.plan = make_fold_plan(data, config.seed);
    out.adjacency.reserve(data.graphs.size());
    out.partition.reserve(data.graphs.size());
    out.whole.reserve(data.graphs.size());
    for (std::size_t i = 0; i < data.graphs.size(); ++i) {
        const Graph& g = data.graphs[i];
        if (g.features.rows != static_cast<std::size_t>(g.num_nodes)) {
            throw ContractViolation("prepare_dataset: graph " + std::to_string(i) + " has no features");
        }
        out.adjacency.push_back(g.dense_adjacency());
        out.partition.push_back(bfs_partition(g, config.K, config.M, static_cast<int>(i)));
        out.whole.push_back({whole_graph_view(g, static_cast<int>(i))});
    }
    out.data = std::move(data);
    return out;
}

Dataset load_configured_dataset(const RunConfig& config) {
    std::filesystem::path root = config.data_dir;
    if (root.empty()) {
        const char* env = std::getenv("MOSGSL_DATA_DIR");
        if (!env || !*env) {
            throw IoError("no data directory for " + config.dataset + ": set data.dir or MOSGSL_DATA_DIR");
        }
        root = env;
    }
    const std::string marker = config.dataset + "_A.txt";
    std::filesystem::path dir = root;
    if (!std::filesystem::exists(dir / marker) && std::filesystem::exists(root / config.dataset / marker)) {
        dir = root / config.dataset;
    }
    return load_tu_dataset(dir, config.dataset, config.degree_cap);
}

bool uses_sgsl(Variant variant) { return variant != Variant::backbone; }

bool uses_motif(Variant variant) {
    return variant == Variant::full || variant == Variant::gsl_motif || variant == Variant::fixed_motif;
}

namespace {

SgslOptions sgsl_options(const RunConfig& config) {
    SgslOptions o;
    o.gamma = config.gamma;
    o.epsilon = config.epsilon;
    o.processor.mode = config.processor;
    o.processor.k = config.knn_k;
    o.processor.theta = config.eps_theta;
    return o;
}

}  // namespace

FoldModel::FoldModel(const RunConfig& config, std::size_t in_dim, std::size_t classes, std::uint64_t fold_seed) {
    const auto hidden = static_cast<std::size_t>(config.hidden);
    Rng backbone_init = make_stream(fold_seed, "backbone-init");
    backbone = GraphClassifier("backbone", config.backbone, in_dim, hidden, classes, config.dropout, backbone_init);
    if (uses_sgsl(config.variant)) {
        Rng sgsl_init = make_stream(fold_seed, "sgsl-init");
        sgsl = std::make_unique<SubgraphStructureLearner>("sgsl", config.backbone, in_dim, hidden, config.dropout,
                                                          sgsl_options(config), sgsl_init);
        if (classes >= 2) {
            Rng motif_init = make_stream(fold_seed, "motif-init");
            bank = random_motif_bank(classes, static_cast<std::size_t>(config.R), hidden, motif_init);
        }
    }
}

ParameterList FoldModel::backbone_parameters() {
    ParameterList p;
    backbone.collect(p);
    return p;
}

ParameterList FoldModel::sgsl_parameters() {
    ParameterList p;
    if (sgsl) sgsl->collect(p);
    return p;
}

TensorList FoldModel::tensors() {
    TensorList t;
    backbone.collect(t);
    if (sgsl) sgsl->collect(t);
    if (bank.size() > 0) t.push_back({"motif.bank", bank.motifs.rows, bank.motifs.cols, bank.motifs.data});
    return t;
}

namespace {

std::mutex log_mutex;

void log_line(const std::string& line) {
    std::lock_guard<std::mutex> lock(log_mutex);
    std::cerr << line << '\n';
}

struct Streams {
    Rng backbone_dropout;
    Rng sgsl_dropout;
    Rng shuffle;

    Streams(std::uint64_t seed, const std::string& suffix)
        : backbone_dropout(make_stream(seed, "backbone-dropout" + suffix)),
          sgsl_dropout(make_stream(seed, "sgsl-dropout" + suffix)),
          shuffle(make_stream(seed, "shuffle" + suffix)) {}
};

struct StageSpec {
    std::string phase;
    std::string stream_suffix;
    bool train_backbone = true;
    bool train_sgsl = false;
    bool use_sgsl = false;
    bool use_motif = false;
    bool update_motifs = false;
};

struct BatchOutput {
    ad::Value logits;
    std::vector<int> labels;
    ad::Value motif;  // mean alignment over graphs with usable candidates
    int motif_graphs = 0;
    std::vector<std::pair<int, std::vector<double>>> buffered;  // (class, embedding)
};

bool nonzero_row(std::span<const double> data, std::size_t cols, std::size_t r) {
    for (std::size_t c = 0; c < cols; ++c)
        if (data[r * cols + c] != 0.0) return true;
    return false;
}

BatchOutput forward_batch(FoldModel& model, const RunConfig& config, const PreparedDataset& data,
                          const std::vector<std::vector<SubgraphView>>& views, std::span<const int> ids,
                          const StageSpec& spec, bool train, Streams& streams) {
    BatchOutput out;
    std::vector<const Graph*> graphs;
    std::vector<const Matrix*> features;
    for (int id : ids) {
        const Graph& g = data.data.graphs[static_cast<std::size_t>(id)];
        graphs.push_back(&g);
        features.push_back(&g.features);
        out.labels.push_back(g.label);
    }

    std::vector<ad::Value> adjacency;
    const bool motif_pass = train && spec.use_motif;
    SgslBatch sb;
    if (spec.use_sgsl) {
        std::vector<const std::vector<SubgraphView>*> view_lists;
        for (int id : ids) view_lists.push_back(&views[static_cast<std::size_t>(id)]);
        sb = model.sgsl->forward(graphs, view_lists, train && spec.train_sgsl, motif_pass, streams.sgsl_dropout);
        adjacency = sb.fused;
    } else {
        for (int id : ids) adjacency.push_back(ad::Value::constant(data.adjacency[static_cast<std::size_t>(id)]));
    }
    out.logits = model.backbone.forward(make_batch(std::move(adjacency), std::move(features)),
                                        train && spec.train_backbone, streams.backbone_dropout);

    if (motif_pass) {
        const ad::Value& emb = sb.candidate_embeddings;
        const auto values = emb.data();
        const std::size_t d = emb.cols();
        ad::Value total;
        for (std::size_t g = 0; g < ids.size(); ++g) {
            std::vector<std::size_t> keep;
            for (std::size_t r = sb.candidate_offsets[g]; r < sb.candidate_offsets[g + 1]; ++r)
                if (nonzero_row(values, d, r)) keep.push_back(r);
            if (keep.empty()) continue;
            const int label = out.labels[g];
            const ad::Value term =
                alignment_loss(ad::gather_rows(emb, keep), label, model.bank, config.temperature, config.numerator);
            total = total.defined() ? ad::add(total, term) : term;
            ++out.motif_graphs;
            if (spec.update_motifs) {
                for (std::size_t r : keep)
                    out.buffered.emplace_back(label, std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(r * d),
                                                                         values.begin() + static_cast<std::ptrdiff_t>((r + 1) * d)));
            }
        }
        if (out.motif_graphs > 0) out.motif = ad::scale(total, 1.0 / out.motif_graphs);
    }
    return out;
}

std::vector<std::span<const int>> batches_of(std::span<const int> ids, int batch_size) {
    std::vector<std::span<const int>> out;
    const auto bs = static_cast<std::size_t>(batch_size);
    for (std::size_t b = 0; b < ids.size(); b += bs) out.push_back(ids.subspan(b, std::min(bs, ids.size() - b)));
    return out;
}

// Mean task loss and accuracy (percent) in eval mode.
std::pair<double, double> evaluate(FoldModel& model, const RunConfig& config, const PreparedDataset& data,
                                   const std::vector<std::vector<SubgraphView>>& views, const std::vector<int>& ids,
                                   bool use_sgsl) {
    if (ids.empty()) return {0.0, 0.0};
    StageSpec spec;
    spec.use_sgsl = use_sgsl;
    Streams unused(0, "eval");
    double loss = 0.0;
    std::size_t correct = 0;
    for (auto batch : batches_of(ids, config.batch_size)) {
        const BatchOutput out = forward_batch(model, config, data, views, batch, spec, false, unused);
        loss += cross_entropy_with_logits(out.logits, out.labels).item() * static_cast<double>(batch.size());
        const std::size_t C = out.logits.cols();
        for (std::size_t r = 0; r < batch.size(); ++r) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < C; ++c)
                if (out.logits.at(r, c) > out.logits.at(r, best)) best = c;
            if (static_cast<int>(best) == out.labels[r]) ++correct;
        }
    }
    const auto n = static_cast<double>(ids.size());
    return {loss / n, 100.0 * static_cast<double>(correct) / n};
}

struct StageOutcome {
    int best_epoch = 0;
    int epochs_run = 0;
};

StageOutcome run_stage(FoldModel& model, const RunConfig& config, const PreparedDataset& data, int fold_index,
                       const StageSpec& spec, std::vector<EpochTrace>& traces) {
    const Fold& fold = data.plan.folds[static_cast<std::size_t>(fold_index)];
    const auto& views = data.views_for(config.variant);
    const std::uint64_t fold_seed = config.seed + static_cast<std::uint64_t>(fold_index);

    ParameterList params;
    if (spec.train_backbone) model.backbone.collect(params);
    if (spec.train_sgsl) model.sgsl->collect(params);
    ParameterList all = model.backbone_parameters();
    for (Parameter* p : model.sgsl_parameters()) all.push_back(p);

    AdamState adam;
    AdamOptions adam_options;
    adam_options.lr = config.lr;
    adam_options.weight_decay = config.weight_decay;

    const TensorList tensors = model.tensors();
    Snapshot best = take_snapshot(tensors);
    double best_loss = std::numeric_limits<double>::infinity();
    StageOutcome outcome;

    Streams streams(fold_seed, spec.stream_suffix);
    CandidateBuffer buffer(static_cast<std::size_t>(data.data.num_classes),
                           static_cast<std::size_t>(config.buffer_capacity));
    std::vector<int> order = fold.train;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        shuffle_in_place(std::span<int>(order), streams.shuffle);
        double task_sum = 0.0, motif_sum = 0.0;
        int batches = 0, motif_batches = 0;
        for (auto batch : batches_of(order, config.batch_size)) {
            zero_grad(all);
            BatchOutput out = forward_batch(model, config, data, views, batch, spec, true, streams);
            const ad::Value task = cross_entropy_with_logits(out.logits, out.labels);
            ad::Value loss = task;
            if (out.motif_graphs > 0) loss = total_loss(task, out.motif, config.lambda);
            const double value = loss.item();
            if (!std::isfinite(value)) {
                throw DivergenceError("fold " + std::to_string(fold_index) + ", " + spec.phase + " epoch " +
                                      std::to_string(epoch) + ": non-finite loss");
            }
            ad::backward(loss);
            adam_step(params, adam, adam_options);
            task_sum += task.item();
            ++batches;
            if (out.motif_graphs > 0) {
                motif_sum -= out.motif.item();
                ++motif_batches;
            }
            for (const auto& [cls, emb] : out.buffered) buffer.add(cls, emb, 0);
        }

        const double val_loss = evaluate(model, config, data, views, fold.val, spec.use_sgsl).first;
        if (!std::isfinite(val_loss)) {
            throw DivergenceError("fold " + std::to_string(fold_index) + ", " + spec.phase + " epoch " +
                                  std::to_string(epoch) + ": non-finite validation loss");
        }
        const bool update = spec.update_motifs && config.eta > 0 && epoch % config.eta == 0;
        if (update) {
            extract_motifs(buffer, model.bank);
        } else {
            ++model.bank.staleness;
        }

        EpochTrace t;
        t.fold = fold_index;
        t.phase = spec.phase;
        t.epoch = epoch;
        t.train_loss = batches ? task_sum / batches : 0.0;
        t.val_loss = val_loss;
        t.motif_loss = motif_batches ? motif_sum / motif_batches : 0.0;
        t.motif_update = update;
        traces.push_back(t);
        outcome.epochs_run = epoch;

        if (val_loss < best_loss) {
            best_loss = val_loss;
            outcome.best_epoch = epoch;
            best = take_snapshot(tensors);
        } else if (epoch - outcome.best_epoch >= config.patience) {
            break;
        }
    }
    restore_snapshot(tensors, best);
    zero_grad(all);
    return outcome;
}

bool motif_active(const RunConfig& config) { return uses_motif(config.variant) && config.lambda > 0.0; }

StageSpec co_stage(const RunConfig& config) {
    StageSpec s;
    if (!uses_sgsl(config.variant)) {
        s.phase = "backbone";
        return s;
    }
    s.phase = "co";
    s.train_sgsl = true;
    s.use_sgsl = true;
    s.use_motif = motif_active(config);
    s.update_motifs = s.use_motif && config.variant != Variant::fixed_motif && config.eta > 0;
    return s;
}

std::shared_ptr<FoldModel> make_model(const RunConfig& config, const PreparedDataset& data, int fold) {
    return std::make_shared<FoldModel>(config, static_cast<std::size_t>(data.data.feature_dim),
                                       static_cast<std::size_t>(data.data.num_classes),
                                       config.seed + static_cast<std::uint64_t>(fold));
}

void prepare_motifs(FoldModel& model, const RunConfig& config, const PreparedDataset& data, int fold) {
    if (!motif_active(config)) return;
    if (data.data.num_classes < 2) throw ConfigError("motif guidance needs at least two classes");
    model.bank = init_motifs(config.init, config, data, fold, &model.sgsl->encoder());
}

PreparedDataset with_structures(const PreparedDataset& base, const std::vector<StructureFile>& structures) {
    PreparedDataset out;
    out.data = apply_structures(base.data, structures);
    out.plan = base.plan;
    for (const Graph& g : out.data.graphs) out.adjacency.push_back(g.dense_adjacency());
    return out;
}

}  // namespace

MotifBank init_motifs(MotifInit mode, const RunConfig& config, const PreparedDataset& data, int fold,
                      GnnEncoder* warm_start) {
    const std::uint64_t fold_seed = config.seed + static_cast<std::uint64_t>(fold);
    const auto classes = static_cast<std::size_t>(data.data.num_classes);
    const auto R = static_cast<std::size_t>(config.R);
    const auto hidden = static_cast<std::size_t>(config.hidden);
    if (mode == MotifInit::random) {
        Rng rng = make_stream(fold_seed, "motif-init");
        return random_motif_bank(classes, R, hidden, rng);
    }

    const std::vector<int>& train = data.plan.folds[static_cast<std::size_t>(fold)].train;
    if (train.empty()) throw ConfigError("pretrained motif initialisation needs training graphs");
    const auto& views = data.views_for(config.variant);

    Rng init = make_stream(fold_seed, "pretrain");
    Rng drop = make_stream(fold_seed, "pretrain-dropout");
    Rng shuffle = make_stream(fold_seed, "pretrain-shuffle");
    GnnEncoder encoder("pretrain.encoder", config.backbone, static_cast<std::size_t>(data.data.feature_dim), hidden,
                       config.dropout, init);
    Linear head("pretrain.head", hidden, classes, init);
    ParameterList params;
    encoder.collect(params);
    head.collect(params);
    AdamState adam;
    AdamOptions adam_options;
    adam_options.lr = config.lr;
    adam_options.weight_decay = config.weight_decay;

    // Subgraph embeddings (V x d) of a batch plus per-graph view offsets.
    auto embed = [&](std::span<const int> ids, bool train_mode) {
        std::vector<const SubgraphView*> flat;
        std::vector<ad::Value> adjacency;
        std::vector<std::size_t> offsets{0};
        for (int id : ids) {
            for (const auto& v : views[static_cast<std::size_t>(id)]) {
                flat.push_back(&v);
                adjacency.push_back(ad::Value::constant(v.adjacency));
            }
            offsets.push_back(flat.size());
        }
        return std::make_pair(embed_views(flat, std::move(adjacency), encoder, train_mode, drop), offsets);
    };

    std::vector<int> order = train;
    for (int epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
        shuffle_in_place(std::span<int>(order), shuffle);
        for (auto batch : batches_of(order, config.batch_size)) {
            zero_grad(params);
            auto [emb, offsets] = embed(batch, true);
            const ad::Value logits = head.forward(ad::segment_sum(emb, offsets));
            std::vector<int> labels;
            for (int id : batch) labels.push_back(data.data.graphs[static_cast<std::size_t>(id)].label);
            const ad::Value loss = cross_entropy_with_logits(logits, labels);
            if (!std::isfinite(loss.item())) {
                throw DivergenceError("fold " + std::to_string(fold) + ", motif pretraining: non-finite loss");
            }
            ad::backward(loss);
            adam_step(params, adam, adam_options);
        }
    }

    std::vector<std::vector<std::vector<double>>> per_class(classes);
    for (auto batch : batches_of(train, config.batch_size)) {
        auto [emb, offsets] = embed(batch, false);
        const auto values = emb.data();
        for (std::size_t g = 0; g < batch.size(); ++g) {
            const int label = data.data.graphs[static_cast<std::size_t>(batch[g])].label;
            for (std::size_t r = offsets[g]; r < offsets[g + 1]; ++r) {
                if (!nonzero_row(values, hidden, r)) continue;
                per_class[static_cast<std::size_t>(label)].emplace_back(
                    values.begin() + static_cast<std::ptrdiff_t>(r * hidden),
                    values.begin() + static_cast<std::ptrdiff_t>((r + 1) * hidden));
            }
        }
    }

    Rng kmeans_rng = make_stream(fold_seed, "motif-kmeans");
    Rng fallback = make_stream(fold_seed, "motif-init");
    MotifBank bank = random_motif_bank(classes, R, hidden, fallback);
    for (std::size_t c = 0; c < classes; ++c) {
        const auto& rows = per_class[c];
        if (rows.empty()) continue;  // keeps its random motifs
        Matrix points(rows.size(), hidden);
        for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), &points(r, 0));
        const LloydResult run = kmeans_random_restarts(points, R, config.kmeans_restarts, kmeans_rng);
        const auto ids = bank.motifs_of(static_cast<int>(c));
        for (std::size_t j = 0; j < ids.size(); ++j)
            for (std::size_t col = 0; col < hidden; ++col) bank.motifs(ids[j], col) = run.centroids(j, col);
    }

    if (warm_start) {
        TensorList from, to;
        encoder.collect(from);
        warm_start->collect(to);
        if (from.size() != to.size()) throw ContractViolation("init_motifs: encoder layouts differ");
        for (std::size_t i = 0; i < from.size(); ++i) {
            if (from[i].rows != to[i].rows || from[i].cols != to[i].cols) {
                throw ContractViolation("init_motifs: encoder tensor " + to[i].name + " has a different shape");
            }
            std::copy(from[i].data.begin(), from[i].data.end(), to[i].data.begin());
        }
    }
    return bank;
}

double test_accuracy(FoldModel& model, const RunConfig& config, const PreparedDataset& data,
                     const std::vector<int>& ids) {
    const bool use_sgsl = model.sgsl != nullptr;
    const auto& views = use_sgsl ? data.views_for(config.variant) : data.partition;
    return evaluate(model, config, data, views, ids, use_sgsl).second;
}

std::vector<StructureFile> export_structures(FoldModel& model, const RunConfig& config, const PreparedDataset& data) {
    std::vector<StructureFile> out;
    out.reserve(data.data.graphs.size());
    std::vector<int> ids(data.data.graphs.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    const auto& views = data.views_for(config.variant);
    Rng unused = make_stream(0, "export");
    for (auto batch : batches_of(ids, config.batch_size)) {
        std::vector<const Graph*> graphs;
        std::vector<const std::vector<SubgraphView>*> view_lists;
        for (int id : batch) {
            graphs.push_back(&data.data.graphs[static_cast<std::size_t>(id)]);
            view_lists.push_back(&views[static_cast<std::size_t>(id)]);
        }
        if (model.sgsl) {
            const SgslBatch sb = model.sgsl->forward(graphs, view_lists, false, false, unused);
            for (std::size_t g = 0; g < batch.size(); ++g)
                out.push_back({batch[g], graphs[g]->num_nodes, edges_from_dense(sb.fused[g].to_matrix())});
        } else {
            for (std::size_t g = 0; g < batch.size(); ++g)
                out.push_back({batch[g], graphs[g]->num_nodes, graphs[g]->edges});
        }
    }
    return out;
}

FoldResult train_fold(const RunConfig& config, const PreparedDataset& data, int fold) {
    if (fold < 0 || static_cast<std::size_t>(fold) >= data.plan.folds.size()) {
        throw ContractViolation("train_fold: fold " + std::to_string(fold) + " out of range");
    }
    FoldResult result;
    result.fold = fold;
    const auto& test_ids = data.plan.folds[static_cast<std::size_t>(fold)].test;

    switch (config.regime) {
        case Regime::co: {
            auto model = make_model(config, data, fold);
            prepare_motifs(*model, config, data, fold);
            const StageOutcome o = run_stage(*model, config, data, fold, co_stage(config), result.traces);
            result.best_epoch = o.best_epoch;
            result.epochs_run = o.epochs_run;
            result.accuracy = test_accuracy(*model, config, data, test_ids);
            result.model = model;
            break;
        }
        case Regime::pre: {
            std::vector<StructureFile> structures;
            if (!config.structures.empty()) {
                structures = read_structures(config.structures);
            } else {
                if (!uses_sgsl(config.variant)) throw ConfigError("regime pre needs a structure-learning variant");
                auto model = make_model(config, data, fold);
                prepare_motifs(*model, config, data, fold);
                run_stage(*model, config, data, fold, co_stage(config), result.traces);
                structures = export_structures(*model, config, data);
                result.model = model;
            }
            const PreparedDataset refined = with_structures(data, structures);
            RunConfig plain = config;
            plain.variant = Variant::backbone;
            auto fresh = make_model(plain, refined, fold);
            StageSpec spec;
            spec.phase = "backbone";
            const StageOutcome o = run_stage(*fresh, plain, refined, fold, spec, result.traces);
            result.best_epoch = o.best_epoch;
            result.epochs_run = o.epochs_run;
            result.accuracy = test_accuracy(*fresh, plain, refined, test_ids);
            if (!result.model) result.model = fresh;
            break;
        }
        case Regime::test: {
            if (!uses_sgsl(config.variant)) throw ConfigError("regime test needs a structure-learning variant");
            auto model = make_model(config, data, fold);
            StageSpec first;
            first.phase = "backbone";
            run_stage(*model, config, data, fold, first, result.traces);

            prepare_motifs(*model, config, data, fold);
            StageSpec second = co_stage(config);
            second.phase = "gsl";
            second.stream_suffix = "-gsl";
            second.train_backbone = false;
            const StageOutcome o = run_stage(*model, config, data, fold, second, result.traces);
            result.best_epoch = o.best_epoch;
            result.epochs_run = o.epochs_run;
            result.accuracy = test_accuracy(*model, config, data, test_ids);
            result.model = model;
            break;
        }
    }
    char line[160];
    std::snprintf(line, sizeof line, "fold %d: accuracy %.2f%% (best epoch %d, %d epochs)", fold, result.accuracy,
                  result.best_epoch, result.epochs_run);
    log_line(line);
    return result;
}

void summarize(RunResult& result) {
    result.fold_accuracies.clear();
    for (const auto& f : result.folds) result.fold_accuracies.push_back(f.accuracy);
    const auto n = static_cast<double>(result.fold_accuracies.size());
    double sum = 0.0;
    for (double a : result.fold_accuracies) sum += a;
    result.mean = n > 0 ? sum / n : 0.0;
    double sq = 0.0;
    for (double a : result.fold_accuracies) sq += (a - result.mean) * (a - result.mean);
    result.std = n > 0 ? std::sqrt(sq / n) : 0.0;
}

RunResult run_regime(const RunConfig& config, const PreparedDataset& data) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    const int n = std::min<int>(config.folds, static_cast<int>(data.plan.folds.size()));
    RunResult result;
    result.variant = to_string(config.variant);
    result.folds.resize(static_cast<std::size_t>(n));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int f = next++; f < n; f = next++) {
            try {
                result.folds[static_cast<std::size_t>(f)] = train_fold(config, data, f);
            } catch (...) {
                errors[static_cast<std::size_t>(f)] = std::current_exception();
            }
        }
    };
    const int threads = std::min(config.jobs, n);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    summarize(result);
    result.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

RunResult run_ablation(RunConfig config, const PreparedDataset& data, Variant variant) {
    config.variant = variant;
    return run_regime(config, data);
}

nlohmann::ordered_json summary_json(const RunConfig& config, const RunResult& result) {
    nlohmann::ordered_json j;
    j["spec_version"] = kSpecVersion;
    j["dataset"] = config.dataset;
    j["regime"] = to_string(config.regime);
    j["variant"] = result.variant;
    j["mean"] = result.mean;
    j["std"] = result.std;
    j["fold_accuracies"] = result.fold_accuracies;
    nlohmann::ordered_json folds = nlohmann::ordered_json::array();
    for (const auto& f : result.folds) {
        folds.push_back({{"fold", f.fold}, {"accuracy", f.accuracy}, {"best_epoch", f.best_epoch},
                         {"epochs", f.epochs_run}});
    }
    j["folds"] = folds;
    j["config"] = config_to_json(config);
    // Parallelism does not change results; keep summaries comparable.
    j["config"]["train"].erase("jobs");
    return j;
}

std::string traces_csv(const RunResult& result) {
    std::ostringstream out;
    out << "fold,phase,epoch,train_loss,val_loss,motif_loss,motif_update\n";
    char buf[256];
    for (const auto& f : result.folds)
        for (const auto& t : f.traces) {
            std::snprintf(buf, sizeof buf, "%d,%s,%d,%.17g,%.17g,%.17g,%d\n", t.fold, t.phase.c_str(), t.epoch,
                          t.train_loss, t.val_loss, t.motif_loss, t.motif_update ? 1 : 0);
            out << buf;
        }
    return out.str();
}

namespace {
constexpr const char* kCheckpointMagic = "mosgsl-checkpoint";
constexpr int kCheckpointVersion = 1;
}  // namespace

void write_checkpoint(const std::filesystem::path& path, FoldModel& model) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    const TensorList tensors = model.tensors();
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n' << "tensors " << tensors.size() << '\n';
    char buf[32];
    for (const auto& t : tensors) {
        out << t.name << ' ' << t.rows << ' ' << t.cols << '\n';
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", t.data[i]);
            out << (i ? " " : "") << buf;
        }
        out << '\n';
    }
    out << "class_of " << model.bank.class_of.size() << '\n';
    for (std::size_t i = 0; i < model.bank.class_of.size(); ++i) out << (i ? " " : "") << model.bank.class_of[i];
    out << '\n';
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

void read_checkpoint(const std::filesystem::path& path, FoldModel& model) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read checkpoint " + path.string());
    std::string magic, word;
    int version = 0;
    std::size_t count = 0;
    if (!(in >> magic >> version) || magic != kCheckpointMagic || version != kCheckpointVersion) {
        throw FormatError(path.string() + ": not a checkpoint file");
    }
    const TensorList tensors = model.tensors();
    if (!(in >> word >> count) || word != "tensors") throw FormatError(path.string() + ": missing tensor count");
    if (count != tensors.size()) {
        throw ConfigError("checkpoint mismatch: " + path.string() + " holds " + std::to_string(count) +
                          " tensors, the configured model has " + std::to_string(tensors.size()));
    }
    for (const auto& t : tensors) {
        std::string name;
        std::size_t rows = 0, cols = 0;
        if (!(in >> name >> rows >> cols)) throw FormatError(path.string() + ": truncated tensor header");
        if (name != t.name || rows != t.rows || cols != t.cols) {
            throw ConfigError("checkpoint mismatch: expected " + t.name + " " + std::to_string(t.rows) + "x" +
                              std::to_string(t.cols) + ", found " + name + " " + std::to_string(rows) + "x" +
                              std::to_string(cols));
        }
        for (double& v : t.data) {
            if (!(in >> word)) throw FormatError(path.string() + ": truncated values of " + name);
            v = std::strtod(word.c_str(), nullptr);
        }
    }
    if (!(in >> word >> count) || word != "class_of") throw FormatError(path.string() + ": missing class map");
    if (count != model.bank.class_of.size()) throw ConfigError("checkpoint mismatch: motif class map size differs");
    for (int& c : model.bank.class_of) in >> c;
    if (!in) throw FormatError(path.string() + ": truncated class map");
}

}  // namespace mosgsl

#include "mosgsl/graph_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "mosgsl/error.hpp"
#include "mosgsl/rng.hpp"

namespace fs = std::filesystem;

namespace mosgsl {

std::vector<int> Graph::degrees() const {
    std::vector<int> deg(static_cast<std::size_t>(num_nodes), 0);
    for (const auto& e : edges) {
        ++deg[static_cast<std::size_t>(e.u)];
        ++deg[static_cast<std::size_t>(e.v)];
    }
    return deg;
}

Matrix Graph::dense_adjacency() const {
    const auto n = static_cast<std::size_t>(num_nodes);
    Matrix a(n, n, 0.0);
    for (const auto& e : edges) {
        a(static_cast<std::size_t>(e.u), static_cast<std::size_t>(e.v)) = e.weight;
        a(static_cast<std::size_t>(e.v), static_cast<std::size_t>(e.u)) = e.weight;
    }
    return a;
}

std::vector<std::vector<int>> Graph::neighbours() const {
    std::vector<std::vector<int>> nb(static_cast<std::size_t>(num_nodes));
    for (const auto& e : edges) {
        nb[static_cast<std::size_t>(e.u)].push_back(e.v);
        nb[static_cast<std::size_t>(e.v)].push_back(e.u);
    }
    for (auto& list : nb) std::sort(list.begin(), list.end());
    return nb;
}

namespace {

// Splits a line on whitespace and commas.
std::vector<std::string> tokens(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',' || std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

struct Line {
    std::size_t number;
    std::vector<std::string> fields;
};

std::vector<Line> read_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<Line> lines;
    std::string text;
    std::size_t number = 0;
    while (std::getline(in, text)) {
        ++number;
        auto fields = tokens(text);
        if (!fields.empty()) lines.push_back({number, std::move(fields)});
    }
    return lines;
}

long long parse_int(const std::string& s, const fs::path& file, std::size_t line) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw FormatError(file.string() + ":" + std::to_string(line) + ": expected integer, got '" + s + "'");
    }
}

double parse_double(const std::string& s, const fs::path& file, std::size_t line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw FormatError(file.string() + ":" + std::to_string(line) + ": expected number, got '" + s + "'");
    }
}

std::vector<long long> read_column(const fs::path& path) {
    std::vector<long long> values;
    for (const auto& line : read_lines(path)) values.push_back(parse_int(line.fields[0], path, line.number));
    return values;
}

fs::path required(const fs::path& dir, const std::string& name, const char* suffix) {
    fs::path p = dir / (name + suffix);
    if (!fs::exists(p)) throw IoError("missing required file " + p.string());
    return p;
}

// Remaps arbitrary integer labels onto 0..k-1 in ascending order.
std::vector<int> remap_contiguous(const std::vector<long long>& raw, int& count) {
    std::map<long long, int> ids;
    for (long long v : raw) ids.emplace(v, 0);
    int next = 0;
    for (auto& [_, id] : ids) id = next++;
    count = next;
    std::vector<int> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = ids[raw[i]];
    return out;
}

}  // namespace

Dataset parse_tu_dataset(const fs::path& dir, const std::string& name) {
    const fs::path a_path = required(dir, name, "_A.txt");
    const fs::path ind_path = required(dir, name, "_graph_indicator.txt");
    const fs::path lab_path = required(dir, name, "_graph_labels.txt");
    const fs::path node_lab_path = dir / (name + "_node_labels.txt");

    const auto indicator = read_column(ind_path);
    const auto raw_labels = read_column(lab_path);
    const std::size_t num_graphs = raw_labels.size();

    Dataset ds;
    ds.name = name;
    ds.graphs.resize(num_graphs);
    auto labels = remap_contiguous(raw_labels, ds.num_classes);

    // Global node i (0-based) -> (graph, local id).
    std::vector<std::pair<std::size_t, int>> local(indicator.size());
    for (std::size_t i = 0; i < indicator.size(); ++i) {
        const long long g = indicator[i];
        if (g < 1 || static_cast<std::size_t>(g) > num_graphs) {
            throw FormatError(ind_path.string() + ":" + std::to_string(i + 1) + ": graph id " + std::to_string(g) +
                              " outside [1, " + std::to_string(num_graphs) + "]");
        }
        auto& graph = ds.graphs[static_cast<std::size_t>(g - 1)];
        local[i] = {static_cast<std::size_t>(g - 1), graph.num_nodes++};
    }
    for (std::size_t g = 0; g < num_graphs; ++g) ds.graphs[g].label = labels[g];

    std::set<std::pair<long long, long long>> seen_directed;
    std::vector<std::set<std::pair<int, int>>> undirected(num_graphs);
    std::size_t duplicates = 0, self_loops = 0;
    for (const auto& line : read_lines(a_path)) {
        if (line.fields.size() < 2) {
            throw FormatError(a_path.string() + ":" + std::to_string(line.number) + ": expected two node ids");
        }
        const long long u = parse_int(line.fields[0], a_path, line.number);
        const long long v = parse_int(line.fields[1], a_path, line.number);
        const auto in_range = [&](long long x) { return x >= 1 && static_cast<std::size_t>(x) <= local.size(); };
        if (!in_range(u) || !in_range(v)) {
            throw FormatError(a_path.string() + ":" + std::to_string(line.number) + ": node id out of range");
        }
        const auto [gu, lu] = local[static_cast<std::size_t>(u - 1)];
        const auto [gv, lv] = local[static_cast<std::size_t>(v - 1)];
        if (gu != gv) {
            throw FormatError(a_path.string() + ":" + std::to_string(line.number) + ": edge " + std::to_string(u) +
                              "-" + std::to_string(v) + " crosses graphs " + std::to_string(gu + 1) + " and " +
                              std::to_string(gv + 1));
        }
        if (!seen_directed.emplace(u, v).second) {
            ++duplicates;
            continue;
        }
        if (lu == lv) {
            ++self_loops;
            continue;
        }
        undirected[gu].emplace(std::min(lu, lv), std::max(lu, lv));
    }
    for (std::size_t g = 0; g < num_graphs; ++g) {
        for (const auto& [u, v] : undirected[g]) ds.graphs[g].edges.push_back({u, v, 1.0});
    }
    if (duplicates > 0 || self_loops > 0) {
        std::cerr << "warning: " << name << ": dropped " << duplicates << " duplicate edge line(s) and " << self_loops
                  << " self-loop(s)\n";
    }

    if (fs::exists(node_lab_path)) {
        const auto raw = read_column(node_lab_path);
        if (raw.size() != local.size()) {
            throw FormatError(node_lab_path.string() + ": " + std::to_string(raw.size()) + " labels for " +
                              std::to_string(local.size()) + " nodes");
        }
        int count = 0;
        const auto node_labels = remap_contiguous(raw, count);
        for (std::size_t i = 0; i < local.size(); ++i) ds.graphs[local[i].first].node_labels.push_back(node_labels[i]);
    }
    return ds;
}

void write_tu_dataset(const Dataset& dataset, const fs::path& dir) {
    fs::create_directories(dir);
    const std::string& name = dataset.name;
    std::ofstream a(dir / (name + "_A.txt")), ind(dir / (name + "_graph_indicator.txt")),
        lab(dir / (name + "_graph_labels.txt"));
    if (!a || !ind || !lab) throw IoError("cannot write dataset files under " + dir.string());
    const bool with_node_labels = std::all_of(dataset.graphs.begin(), dataset.graphs.end(), [](const Graph& g) {
        return static_cast<int>(g.node_labels.size()) == g.num_nodes;
    });
    std::ofstream nl;
    if (with_node_labels) nl.open(dir / (name + "_node_labels.txt"));

    long long base = 1;
    for (std::size_t g = 0; g < dataset.graphs.size(); ++g) {
        const Graph& graph = dataset.graphs[g];
        for (int i = 0; i < graph.num_nodes; ++i) {
            ind << (g + 1) << '\n';
            if (with_node_labels) nl << graph.node_labels[static_cast<std::size_t>(i)] << '\n';
        }
        for (const auto& e : graph.edges) {
            a << base + e.u << ", " << base + e.v << '\n';
            a << base + e.v << ", " << base + e.u << '\n';
        }
        lab << graph.label << '\n';
        base += graph.num_nodes;
    }
}

Dataset synthesize_features(Dataset dataset, int cap) {
    if (cap < 0) throw ConfigError("degree cap must be >= 0");
    const bool use_labels = !dataset.graphs.empty() && std::all_of(dataset.graphs.begin(), dataset.graphs.end(),
                                                                    [](const Graph& g) {
                                                                        return static_cast<int>(g.node_labels.size()) ==
                                                                               g.num_nodes;
                                                                    });
    int dim = cap + 1;
    if (use_labels) {
        dim = 0;
        for (const auto& g : dataset.graphs)
            for (int l : g.node_labels) dim = std::max(dim, l + 1);
    }
    for (auto& g : dataset.graphs) {
        const auto n = static_cast<std::size_t>(g.num_nodes);
        g.features = Matrix(n, static_cast<std::size_t>(dim), 0.0);
        if (use_labels) {
            for (std::size_t i = 0; i < n; ++i) g.features(i, static_cast<std::size_t>(g.node_labels[i])) = 1.0;
        } else {
            const auto deg = g.degrees();
            for (std::size_t i = 0; i < n; ++i) g.features(i, static_cast<std::size_t>(std::min(deg[i], cap))) = 1.0;
        }
    }
    dataset.feature_dim = dim;
    return dataset;
}

Dataset load_tu_dataset(const fs::path& dir, const std::string& name, int degree_cap) {
    return synthesize_features(parse_tu_dataset(dir, name), degree_cap);
}

FoldPlan make_fold_plan(const Dataset& dataset, std::uint64_t seed) {
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(dataset.num_classes));
    for (std::size_t i = 0; i < dataset.graphs.size(); ++i) {
        by_class[static_cast<std::size_t>(dataset.graphs[i].label)].push_back(static_cast<int>(i));
    }
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        if (by_class[c].size() < static_cast<std::size_t>(kNumFolds)) {
            throw ConfigError("class " + std::to_string(c) + " has " + std::to_string(by_class[c].size()) +
                              " graphs; 10-fold stratification needs at least 10");
        }
    }

    Rng rng = make_stream(seed, "fold-plan");
    std::vector<int> fold_of(dataset.graphs.size(), -1);
    std::size_t counter = 0;
    for (auto& members : by_class) {
        shuffle_in_place(std::span<int>(members), rng);
        for (int g : members) fold_of[static_cast<std::size_t>(g)] = static_cast<int>(counter++ % kNumFolds);
    }

    FoldPlan plan;
    plan.folds.resize(kNumFolds);
    for (int f = 0; f < kNumFolds; ++f) {
        Fold& fold = plan.folds[static_cast<std::size_t>(f)];
        Rng val_rng = make_stream(seed + static_cast<std::uint64_t>(f), "fold-validation");
        for (const auto& members : by_class) {
            std::vector<int> rest;
            for (int g : members) {
                if (fold_of[static_cast<std::size_t>(g)] == f) {
                    fold.test.push_back(g);
                } else {
                    rest.push_back(g);
                }
            }
            shuffle_in_place(std::span<int>(rest), val_rng);
            const auto n_val = static_cast<std::size_t>(std::lround(0.1 * static_cast<double>(rest.size())));
            fold.val.insert(fold.val.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_val));
            fold.train.insert(fold.train.end(), rest.begin() + static_cast<std::ptrdiff_t>(n_val), rest.end());
        }
        std::sort(fold.train.begin(), fold.train.end());
        std::sort(fold.val.begin(), fold.val.end());
        std::sort(fold.test.begin(), fold.test.end());
    }
    return plan;
}

void write_structures(const fs::path& dir, const std::vector<StructureFile>& structures) {
    fs::create_directories(dir);
    std::ofstream manifest(dir / "manifest.txt");
    if (!manifest) throw IoError("cannot write " + (dir / "manifest.txt").string());
    for (const auto& s : structures) {
        const std::string file = "graph_" + std::to_string(s.graph_id) + ".txt";
        std::ofstream out(dir / file);
        if (!out) throw IoError("cannot write " + (dir / file).string());
        out.precision(17);
        for (const auto& e : s.edges) out << e.u << ' ' << e.v << ' ' << e.weight << '\n';
        manifest << s.graph_id << ' ' << s.num_nodes << ' ' << file << '\n';
    }
}

std::vector<StructureFile> read_structures(const fs::path& dir) {
    const fs::path manifest = dir / "manifest.txt";
    if (!fs::exists(manifest)) throw IoError("missing structure manifest " + manifest.string());
    std::vector<StructureFile> out;
    for (const auto& line : read_lines(manifest)) {
        if (line.fields.size() != 3) {
            throw FormatError(manifest.string() + ":" + std::to_string(line.number) +
                              ": expected '<graph id> <node count> <file>'");
        }
        StructureFile s;
        s.graph_id = static_cast<int>(parse_int(line.fields[0], manifest, line.number));
        s.num_nodes = static_cast<int>(parse_int(line.fields[1], manifest, line.number));
        const fs::path file = dir / line.fields[2];
        for (const auto& el : read_lines(file)) {
            if (el.fields.size() != 3) {
                throw FormatError(file.string() + ":" + std::to_string(el.number) + ": expected 'u v w'");
            }
            Edge e;
            e.u = static_cast<int>(parse_int(el.fields[0], file, el.number));
            e.v = static_cast<int>(parse_int(el.fields[1], file, el.number));
            e.weight = parse_double(el.fields[2], file, el.number);
            if (e.u < 0 || e.v < 0 || e.u >= s.num_nodes || e.v >= s.num_nodes || e.u == e.v) {
                throw FormatError(file.string() + ":" + std::to_string(el.number) + ": invalid node pair");
            }
            if (e.u > e.v) std::swap(e.u, e.v);
            s.edges.push_back(e);
        }
        out.push_back(std::move(s));
    }
    return out;
}

Dataset apply_structures(Dataset dataset, const std::vector<StructureFile>& structures) {
    for (const auto& s : structures) {
        if (s.graph_id < 0 || static_cast<std::size_t>(s.graph_id) >= dataset.graphs.size()) {
            throw FormatError("structure for unknown graph id " + std::to_string(s.graph_id));
        }
        Graph& g = dataset.graphs[static_cast<std::size_t>(s.graph_id)];
        if (g.num_nodes != s.num_nodes) {
            throw FormatError("structure for graph " + std::to_string(s.graph_id) + " has " +
                              std::to_string(s.num_nodes) + " nodes, dataset has " + std::to_string(g.num_nodes));
        }
        g.edges = s.edges;
    }
    return dataset;
}

std::vector<Edge> edges_from_dense(const Matrix& adjacency, double threshold) {
    std::vector<Edge> edges;
    for (std::size_t u = 0; u < adjacency.rows; ++u)
        for (std::size_t v = u + 1; v < adjacency.cols; ++v) {
            const double w = adjacency(u, v);
            if (w > threshold) edges.push_back({static_cast<int>(u), static_cast<int>(v), w});
        }
    return edges;
}

}  // namespace mosgsl

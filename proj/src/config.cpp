#include "mosgsl/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include <toml.hpp>

#include "mosgsl/error.hpp"

namespace mosgsl {

Regime parse_regime(const std::string& s) {
    if (s == "co") return Regime::co;
    if (s == "pre") return Regime::pre;
    if (s == "test") return Regime::test;
    throw ConfigError("unknown regime '" + s + "' (expected co, pre or test)");
}

std::string to_string(Regime r) {
    switch (r) {
        case Regime::co: return "co";
        case Regime::pre: return "pre";
        case Regime::test: return "test";
    }
    return "co";
}

Variant parse_variant(const std::string& s) {
    if (s == "full") return Variant::full;
    if (s == "gsl") return Variant::gsl;
    if (s == "sgsl") return Variant::sgsl;
    if (s == "gsl+motif") return Variant::gsl_motif;
    if (s == "fixed-motif") return Variant::fixed_motif;
    if (s == "backbone") return Variant::backbone;
    throw ConfigError("unknown variant '" + s + "' (expected full, gsl, sgsl, gsl+motif, fixed-motif or backbone)");
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::gsl: return "gsl";
        case Variant::sgsl: return "sgsl";
        case Variant::gsl_motif: return "gsl+motif";
        case Variant::fixed_motif: return "fixed-motif";
        case Variant::backbone: return "backbone";
    }
    return "full";
}

void RunConfig::validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("invalid config: " + what); };
    if (dataset.empty()) fail("data.name must not be empty");
    if (degree_cap < 0) fail("data.degree_cap must be >= 0");
    if (hidden < 1) fail("model.hidden must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("model.dropout must lie in [0, 1)");
    if (K < 1) fail("sgsl.K must be >= 1");
    if (M < 1) fail("sgsl.M must be >= 1");
    if (!(epsilon > 0.0 && epsilon <= 1.0)) fail("sgsl.epsilon must lie in (0, 1]");
    if (!(gamma >= 0.0 && gamma <= 1.0)) fail("sgsl.gamma must lie in [0, 1]");
    if (knn_k < 1) fail("sgsl.knn_k must be >= 1");
    if (R < 1) fail("motif.R must be >= 1");
    if (lambda < 0.0) fail("motif.lambda must be >= 0");
    if (!(temperature > 0.0)) fail("motif.temperature must be > 0");
    if (pretrain_epochs < 1) fail("motif.pretrain_epochs must be >= 1");
    if (kmeans_restarts < 1) fail("motif.kmeans_restarts must be >= 1");
    if (buffer_capacity < 1) fail("motif.buffer_capacity must be >= 1");
    if (!(lr > 0.0)) fail("train.lr must be > 0");
    if (weight_decay < 0.0) fail("train.weight_decay must be >= 0");
    if (batch_size < 1) fail("train.batch_size must be >= 1");
    if (max_epochs < 1) fail("train.max_epochs must be >= 1");
    if (patience < 1) fail("train.patience must be >= 1");
    if (max_epochs < patience) fail("train.max_epochs must be >= train.patience");
    if (folds < 1 || folds > 10) fail("train.folds must lie in [1, 10]");
    if (jobs < 1) fail("train.jobs must be >= 1");
}

namespace {

enum class Kind { integer, real, text };

struct Field {
    std::string section;
    std::string key;
    Kind kind;
    std::function<void(RunConfig&, long long)> set_int;
    std::function<void(RunConfig&, double)> set_real;
    std::function<void(RunConfig&, const std::string&)> set_text;
    std::function<nlohmann::ordered_json(const RunConfig&)> get;
};

Field int_field(std::string s, std::string k, int RunConfig::*m) {
    Field f{std::move(s), std::move(k), Kind::integer, {}, {}, {}, {}};
    f.set_int = [m](RunConfig& c, long long v) { c.*m = static_cast<int>(v); };
    f.get = [m](const RunConfig& c) { return nlohmann::ordered_json(c.*m); };
    return f;
}

Field real_field(std::string s, std::string k, double RunConfig::*m) {
    Field f{std::move(s), std::move(k), Kind::real, {}, {}, {}, {}};
    f.set_real = [m](RunConfig& c, double v) { c.*m = v; };
    f.set_int = [m](RunConfig& c, long long v) { c.*m = static_cast<double>(v); };
    f.get = [m](const RunConfig& c) { return nlohmann::ordered_json(c.*m); };
    return f;
}

Field text_field(std::string s, std::string k, std::string RunConfig::*m) {
    Field f{std::move(s), std::move(k), Kind::text, {}, {}, {}, {}};
    f.set_text = [m](RunConfig& c, const std::string& v) { c.*m = v; };
    f.get = [m](const RunConfig& c) { return nlohmann::ordered_json(c.*m); };
    return f;
}

template <typename E>
Field enum_field(std::string s, std::string k, E RunConfig::*m, E (*parse)(const std::string&),
                 std::string (*show)(E)) {
    Field f{std::move(s), std::move(k), Kind::text, {}, {}, {}, {}};
    f.set_text = [m, parse](RunConfig& c, const std::string& v) { c.*m = parse(v); };
    f.get = [m, show](const RunConfig& c) { return nlohmann::ordered_json(show(c.*m)); };
    return f;
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> t;
        t.push_back(text_field("data", "name", &RunConfig::dataset));
        t.push_back(text_field("data", "dir", &RunConfig::data_dir));
        t.push_back(int_field("data", "degree_cap", &RunConfig::degree_cap));
        t.push_back(text_field("data", "structures", &RunConfig::structures));

        t.push_back(enum_field<GnnKind>("model", "backbone", &RunConfig::backbone, parse_gnn_kind, to_string));
        t.push_back(int_field("model", "hidden", &RunConfig::hidden));
        t.push_back(real_field("model", "dropout", &RunConfig::dropout));

        t.push_back(int_field("sgsl", "K", &RunConfig::K));
        t.push_back(int_field("sgsl", "M", &RunConfig::M));
        t.push_back(real_field("sgsl", "epsilon", &RunConfig::epsilon));
        t.push_back(real_field("sgsl", "gamma", &RunConfig::gamma));
        t.push_back(enum_field<Processor::Mode>("sgsl", "processor", &RunConfig::processor, parse_processor_mode,
                                                to_string));
        t.push_back(int_field("sgsl", "knn_k", &RunConfig::knn_k));
        t.push_back(real_field("sgsl", "eps_theta", &RunConfig::eps_theta));

        t.push_back(int_field("motif", "R", &RunConfig::R));
        t.push_back(real_field("motif", "lambda", &RunConfig::lambda));
        t.push_back(real_field("motif", "temperature", &RunConfig::temperature));
        t.push_back(int_field("motif", "eta", &RunConfig::eta));
        t.push_back(enum_field<MotifInit>("motif", "init", &RunConfig::init, parse_motif_init, to_string));
        t.push_back(enum_field<Numerator>("motif", "numerator", &RunConfig::numerator, parse_numerator, to_string));
        t.push_back(int_field("motif", "pretrain_epochs", &RunConfig::pretrain_epochs));
        t.push_back(int_field("motif", "kmeans_restarts", &RunConfig::kmeans_restarts));
        t.push_back(int_field("motif", "buffer_capacity", &RunConfig::buffer_capacity));

        t.push_back(real_field("train", "lr", &RunConfig::lr));
        t.push_back(real_field("train", "weight_decay", &RunConfig::weight_decay));
        t.push_back(int_field("train", "batch_size", &RunConfig::batch_size));
        t.push_back(int_field("train", "max_epochs", &RunConfig::max_epochs));
        t.push_back(int_field("train", "patience", &RunConfig::patience));
        {
            Field f{"train", "seed", Kind::integer, {}, {}, {}, {}};
            f.set_int = [](RunConfig& c, long long v) {
                if (v < 0) throw ConfigError("invalid config: train.seed must be >= 0");
                c.seed = static_cast<std::uint64_t>(v);
            };
            f.get = [](const RunConfig& c) { return nlohmann::ordered_json(c.seed); };
            t.push_back(std::move(f));
        }
        t.push_back(enum_field<Regime>("train", "regime", &RunConfig::regime, parse_regime, to_string));
        t.push_back(enum_field<Variant>("train", "variant", &RunConfig::variant, parse_variant, to_string));
        t.push_back(int_field("train", "folds", &RunConfig::folds));
        t.push_back(int_field("train", "jobs", &RunConfig::jobs));
        return t;
    }();
    return table;
}

const Field* find_field(const std::string& section, const std::string& key) {
    for (const auto& f : fields())
        if (f.section == section && f.key == key) return &f;
    return nullptr;
}

void set_from_string(RunConfig& config, const Field& f, const std::string& value) {
    const std::string name = f.section + "." + f.key;
    try {
        switch (f.kind) {
            case Kind::integer: {
                std::size_t used = 0;
                const long long v = std::stoll(value, &used);
                if (used != value.size()) throw std::invalid_argument(value);
                f.set_int(config, v);
                break;
            }
            case Kind::real: {
                std::size_t used = 0;
                const double v = std::stod(value, &used);
                if (used != value.size()) throw std::invalid_argument(value);
                f.set_real(config, v);
                break;
            }
            case Kind::text: f.set_text(config, value); break;
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("invalid config: " + name + " = '" + value + "' is not a valid value");
    }
}

}  // namespace

RunConfig parse_config(const std::string& toml_text, const std::string& source) {
    toml::table doc;
    try {
        doc = toml::parse(toml_text, std::string_view(source));
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << source << ": " << e.description() << " (line " << e.source().begin.line << ")";
        throw ConfigError(msg.str());
    }
    RunConfig config;
    for (const auto& [section_key, section_node] : doc) {
        const std::string section(section_key.str());
        const toml::table* table = section_node.as_table();
        if (!table) throw ConfigError(source + ": top-level key '" + section + "' must be a [section]");
        for (const auto& [key_node, value] : *table) {
            const std::string key(key_node.str());
            const Field* f = find_field(section, key);
            if (!f) throw ConfigError(source + ": unknown key '" + section + "." + key + "'");
            const std::string name = section + "." + key;
            switch (f->kind) {
                case Kind::integer:
                    if (auto v = value.value_exact<int64_t>()) {
                        f->set_int(config, *v);
                    } else {
                        throw ConfigError(source + ": " + name + " must be an integer");
                    }
                    break;
                case Kind::real:
                    if (auto i = value.value_exact<int64_t>()) {
                        f->set_int(config, *i);
                    } else if (auto d = value.value_exact<double>()) {
                        f->set_real(config, *d);
                    } else {
                        throw ConfigError(source + ": " + name + " must be a number");
                    }
                    break;
                case Kind::text:
                    if (auto s = value.value_exact<std::string>()) {
                        f->set_text(config, *s);
                    } else {
                        throw ConfigError(source + ": " + name + " must be a string");
                    }
                    break;
            }
        }
    }
    config.validate();
    return config;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), path.string());
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
    const auto dot = key.find('.');
    const Field* f = nullptr;
    if (dot != std::string::npos) {
        f = find_field(key.substr(0, dot), key.substr(dot + 1));
    } else {
        for (const auto& candidate : fields())
            if (candidate.key == key) f = &candidate;
    }
    if (!f) throw ConfigError("unknown config key '" + key + "'");
    set_from_string(config, *f, value);
}

nlohmann::ordered_json config_to_json(const RunConfig& config) {
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& f : fields()) out[f.section][f.key] = f.get(config);
    return out;
}

std::string config_to_toml(const RunConfig& config) {
    std::ostringstream out;
    out.precision(17);
    std::string section;
    for (const auto& f : fields()) {
        if (f.section != section) {
            if (!section.empty()) out << '\n';
            section = f.section;
            out << '[' << section << "]\n";
        }
        const auto v = f.get(config);
        out << f.key << " = ";
        if (f.kind == Kind::real) {
            // Keep a decimal point so the value re-parses as a float.
            std::ostringstream num;
            num.precision(17);
            num << v.get<double>();
            std::string s = num.str();
            if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
            out << s;
        } else {
            out << v.dump();
        }
        out << '\n';
    }
    return out.str();
}

RunConfig preset_config(const std::string& dataset) {
    RunConfig c;
    c.dataset = dataset;
    struct Row {
        const char* name;
        int R;
        double epsilon, lambda, gamma;
        int batch;
        double lr, wd;
    };
    static const Row rows[] = {
        {"IMDB-BINARY", 2, 0.6, 0.1, 0.5, 64, 1e-3, 5e-4},   {"IMDB-MULTI", 4, 0.6, 0.01, 0.3, 128, 1e-2, 5e-4},
        {"REDDIT-BINARY", 2, 0.4, 0.1, 0.3, 128, 1e-2, 0.0}, {"ENZYMES", 2, 0.4, 0.01, 0.3, 128, 1e-3, 5e-4},
        {"PROTEINS", 1, 0.6, 0.01, 0.5, 32, 1e-3, 5e-6},
    };
    for (const auto& r : rows) {
        if (dataset != r.name) continue;
        c.R = r.R;
        c.epsilon = r.epsilon;
        c.lambda = r.lambda;
        c.gamma = r.gamma;
        c.batch_size = r.batch;
        c.lr = r.lr;
        c.weight_decay = r.wd;
        if (dataset == "REDDIT-BINARY") {
            c.K = 16;
            c.M = 32;
        }
        return c;
    }
    throw ConfigError("no preset for dataset '" + dataset + "'");
}

}  // namespace mosgsl

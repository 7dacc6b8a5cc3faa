#include "fllab/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "fllab/error.hpp"
#include "fllab/metrics.hpp"

namespace fllab::config {

namespace {

constexpr std::uint64_t kTagData = 0x44415441ULL;       // "DATA"
constexpr std::uint64_t kTagHoldout = 0x484F4C44ULL;    // "HOLD"
constexpr std::uint64_t kTagPartition = 0x50415254ULL;  // "PART"

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
std::optional<T> parse_int(std::string_view s) {
    T v{};
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::optional<double> parse_plain_double(std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

// Accepts "0.25" or "1/4".
std::optional<double> parse_number(std::string_view s) {
    const auto slash = s.find('/');
    if (slash == std::string_view::npos) return parse_plain_double(s);
    const auto num = parse_plain_double(trim(s.substr(0, slash)));
    const auto den = parse_plain_double(trim(s.substr(slash + 1)));
    if (!num || !den || *den == 0.0) return std::nullopt;
    return *num / *den;
}

std::optional<bool> parse_bool(std::string_view s) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    return std::nullopt;
}

std::optional<std::vector<std::size_t>> parse_size_list(std::string_view s) {
    std::vector<std::size_t> out;
    if (trim(s).empty()) return out;
    while (true) {
        const auto comma = s.find(',');
        const auto item = trim(s.substr(0, comma));
        const auto v = parse_int<std::size_t>(item);
        if (!v) return std::nullopt;
        out.push_back(*v);
        if (comma == std::string_view::npos) break;
        s.remove_prefix(comma + 1);
    }
    return out;
}

std::optional<PartitionScheme> parse_partition(std::string_view s) {
    if (s == "iid") return PartitionScheme::iid;
    if (s == "dirichlet") return PartitionScheme::dirichlet;
    if (s == "labels") return PartitionScheme::labels;
    return std::nullopt;
}

// One setter per key. Returns an error description or empty on success.
using Setter = std::function<std::string(Experiment&, std::string_view)>;

template <typename T>
Setter size_setter(T Experiment::*section, std::size_t T::*field) {
    return [=](Experiment& e, std::string_view v) -> std::string {
        const auto n = parse_int<std::size_t>(v);
        if (!n) return "expected a non-negative integer";
        (e.*section).*field = *n;
        return {};
    };
}

template <typename T>
Setter number_setter(T Experiment::*section, double T::*field) {
    return [=](Experiment& e, std::string_view v) -> std::string {
        const auto n = parse_number(v);
        if (!n) return "expected a number";
        (e.*section).*field = *n;
        return {};
    };
}

template <typename T>
Setter bool_setter(T Experiment::*section, bool T::*field) {
    return [=](Experiment& e, std::string_view v) -> std::string {
        const auto b = parse_bool(v);
        if (!b) return "expected true or false";
        (e.*section).*field = *b;
        return {};
    };
}

using Table = std::map<std::string, std::map<std::string, Setter, std::less<>>, std::less<>>;

const Table& setters() {
    static const Table table = [] {
        using namespace federation;
        Table t;
        auto& d = t["data"];
        d["file"] = [](Experiment& e, std::string_view v) -> std::string {
            e.data.file = std::string(v);
            return {};
        };
        d["train_samples"] = size_setter(&Experiment::data, &DataSpec::train_samples);
        d["test_samples"] = size_setter(&Experiment::data, &DataSpec::test_samples);
        d["dim"] = size_setter(&Experiment::data, &DataSpec::dim);
        d["classes"] = size_setter(&Experiment::data, &DataSpec::classes);
        d["margin"] = number_setter(&Experiment::data, &DataSpec::margin);
        d["partition"] = [](Experiment& e, std::string_view v) -> std::string {
            const auto p = parse_partition(v);
            if (!p) return "expected iid, dirichlet or labels";
            e.data.partition = *p;
            return {};
        };
        d["alpha"] = number_setter(&Experiment::data, &DataSpec::alpha);
        d["labels_per_client"] = size_setter(&Experiment::data, &DataSpec::labels_per_client);

        auto& m = t["model"];
        m["hidden"] = [](Experiment& e, std::string_view v) -> std::string {
            const auto list = parse_size_list(v);
            if (!list) return "expected a comma-separated list of positive integers";
            e.model.hidden = *list;
            return {};
        };
        m["rank"] = [](Experiment& e, std::string_view v) -> std::string {
            if (v == "auto") {
                e.model.overrides.rank.reset();
                return {};
            }
            const auto n = parse_int<std::size_t>(v);
            if (!n) return "expected a positive integer or auto";
            e.model.overrides.rank = *n;
            return {};
        };
        m["blocks"] = [](Experiment& e, std::string_view v) -> std::string {
            if (v == "auto") {
                e.model.overrides.blocks.reset();
                return {};
            }
            const auto n = parse_int<std::size_t>(v);
            if (!n) return "expected a positive integer or auto";
            e.model.overrides.blocks = *n;
            return {};
        };

        auto& f = t["federation"];
        f["method"] = [](Experiment& e, std::string_view v) -> std::string {
            const auto mth = parse_method(v);
            if (!mth) return "unknown method";
            e.fed.method = *mth;
            return {};
        };
        f["rounds"] = size_setter(&Experiment::fed, &FedConfig::rounds);
        f["clients"] = size_setter(&Experiment::fed, &FedConfig::clients);
        f["participants"] = size_setter(&Experiment::fed, &FedConfig::participants);
        f["local_epochs"] = size_setter(&Experiment::fed, &FedConfig::local_epochs);
        f["batch_size"] = size_setter(&Experiment::fed, &FedConfig::batch_size);
        f["lr"] = number_setter(&Experiment::fed, &FedConfig::lr);
        f["reset_interval"] = size_setter(&Experiment::fed, &FedConfig::reset_interval);
        f["ratio"] = number_setter(&Experiment::fed, &FedConfig::ratio);
        f["init_bound"] = number_setter(&Experiment::fed, &FedConfig::init_bound);
        f["seed"] = [](Experiment& e, std::string_view v) -> std::string {
            const auto n = parse_int<std::uint64_t>(v);
            if (!n) return "expected an unsigned 64-bit integer";
            e.fed.global_seed = *n;
            return {};
        };
        f["weighting"] = [](Experiment& e, std::string_view v) -> std::string {
            const auto w = parse_weighting(v);
            if (!w) return "expected uniform or by_samples";
            e.fed.weighting = *w;
            return {};
        };
        f["zero_compressed_base"] = bool_setter(&Experiment::fed, &FedConfig::zero_compressed_base);
        f["random_v_init"] = bool_setter(&Experiment::fed, &FedConfig::random_v_init);
        f["bytes_per_scalar"] = size_setter(&Experiment::fed, &FedConfig::bytes_per_scalar);
        f["parallel_clients"] = size_setter(&Experiment::fed, &FedConfig::parallel_clients);
        f["diagnostics"] = bool_setter(&Experiment::fed, &FedConfig::diagnostics);
        f["track_shard_loss"] = bool_setter(&Experiment::fed, &FedConfig::track_shard_loss);

        auto& o = t["output"];
        o["dir"] = [](Experiment& e, std::string_view v) -> std::string {
            e.output.dir = std::string(v);
            return {};
        };
        return t;
    }();
    return table;
}

}  // namespace

std::string_view to_string(PartitionScheme p) noexcept {
    switch (p) {
    case PartitionScheme::iid:
        return "iid";
    case PartitionScheme::dirichlet:
        return "dirichlet";
    case PartitionScheme::labels:
        return "labels";
    }
    return "unknown";
}

Experiment parse_config_text(std::string_view text) {
    Experiment e;
    std::vector<std::string> problems;
    const auto& table = setters();
    const std::map<std::string, Setter, std::less<>>* section = nullptr;
    std::string section_name;

    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);

        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(line_no) + ": ";

        if (line.front() == '[') {
            if (line.back() != ']') {
                problems.push_back(where + "malformed section header");
                section = nullptr;
                continue;
            }
            section_name = std::string(trim(line.substr(1, line.size() - 2)));
            const auto it = table.find(section_name);
            if (it == table.end()) {
                problems.push_back(where + "unknown section [" + section_name + "]");
                section = nullptr;
            } else {
                section = &it->second;
            }
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            problems.push_back(where + "expected key = value");
            continue;
        }
        const std::string key(trim(line.substr(0, eq)));
        const std::string_view value = trim(line.substr(eq + 1));
        if (section_name.empty()) {
            problems.push_back(where + "key '" + key + "' appears before any section header");
            continue;
        }
        if (!section) continue;  // already reported the bad section
        const auto it = section->find(key);
        if (it == section->end()) {
            problems.push_back(where + "unknown key '" + key + "' in [" + section_name + "]");
            continue;
        }
        if (auto err = it->second(e, value); !err.empty()) {
            problems.push_back(where + key + ": " + err + " (got '" + std::string(value) + "')");
        }
    }

    auto invariant_problems = validation_errors(e);
    problems.insert(problems.end(), invariant_problems.begin(), invariant_problems.end());
    if (!problems.empty()) throw ConfigError(std::move(problems));
    return e;
}

Experiment parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"cannot read config file " + path.string()});
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::vector<std::string> validation_errors(const Experiment& e) {
    auto errs = federation::validation_errors(e.fed);
    const DataSpec& d = e.data;
    if (d.file.empty()) {
        if (d.classes < 1) errs.emplace_back("classes must be >= 1");
        if (d.dim < d.classes) errs.emplace_back("dim must be >= classes");
        if (d.train_samples < d.classes) errs.emplace_back("train_samples must be >= classes");
    }
    if (d.test_samples < 1) errs.emplace_back("test_samples must be >= 1");
    if (d.classes > 65536) errs.emplace_back("classes must fit in 16 bits");
    if (d.partition == PartitionScheme::dirichlet && !(d.alpha > 0.0)) errs.emplace_back("alpha must be > 0");
    if (d.partition == PartitionScheme::labels && (d.labels_per_client < 1 || d.labels_per_client > d.classes)) {
        errs.emplace_back("labels_per_client must be in [1, classes]");
    }
    for (std::size_t h : e.model.hidden)
        if (h < 1) errs.emplace_back("hidden layer widths must be >= 1");
    if (e.model.overrides.rank && *e.model.overrides.rank < 1) errs.emplace_back("rank must be >= 1");
    if (e.model.overrides.blocks && *e.model.overrides.blocks < 1) errs.emplace_back("blocks must be >= 1");
    return errs;
}

std::string to_config_text(const Experiment& e) {
    using metrics::format_double;
    std::ostringstream os;
    os << "[data]\n";
    if (!e.data.file.empty()) os << "file = " << e.data.file << '\n';
    os << "train_samples = " << e.data.train_samples << '\n'
       << "test_samples = " << e.data.test_samples << '\n'
       << "dim = " << e.data.dim << '\n'
       << "classes = " << e.data.classes << '\n'
       << "margin = " << format_double(e.data.margin) << '\n'
       << "partition = " << to_string(e.data.partition) << '\n'
       << "alpha = " << format_double(e.data.alpha) << '\n'
       << "labels_per_client = " << e.data.labels_per_client << '\n';

    os << "\n[model]\nhidden = ";
    for (std::size_t i = 0; i < e.model.hidden.size(); ++i) os << (i ? "," : "") << e.model.hidden[i];
    os << "\nrank = " << (e.model.overrides.rank ? std::to_string(*e.model.overrides.rank) : "auto") << '\n'
       << "blocks = " << (e.model.overrides.blocks ? std::to_string(*e.model.overrides.blocks) : "auto") << '\n';

    const auto& f = e.fed;
    os << "\n[federation]\n"
       << "method = " << federation::to_string(f.method) << '\n'
       << "rounds = " << f.rounds << '\n'
       << "clients = " << f.clients << '\n'
       << "participants = " << f.participants << '\n'
       << "local_epochs = " << f.local_epochs << '\n'
       << "batch_size = " << f.batch_size << '\n'
       << "lr = " << format_double(f.lr) << '\n'
       << "reset_interval = " << f.reset_interval << '\n'
       << "ratio = " << format_double(f.ratio) << '\n'
       << "init_bound = " << format_double(f.init_bound) << '\n'
       << "seed = " << f.global_seed << '\n'
       << "weighting = " << federation::to_string(f.weighting) << '\n'
       << "zero_compressed_base = " << (f.zero_compressed_base ? "true" : "false") << '\n'
       << "random_v_init = " << (f.random_v_init ? "true" : "false") << '\n'
       << "bytes_per_scalar = " << f.bytes_per_scalar << '\n'
       << "parallel_clients = " << f.parallel_clients << '\n'
       << "diagnostics = " << (f.diagnostics ? "true" : "false") << '\n'
       << "track_shard_loss = " << (f.track_shard_loss ? "true" : "false") << '\n';

    os << "\n[output]\n";
    if (!e.output.dir.empty()) os << "dir = " << e.output.dir << '\n';
    return os.str();
}

PreparedData prepare_data(const Experiment& e) {
    const std::uint64_t seed = e.fed.global_seed;
    data::Dataset full;
    std::size_t test_count = e.data.test_samples;
    if (e.data.file.empty()) {
        full = data::synth_classification(e.data.train_samples + e.data.test_samples, e.data.dim, e.data.classes,
                                          e.data.margin, derive_seed(seed, kTagData));
    } else {
        full = data::load_dataset(e.data.file);
    }
    auto split = data::holdout(full, test_count, derive_seed(seed, kTagHoldout));

    const std::uint64_t pseed = derive_seed(seed, kTagPartition);
    data::Partition partition;
    switch (e.data.partition) {
    case PartitionScheme::iid:
        partition = data::partition_iid(split.train, e.fed.clients, pseed);
        break;
    case PartitionScheme::dirichlet:
        partition = data::partition_dirichlet(split.train, e.fed.clients, e.data.alpha, pseed);
        break;
    case PartitionScheme::labels:
        partition = data::partition_labels(split.train, e.fed.clients, e.data.labels_per_client, pseed);
        break;
    }
    return PreparedData{std::move(split.train), std::move(split.test), std::move(partition)};
}

std::vector<model::LayerSpec> layer_specs(const Experiment& e, std::size_t input_dim, std::size_t classes) {
    federation::Architecture arch{input_dim, e.model.hidden, classes};
    return federation::preset_layers(e.fed, arch, e.model.overrides);
}

federation::RunResult run_experiment(const Experiment& e, const std::filesystem::path& out_dir,
                                     const std::function<void(const RoundReport&)>& progress) {
    Experiment resolved = e;
    resolved.fed = federation::apply_preset(e.fed);
    resolved.output.dir = out_dir.string();

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
    {
        std::ofstream cfg(out_dir / "resolved_config.txt", std::ios::trunc);
        if (!cfg) throw IoError("cannot write resolved_config.txt");
        cfg << to_config_text(resolved);
        if (!cfg) throw IoError("cannot write resolved_config.txt");
    }

    const PreparedData prepared = prepare_data(resolved);
    const auto specs = layer_specs(resolved, prepared.train.dim(), prepared.train.num_classes);

    metrics::MetricsSink sink(out_dir / "metrics.csv");
    federation::RunHooks hooks;
    hooks.on_report = progress;
    auto result = federation::run(resolved.fed, specs, prepared.train, prepared.test, prepared.partition, hooks, &sink);
    sink.finalize();
    return result;
}

}  // namespace fllab::config

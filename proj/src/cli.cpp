#include "gnnformer/cli.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "gnnformer/log.hpp"

namespace gnnformer::cli {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_scalar(std::string_view key, std::string_view text) {
    T value{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
        throw ConfigError(std::string(key) + ": cannot parse '" + std::string(text) + "'");
    return value;
}

template <typename T>
std::vector<T> parse_list(std::string_view text, const char* what) {
    std::vector<T> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto item = trim(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        out.push_back(parse_scalar<T>(what, item));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::filesystem::path require_out(const ExperimentConfig& config, const std::optional<std::string>& flag) {
    if (flag) return *flag;
    if (config.output_dir) return *config.output_dir;
    throw ConfigError("no output directory: pass --out or set output.dir");
}

void prepare_out_dir(const std::filesystem::path& out) {
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory " + out.string() + ": " + ec.message());
}

}  // namespace

std::vector<Seed> parse_seed_list(std::string_view text) { return parse_list<Seed>(text, "seeds"); }
std::vector<int> parse_int_list(std::string_view text) { return parse_list<int>(text, "list"); }

void ExperimentConfig::validate() const {
    if (data_path.has_value() == sbm.has_value())
        throw ConfigError("exactly one of data.path or data.sbm.* must be given");
    if (sbm) {
        const auto& p = sbm->params;
        if (p.classes < 1 || p.n < 2 * p.classes) throw ConfigError("data.sbm: every class needs at least 2 nodes");
        if (!(p.p_in >= 0 && p.p_in <= 1 && p.p_out >= 0 && p.p_out <= 1))
            throw ConfigError("data.sbm: probabilities must lie in [0, 1]");
        if (p.feat_dim < p.classes) throw ConfigError("data.sbm.feat_dim must be >= classes");
        if (!(p.feat_noise >= 0)) throw ConfigError("data.sbm.feat_noise must be >= 0");
    }
    model.validate();
    train.validate();
    if (depths.empty()) throw ConfigError("depth.depths must not be empty");
    for (int d : depths)
        if (d < 1) throw ConfigError("depths must be positive");
    if (gt_layers < 1) throw ConfigError("baseline.gt_layers must be positive");
}

ExperimentConfig parse_experiment_config(std::string_view text, const std::filesystem::path& base_dir) {
    ExperimentConfig c;
    std::set<std::string> seen;
    SbmSpec sbm;
    bool any_sbm = false;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const auto at = "line " + std::to_string(line_no) + ": ";
        if (eq == std::string_view::npos) throw ConfigError(at + "expected 'key = value'");
        const std::string key(trim(line.substr(0, eq)));
        const auto value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) throw ConfigError(at + "empty key or value");
        if (!seen.insert(key).second) throw ConfigError(at + "duplicate key '" + key + "'");

        try {
            const std::string_view k = key;
            if (k == "data.path") {
                std::filesystem::path p{std::string(value)};
                c.data_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
            } else if (k.starts_with("data.sbm.")) {
                any_sbm = true;
                const auto sub = k.substr(9);
                if (sub == "n")
                    sbm.params.n = parse_scalar<NodeId>(k, value);
                else if (sub == "classes")
                    sbm.params.classes = parse_scalar<int>(k, value);
                else if (sub == "p_in")
                    sbm.params.p_in = parse_scalar<double>(k, value);
                else if (sub == "p_out")
                    sbm.params.p_out = parse_scalar<double>(k, value);
                else if (sub == "feat_dim")
                    sbm.params.feat_dim = parse_scalar<int>(k, value);
                else if (sub == "feat_noise")
                    sbm.params.feat_noise = parse_scalar<double>(k, value);
                else if (sub == "seed")
                    sbm.seed = parse_scalar<Seed>(k, value);
                else
                    throw ConfigError("unknown key '" + key + "'");
            } else if (k.starts_with("model.")) {
                if (!apply_model_key(c.model, k.substr(6), value)) throw ConfigError("unknown key '" + key + "'");
            } else if (k == "train.lr") {
                c.train.lr = parse_scalar<double>(k, value);
            } else if (k == "train.weight_decay") {
                c.train.weight_decay = parse_scalar<double>(k, value);
            } else if (k == "train.max_epochs") {
                c.train.max_epochs = parse_scalar<int>(k, value);
            } else if (k == "train.patience") {
                c.train.patience = parse_scalar<int>(k, value);
            } else if (k == "train.seeds") {
                c.train.seeds = parse_seed_list(value);
            } else if (k == "train.jobs") {
                c.train.jobs = parse_scalar<int>(k, value);
            } else if (k == "output.dir") {
                c.output_dir = std::filesystem::path(std::string(value));
            } else if (k == "depth.depths") {
                c.depths = parse_int_list(value);
            } else if (k == "baseline.gt_layers") {
                c.gt_layers = parse_scalar<int>(k, value);
            } else {
                throw ConfigError("unknown key '" + key + "'");
            }
        } catch (const ConfigError& e) {
            throw ConfigError(at + e.what());
        }
    }
    if (any_sbm) c.sbm = sbm;
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError("cannot read config " + file.string());
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_experiment_config(buf.str(), file.parent_path());
    } catch (const ConfigError& e) {
        throw ConfigError(file.filename().string() + ": " + e.what());
    }
}

GraphBundle materialize_bundle(const ExperimentConfig& config) {
    GraphBundle bundle;
    if (config.data_path) {
        bundle = load_bundle(*config.data_path);
    } else {
        Rng rng(config.sbm->seed);
        bundle = sbm_generate(config.sbm->params, rng);
    }
    std::vector<Seed> missing;
    for (Seed s : config.train.seeds)
        if (!bundle.splits.contains(s)) missing.push_back(s);
    if (!missing.empty()) bundle = make_splits(std::move(bundle), missing);
    spdlog::info("dataset: {} nodes, {} edges, {} features, {} classes", bundle.num_nodes(),
                 bundle.graph.num_undirected_edges(), bundle.feature_dim(), bundle.num_classes);
    return bundle;
}

void cmd_generate(const SbmSpec& spec, std::span<const Seed> seeds, const std::filesystem::path& out,
                  std::ostream& report) {
    Rng rng(spec.seed);
    GraphBundle bundle = make_splits(sbm_generate(spec.params, rng), seeds);
    save_bundle(bundle, out);
    char homophily[32];
    std::snprintf(homophily, sizeof(homophily), "%.2f",
                  bundle.graph.num_undirected_edges() > 0 ? edge_homophily(bundle) : 0.0);
    report << "nodes " << bundle.num_nodes() << '\n'
           << "edges " << bundle.graph.num_undirected_edges() << '\n'
           << "homophily " << homophily << '\n';
}

namespace {

void emit(const std::filesystem::path& out, const std::string& title, std::span<const RunResult> rows) {
    write_results_csv(out / "results.csv", rows);
    write_curves_csv(out / "curves.csv", rows);
    write_summary_md(out / "summary.md", title, rows);
}

}  // namespace

void cmd_train(const ExperimentConfig& config, const std::filesystem::path& out) {
    const GraphBundle bundle = materialize_bundle(config);
    prepare_out_dir(out);
    RunResult result = run_multi_seed(bundle, config.model, config.train, "gnnformer", true);
    for (auto& s : result.seeds) {
        if (!s.ok) continue;
        save_checkpoint(out / "checkpoints" / ("seed_" + std::to_string(s.seed)), config.model, s.best_params);
        s.best_params.clear();
    }
    const std::vector<RunResult> rows{std::move(result)};
    emit(out, "GNNFormer " + config.model.blocks.to_string() + " (" + to_string(config.model.propagator) + ")", rows);
    spdlog::info("test accuracy {}", format_mean_std(rows.front()));
    if (rows.front().survivors == 0) throw DivergenceError("every seed diverged; see " + (out / "summary.md").string());
}

void cmd_ablate(const ExperimentConfig& config, const std::filesystem::path& out) {
    const GraphBundle bundle = materialize_bundle(config);
    prepare_out_dir(out);
    const auto rows = ablation_suite(bundle, config.model, config.train);
    emit(out, "Ablation", rows);
    for (const auto& r : rows) spdlog::info("{}: {}", r.variant, format_mean_std(r));
}

void cmd_depth(const ExperimentConfig& config, const std::filesystem::path& out) {
    const GraphBundle bundle = materialize_bundle(config);
    prepare_out_dir(out);
    const auto table = depth_sweep(bundle, config.model, config.depths, config.train);
    std::vector<RunResult> rows;
    for (const auto& row : table) rows.push_back(row.result);
    emit(out, "Depth sweep", rows);
    for (const auto& r : rows) spdlog::info("{}: {}", r.variant, format_mean_std(r));
}

void cmd_baseline_gt(const ExperimentConfig& config, const std::filesystem::path& out) {
    const GraphBundle bundle = materialize_bundle(config);
    prepare_out_dir(out);
    const auto rows = baseline_comparison(bundle, config.model, config.train, config.gt_layers);
    emit(out, "Vanilla GT vs variant GT vs GNNFormer", rows);
    for (const auto& r : rows) spdlog::info("{}: {}", r.variant, format_mean_std(r));
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    configure_logging_from_env();

    CLI::App app{"GNNFormer graph transformer for node classification"};
    app.require_subcommand(1);

    std::optional<std::string> config_path, out_flag, seeds_flag, depths_flag;
    std::optional<int> jobs_flag;
    auto add_common = [&](CLI::App* sub, bool config_required) {
        auto* opt = sub->add_option("--config", config_path, "experiment config (key = value)");
        if (config_required) opt->required();
        sub->add_option("--out", out_flag, "output directory");
        sub->add_option("--jobs", jobs_flag, "seeds trained concurrently")->check(CLI::PositiveNumber);
        sub->add_option("--seeds", seeds_flag, "comma-separated seeds");
    };

    auto* generate = app.add_subcommand("generate", "write a synthetic stochastic-block-model bundle");
    add_common(generate, false);
    std::optional<NodeId> n_flag;
    std::optional<int> classes_flag, feat_dim_flag;
    std::optional<double> p_in_flag, p_out_flag, noise_flag;
    std::optional<Seed> seed_flag;
    generate->add_option("--n", n_flag, "node count");
    generate->add_option("--classes", classes_flag, "class count");
    generate->add_option("--p-in", p_in_flag, "intra-class edge probability");
    generate->add_option("--p-out", p_out_flag, "inter-class edge probability");
    generate->add_option("--feat-dim", feat_dim_flag, "feature dimension");
    generate->add_option("--feat-noise", noise_flag, "feature noise std");
    generate->add_option("--seed", seed_flag, "generator seed");

    auto* train = app.add_subcommand("train", "multi-seed training with reports and checkpoints");
    add_common(train, true);
    auto* ablate = app.add_subcommand("ablate", "six-variant ablation table");
    add_common(ablate, true);
    auto* depth = app.add_subcommand("depth", "depth sweep with an over-smoothing control");
    add_common(depth, true);
    depth->add_option("--depths", depths_flag, "comma-separated block counts");
    auto* baseline = app.add_subcommand("baseline-gt", "vanilla GT vs variant GT vs GNNFormer");
    add_common(baseline, true);

    std::vector<std::string> args;
    for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kSuccess;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kSuccess;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kConfigError;
    }

    try {
        ExperimentConfig config;
        if (config_path) config = load_experiment_config(*config_path);
        if (seeds_flag) config.train.seeds = parse_seed_list(*seeds_flag);
        if (jobs_flag) config.train.jobs = *jobs_flag;
        if (depths_flag) config.depths = parse_int_list(*depths_flag);

        if (generate->parsed()) {
            SbmSpec spec = config.sbm.value_or(SbmSpec{});
            if (n_flag) spec.params.n = *n_flag;
            if (classes_flag) spec.params.classes = *classes_flag;
            if (p_in_flag) spec.params.p_in = *p_in_flag;
            if (p_out_flag) spec.params.p_out = *p_out_flag;
            if (feat_dim_flag) spec.params.feat_dim = *feat_dim_flag;
            if (noise_flag) spec.params.feat_noise = *noise_flag;
            if (seed_flag) spec.seed = *seed_flag;
            config.sbm = spec;
            config.data_path.reset();
            config.validate();
            cmd_generate(spec, config.train.seeds, require_out(config, out_flag), out);
            return kSuccess;
        }

        config.validate();
        const auto out_dir = require_out(config, out_flag);
        if (train->parsed())
            cmd_train(config, out_dir);
        else if (ablate->parsed())
            cmd_ablate(config, out_dir);
        else if (depth->parsed())
            cmd_depth(config, out_dir);
        else if (baseline->parsed())
            cmd_baseline_gt(config, out_dir);
        return kSuccess;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << '\n';
        return kConfigError;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
}

}  // namespace gnnformer::cli

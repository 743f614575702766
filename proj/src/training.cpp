#include "gnnformer/training.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

#include "gnnformer/ops.hpp"

namespace gnnformer {

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
    if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
    if (patience < 0 || patience > max_epochs) throw ConfigError("patience must lie in [0, max_epochs]");
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    if (jobs < 1) throw ConfigError("jobs must be at least 1");
}

Tensor cross_entropy_loss(Tape& tape, const Tensor& pred, std::span<const int> labels, std::span<const NodeId> mask) {
    if (mask.empty()) throw DegenerateError("cross-entropy over an empty mask");
    return masked_nll(tape, pred, labels, mask);
}

void adamw_step(std::span<const NamedParameter> params, std::vector<AdamMoments>& state, const AdamWOptions& o,
                long step) {
    if (step < 1) throw ContractError("adamw step counter is 1-based");
    if (state.empty()) {
        for (const auto& p : params)
            state.push_back({MatrixXd::Zero(p.tensor.rows(), p.tensor.cols()), MatrixXd::Zero(p.tensor.rows(), p.tensor.cols())});
    }
    if (state.size() != params.size()) throw DimensionError("optimizer state does not match parameter list");
    for (std::size_t k = 0; k < params.size(); ++k) {
        const auto& p = params[k];
        if (state[k].m.rows() != p.tensor.rows() || state[k].m.cols() != p.tensor.cols())
            throw DimensionError("optimizer state shape differs for " + p.name);
        if (p.tensor.has_grad() && !p.tensor.grad().allFinite())
            throw DivergenceError("non-finite gradient in parameter " + p.name);
    }
    const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor t = params[k].tensor;
        if (!t.has_grad()) continue;
        MatrixXd& value = t.mutable_value();
        if (params[k].decay && o.weight_decay != 0.0) value *= (1.0 - o.lr * o.weight_decay);
        auto& [m, v] = state[k];
        const MatrixXd& g = t.grad();
        m = o.beta1 * m + (1.0 - o.beta1) * g;
        v = o.beta2 * v + (1.0 - o.beta2) * g.cwiseAbs2();
        value.array() -= o.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + o.eps);
    }
}

void RunResult::aggregate() {
    std::vector<double> accs;
    for (const auto& s : seeds)
        if (s.ok) accs.push_back(s.test_acc);
    survivors = accs.size();
    if (accs.empty()) {
        mean = std::nan("");
        std = std::nan("");
        return;
    }
    std::tie(mean, std) = mean_and_std(accs);
}

std::pair<double, double> mean_and_std(std::span<const double> values) {
    if (values.empty()) throw DegenerateError("mean of an empty list");
    double mean = 0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    if (values.size() == 1) return {mean, 0.0};
    double ss = 0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

std::unique_ptr<NodeClassifier> make_model(const GraphBundle& bundle, const ModelSpec& spec, Rng& init_rng) {
    if (const auto* c = std::get_if<ModelConfig>(&spec)) return std::make_unique<GnnFormerModel>(bundle, *c, init_rng);
    return std::make_unique<VanillaGtModel>(bundle, std::get<VanillaGtConfig>(spec), init_rng);
}

double accuracy(const MatrixXd& probs, std::span<const int> labels, std::span<const NodeId> rows) {
    if (rows.empty()) return 0.0;
    std::size_t correct = 0;
    for (NodeId i : rows) {
        Eigen::Index arg = 0;
        probs.row(i).maxCoeff(&arg);
        if (arg == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(rows.size());
}

SeedResult train_one(const GraphBundle& bundle, Seed seed, const ModelSpec& spec, const TrainConfig& config,
                     bool keep_best_params) {
    config.validate();
    const Split& split = bundle.split(seed);
    Rng rng(seed);
    const auto model = make_model(bundle, spec, rng);
    const auto params = model->parameters();

    SeedResult result;
    result.seed = seed;
    std::vector<AdamMoments> state;
    const AdamWOptions options{config.lr, config.weight_decay};
    double best_val = -1.0;
    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        for (const auto& p : params) {
            Tensor t = p.tensor;
            t.zero_grad();
        }
        Tape tape;
        const Tensor pred = model->forward(tape, true, rng);
        const Tensor loss = cross_entropy_loss(tape, pred, bundle.labels, split.train);
        if (!std::isfinite(loss.item()))
            throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch));
        tape.backward(loss);
        tape.reset();
        adamw_step(params, state, options, epoch + 1);

        Tape eval(false);
        const MatrixXd probs = model->forward(eval, false, rng).value();
        EpochStats stats{epoch, loss.item(), accuracy(probs, bundle.labels, split.train),
                         accuracy(probs, bundle.labels, split.val), accuracy(probs, bundle.labels, split.test)};
        result.curve.push_back(stats);
        result.epochs_run = epoch + 1;
        if (stats.val_acc > best_val) {
            best_val = stats.val_acc;
            result.best_epoch = epoch;
            result.val_acc = stats.val_acc;
            result.test_acc = stats.test_acc;
            if (keep_best_params) {
                result.best_params.clear();
                for (const auto& p : params) result.best_params.emplace_back(p.name, p.tensor.value());
            }
        }
        spdlog::debug("seed {} epoch {} loss {:.6f} train {:.4f} val {:.4f} test {:.4f}", seed, epoch, stats.train_loss,
                      stats.train_acc, stats.val_acc, stats.test_acc);
        if (epoch - result.best_epoch >= config.patience) break;
    }
    result.ok = true;
    return result;
}

RunResult run_multi_seed(const GraphBundle& bundle, const ModelSpec& spec, const TrainConfig& config,
                         std::string variant, bool keep_best_params) {
    config.validate();
    RunResult run;
    run.variant = std::move(variant);
    run.seeds.resize(config.seeds.size());

    auto work = [&](std::size_t k) {
        const Seed seed = config.seeds[k];
        try {
            run.seeds[k] = train_one(bundle, seed, spec, config, keep_best_params);
            spdlog::info("{} seed {}: test {:.4f} (best epoch {}, {} epochs)", run.variant, seed, run.seeds[k].test_acc,
                         run.seeds[k].best_epoch, run.seeds[k].epochs_run);
        } catch (const DivergenceError& e) {
            run.seeds[k] = SeedResult{};
            run.seeds[k].seed = seed;
            run.seeds[k].error = e.what();
            spdlog::warn("{} seed {} diverged: {}", run.variant, seed, e.what());
        }
    };

    const std::size_t jobs = std::min<std::size_t>(static_cast<std::size_t>(config.jobs), config.seeds.size());
    if (jobs <= 1) {
        for (std::size_t k = 0; k < config.seeds.size(); ++k) work(k);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < jobs; ++t)
            pool.emplace_back([&] {
                for (std::size_t k = next++; k < config.seeds.size(); k = next++) {
                    try {
                        work(k);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        for (auto& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    }
    run.aggregate();
    if (run.survivors < run.seeds.size())
        spdlog::warn("{}: aggregated over {} of {} seeds", run.variant, run.survivors, run.seeds.size());
    return run;
}

std::vector<std::pair<std::string, ModelConfig>> ablation_variants(const ModelConfig& base) {
    std::vector<std::pair<std::string, ModelConfig>> out;
    out.emplace_back("best", base);
    auto no_ffn = base;
    no_ffn.ffn = FfnVariant::None;
    out.emplace_back("w/o FFN", no_ffn);
    auto geglu = base;
    geglu.ffn = FfnVariant::GEGLU;
    out.emplace_back("FFN(GEGLU)", geglu);
    auto reglu = base;
    reglu.ffn = FfnVariant::ReGLU;
    out.emplace_back("FFN(ReGLU)", reglu);
    auto no_res = base;
    no_res.residual = ResidualMode::None;
    out.emplace_back("w/o AIRes", no_res);
    auto plain = base;
    plain.residual = ResidualMode::Plain;
    out.emplace_back("AIRes-Res", plain);
    return out;
}

std::vector<RunResult> ablation_suite(const GraphBundle& bundle, const ModelConfig& base, const TrainConfig& config) {
    std::vector<RunResult> rows;
    for (const auto& [name, cfg] : ablation_variants(base)) rows.push_back(run_multi_seed(bundle, cfg, config, name));
    return rows;
}

ModelConfig depth_variant(const ModelConfig& base, int depth) {
    if (depth < 1) throw ConfigError("depth must be at least 1");
    auto cfg = base;
    cfg.blocks = OperatorSpec::repeat(base.blocks.blocks.front(), static_cast<std::size_t>(depth));
    cfg.relax_depth_bound = true;
    return cfg;
}

ModelConfig oversmoothing_control(const ModelConfig& base, int depth) {
    if (depth < 1) throw ConfigError("depth must be at least 1");
    auto cfg = base;
    cfg.blocks = OperatorSpec::repeat({Slot::P, Slot::T}, static_cast<std::size_t>(depth));
    cfg.propagator = PropagatorKind::GcnLike;
    cfg.residual = ResidualMode::None;
    cfg.ffn = FfnVariant::None;
    cfg.topology_fusion = false;
    cfg.relax_depth_bound = true;
    return cfg;
}

std::vector<DepthRow> depth_sweep(const GraphBundle& bundle, const ModelConfig& base, std::span<const int> depths,
                                  const TrainConfig& config) {
    std::vector<DepthRow> rows;
    for (int depth : depths) {
        rows.push_back({"gnnformer", depth,
                        run_multi_seed(bundle, depth_variant(base, depth), config,
                                       "gnnformer depth " + std::to_string(depth))});
        rows.push_back({"gcn-control", depth,
                        run_multi_seed(bundle, oversmoothing_control(base, depth), config,
                                       "gcn-control depth " + std::to_string(depth))});
    }
    return rows;
}

std::vector<RunResult> baseline_comparison(const GraphBundle& bundle, const ModelConfig& gnnformer,
                                           const TrainConfig& config, int gt_layers) {
    std::vector<RunResult> rows;
    auto guarded = [&](const std::string& name, const ModelSpec& spec) {
        try {
            rows.push_back(run_multi_seed(bundle, spec, config, name));
        } catch (const CapacityError& e) {
            RunResult failed;
            failed.variant = name;
            for (Seed s : config.seeds) {
                SeedResult r;
                r.seed = s;
                r.error = e.what();
                failed.seeds.push_back(r);
            }
            failed.aggregate();
            spdlog::warn("{}: {}", name, e.what());
            rows.push_back(std::move(failed));
        }
    };
    VanillaGtConfig vanilla{gnnformer.hidden, gt_layers, gnnformer.heads, gnnformer.dropout,
                            PropagatorKind::DenseAttention};
    guarded("vanilla GT", vanilla);
    auto variant = vanilla;
    variant.attention = PropagatorKind::GatLike;
    guarded("variant GT", variant);
    guarded("GNNFormer", gnnformer);
    return rows;
}

namespace {

std::string fixed(double v, int digits = 6) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::ofstream open_report(const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + file.string());
    return out;
}

}  // namespace

std::string format_mean_std(const RunResult& r) {
    if (r.survivors == 0) return "failed";
    return fixed(100.0 * r.mean, 2) + " ± " + fixed(100.0 * r.std, 2);
}

void write_results_csv(const std::filesystem::path& file, std::span<const RunResult> rows) {
    auto out = open_report(file);
    out << "variant,seed,status,test_acc,val_acc,best_epoch,epochs_run\n";
    for (const auto& r : rows)
        for (const auto& s : r.seeds)
            out << csv_field(r.variant) << ',' << s.seed << ',' << (s.ok ? "ok" : "failed") << ','
                << (s.ok ? fixed(s.test_acc) : "") << ',' << (s.ok ? fixed(s.val_acc) : "") << ','
                << (s.ok ? std::to_string(s.best_epoch) : "") << ',' << s.epochs_run << '\n';
}

void write_curves_csv(const std::filesystem::path& file, std::span<const RunResult> rows) {
    auto out = open_report(file);
    out << "variant,seed,epoch,train_loss,train_acc,val_acc,test_acc\n";
    for (const auto& r : rows)
        for (const auto& s : r.seeds)
            for (const auto& e : s.curve)
                out << csv_field(r.variant) << ',' << s.seed << ',' << e.epoch << ',' << fixed(e.train_loss, 8) << ','
                    << fixed(e.train_acc) << ',' << fixed(e.val_acc) << ',' << fixed(e.test_acc) << '\n';
}

void write_summary_md(const std::filesystem::path& file, const std::string& title, std::span<const RunResult> rows) {
    auto out = open_report(file);
    out << "# " << title << "\n\n";
    out << "| Variant | Test accuracy (%) | Seeds |\n|---|---|---|\n";
    for (const auto& r : rows) {
        out << "| " << r.variant << " | " << format_mean_std(r) << " | " << r.survivors << "/" << r.seeds.size()
            << " |\n";
    }
    bool any_error = false;
    for (const auto& r : rows)
        for (const auto& s : r.seeds)
            if (!s.ok && !s.error.empty()) {
                if (!any_error) out << "\n## Failures\n\n";
                any_error = true;
                out << "- " << r.variant << ", seed " << s.seed << ": " << s.error << '\n';
            }
}

}  // namespace gnnformer

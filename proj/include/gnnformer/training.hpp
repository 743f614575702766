#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gnnformer/bundle.hpp"
#include "gnnformer/model.hpp"

namespace gnnformer {

struct TrainConfig {
    double lr = 5e-3;
    double weight_decay = 5e-4;
    int max_epochs = 500;
    int patience = 100;
    std::vector<Seed> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    /// Seeds trained concurrently.
    int jobs = 1;

    void validate() const;
};

/// Categorical cross-entropy summed over `mask`: -trace(Y_mᵀ log Ŷ_m).
Tensor cross_entropy_loss(Tape& tape, const Tensor& pred, std::span<const int> labels, std::span<const NodeId> mask);

struct AdamWOptions {
    double lr = 5e-3;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamMoments {
    MatrixXd m;
    MatrixXd v;
};

/// One AdamW update of every parameter. `step` is 1-based. Decay is
/// decoupled and skipped for parameters with decay = false. Parameters
/// without a gradient are left untouched.
void adamw_step(std::span<const NamedParameter> params, std::vector<AdamMoments>& state, const AdamWOptions& options,
                long step);

struct EpochStats {
    int epoch = 0;
    double train_loss = 0;
    double train_acc = 0;
    double val_acc = 0;
    double test_acc = 0;
};

struct SeedResult {
    Seed seed = 0;
    bool ok = false;
    std::string error;
    double test_acc = 0;
    double val_acc = 0;
    int best_epoch = -1;
    int epochs_run = 0;
    std::vector<EpochStats> curve;
    /// Parameter values at the best-validation epoch (filled on request).
    std::vector<std::pair<std::string, MatrixXd>> best_params;
};

struct RunResult {
    std::string variant;
    std::vector<SeedResult> seeds;
    double mean = 0;
    double std = 0;
    std::size_t survivors = 0;

    /// Recomputes mean and sample std over successful seeds.
    void aggregate();
};

/// Mean and sample standard deviation (n-1). One value gives std 0.
std::pair<double, double> mean_and_std(std::span<const double> values);

using ModelSpec = std::variant<ModelConfig, VanillaGtConfig>;

std::unique_ptr<NodeClassifier> make_model(const GraphBundle& bundle, const ModelSpec& spec, Rng& init_rng);

double accuracy(const MatrixXd& probs, std::span<const int> labels, std::span<const NodeId> rows);

/// Full-batch training on the seed's train split with early stopping on
/// validation accuracy (ties keep the earlier epoch). Throws DivergenceError
/// on a non-finite loss or gradient.
SeedResult train_one(const GraphBundle& bundle, Seed seed, const ModelSpec& spec, const TrainConfig& config,
                     bool keep_best_params = false);

/// train_one over every configured seed; diverged seeds are recorded and
/// excluded from the aggregate.
RunResult run_multi_seed(const GraphBundle& bundle, const ModelSpec& spec, const TrainConfig& config,
                         std::string variant = "gnnformer", bool keep_best_params = false);

/// The six ablation variants, in table order.
std::vector<std::pair<std::string, ModelConfig>> ablation_variants(const ModelConfig& base);
std::vector<RunResult> ablation_suite(const GraphBundle& bundle, const ModelConfig& base, const TrainConfig& config);

struct DepthRow {
    std::string series;
    int depth = 0;
    RunResult result;
};

/// GNNFormer at each depth (base block pair repeated) plus the residual-free
/// GCN-like control stack at the same depths.
std::vector<DepthRow> depth_sweep(const GraphBundle& bundle, const ModelConfig& base, std::span<const int> depths,
                                  const TrainConfig& config);
ModelConfig depth_variant(const ModelConfig& base, int depth);
ModelConfig oversmoothing_control(const ModelConfig& base, int depth);

/// vanilla GT, variant GT (graph attention in place of self-attention), GNNFormer.
/// A capacity error is recorded in the row and the suite continues.
std::vector<RunResult> baseline_comparison(const GraphBundle& bundle, const ModelConfig& gnnformer,
                                           const TrainConfig& config, int gt_layers = 1);

void write_results_csv(const std::filesystem::path& file, std::span<const RunResult> rows);
void write_curves_csv(const std::filesystem::path& file, std::span<const RunResult> rows);
void write_summary_md(const std::filesystem::path& file, const std::string& title, std::span<const RunResult> rows);
std::string format_mean_std(const RunResult& r);

}  // namespace gnnformer

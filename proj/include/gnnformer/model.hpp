#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "gnnformer/bundle.hpp"
#include "gnnformer/message_passing.hpp"

namespace gnnformer {

enum class FfnVariant { SwishGLU, GEGLU, ReGLU, None };
enum class ResidualMode { AdaptiveInitial, Plain, None };

std::string to_string(FfnVariant v);
std::string to_string(ResidualMode r);
FfnVariant parse_ffn(std::string_view text);
ResidualMode parse_residual(std::string_view text);

constexpr double kLayerNormEps = 1e-5;
/// Dense attention materializes n x n scores; beyond this it is refused.
constexpr NodeId kDenseAttentionNodeLimit = 5000;

struct ModelConfig {
    int hidden = 64;
    OperatorSpec blocks = OperatorSpec::parse("TP+TP");
    PropagatorKind propagator = PropagatorKind::GcnLike;
    FfnVariant ffn = FfnVariant::SwishGLU;
    ResidualMode residual = ResidualMode::AdaptiveInitial;
    double dropout = 0.5;
    int heads = 4;
    /// A*W4 topology mixing before the head; disabled only for the plain GCN control stack.
    bool topology_fusion = true;
    /// Lifts the 3-block ceiling; set by depth diagnostics, never read from config files.
    bool relax_depth_bound = false;

    void validate() const;
    /// `model.<key> = <value>` lines, stable order.
    std::vector<std::pair<std::string, std::string>> to_entries() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Applies one `model.` key (without the prefix). Returns false for unknown keys.
bool apply_model_key(ModelConfig& config, std::string_view key, std::string_view value);

struct LayerNormParams {
    Tensor gain;
    Tensor bias;

    static LayerNormParams identity(int width);
};

struct BlockParams {
    std::array<SlotParams, 2> slots;
    Tensor alpha_logit;
    LayerNormParams norm;
};

struct FfnParams {
    Tensor w1, w2, w3;
};

/// Every learnable tensor of one GNNFormer. Mixing coefficients are stored as
/// logits and read through a sigmoid.
struct ModelParams {
    Tensor w0;
    std::vector<BlockParams> blocks;
    std::optional<FfnParams> ffn;
    Tensor beta_logit;
    LayerNormParams ffn_norm;
    Tensor w4;
    Tensor gamma_logit;
    Tensor w5;

    static ModelParams init(const ModelConfig& config, Eigen::Index in_dim, NodeId num_nodes, int num_classes, Rng& rng);
    /// Stable, unique names. Logits and layer-norm affines are exempt from weight decay.
    std::vector<NamedParameter> named() const;
};

Tensor initial_embed(Tape& tape, const Tensor& x, const Tensor& w0);

Tensor pt_block_forward(Tape& tape, const Tensor& h_prev, const Tensor& h0, const BlockParams& block,
                        const SlotPair& pair, const GraphContext& ctx, const ModelConfig& config, bool training,
                        Rng& rng);

/// (act(h W1) ⊙ h W2) W3 with act = Swish / GELU / ReLU; dropout after the gate product.
Tensor ffn_forward(Tape& tape, const Tensor& h, FfnVariant variant, const FfnParams& params, double dropout_rate,
                   bool training, Rng& rng);

/// LN(sigmoid(beta) * anchor + (1 - sigmoid(beta)) * z).
Tensor ffn_residual(Tape& tape, const Tensor& z, const Tensor& anchor, const Tensor& beta_logit,
                    const LayerNormParams& norm);

/// sigmoid(gamma) * z + (1 - sigmoid(gamma)) * A W4 with A unweighted.
Tensor topology_fuse(Tape& tape, const Tensor& z, const CsrGraph& adjacency, const Tensor& w4,
                     const Tensor& gamma_logit);

/// Row softmax of z W5.
Tensor predict(Tape& tape, const Tensor& z, const Tensor& w5);

/// Full forward pass, returns n x C class probabilities.
Tensor forward(Tape& tape, const Tensor& x, const GraphContext& ctx, const ModelConfig& config,
               const ModelParams& params, bool training, Rng& rng);

struct VanillaGtConfig {
    int hidden = 64;
    int layers = 1;
    int heads = 4;
    double dropout = 0.5;
    /// DenseAttention for the vanilla graph transformer, GatLike for the variant.
    PropagatorKind attention = PropagatorKind::DenseAttention;

    void validate() const;
};

struct GtLayerParams {
    SlotParams attention;
    LayerNormParams norm1;
    Tensor ffn_in, ffn_out;
    LayerNormParams norm2;
};

struct VanillaGtParams {
    Tensor w_in;
    std::vector<GtLayerParams> layers;
    Tensor w_out;

    static VanillaGtParams init(const VanillaGtConfig& config, Eigen::Index in_dim, int num_classes, Rng& rng);
    std::vector<NamedParameter> named() const;
};

/// Linear -> [attention + residual + LN -> FFN + residual + LN] x layers -> softmax head.
Tensor vanilla_gt_forward(Tape& tape, const Tensor& x, const GraphContext& ctx, const VanillaGtConfig& config,
                          const VanillaGtParams& params, bool training, Rng& rng);

/// Trainable model bound to one bundle.
class NodeClassifier {
public:
    virtual ~NodeClassifier() = default;
    virtual Tensor forward(Tape& tape, bool training, Rng& rng) const = 0;
    virtual std::vector<NamedParameter> parameters() const = 0;
};

class GnnFormerModel final : public NodeClassifier {
public:
    GnnFormerModel(const GraphBundle& bundle, ModelConfig config, Rng& init_rng);
    Tensor forward(Tape& tape, bool training, Rng& rng) const override;
    std::vector<NamedParameter> parameters() const override { return params_.named(); }
    const ModelConfig& config() const { return config_; }
    ModelParams& params() { return params_; }

private:
    ModelConfig config_;
    std::shared_ptr<const GraphContext> ctx_;
    Tensor x_;
    ModelParams params_;
};

class VanillaGtModel final : public NodeClassifier {
public:
    VanillaGtModel(const GraphBundle& bundle, VanillaGtConfig config, Rng& init_rng);
    Tensor forward(Tape& tape, bool training, Rng& rng) const override;
    std::vector<NamedParameter> parameters() const override { return params_.named(); }

private:
    VanillaGtConfig config_;
    std::shared_ptr<const GraphContext> ctx_;
    Tensor x_;
    VanillaGtParams params_;
};

/// Writes `config` (model.* entries) and one matrix file per named parameter.
void save_checkpoint(const std::filesystem::path& dir, const ModelConfig& config,
                     const std::vector<std::pair<std::string, MatrixXd>>& params);

struct Checkpoint {
    ModelConfig config;
    std::map<std::string, MatrixXd> params;
};
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Copies values into matching parameters; throws if any name or shape is missing.
void assign_parameters(const std::vector<NamedParameter>& target, const std::map<std::string, MatrixXd>& values);

}  // namespace gnnformer

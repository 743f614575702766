#include "gnnformer/model.hpp"

#include <charconv>
#include <fstream>

#include "gnnformer/ops.hpp"

namespace gnnformer {

std::string to_string(FfnVariant v) {
    switch (v) {
        case FfnVariant::SwishGLU: return "swishglu";
        case FfnVariant::GEGLU: return "geglu";
        case FfnVariant::ReGLU: return "reglu";
        case FfnVariant::None: return "none";
    }
    return "?";
}

std::string to_string(ResidualMode r) {
    switch (r) {
        case ResidualMode::AdaptiveInitial: return "adaptive_initial";
        case ResidualMode::Plain: return "plain";
        case ResidualMode::None: return "none";
    }
    return "?";
}

FfnVariant parse_ffn(std::string_view text) {
    if (text == "swishglu") return FfnVariant::SwishGLU;
    if (text == "geglu") return FfnVariant::GEGLU;
    if (text == "reglu") return FfnVariant::ReGLU;
    if (text == "none") return FfnVariant::None;
    throw ConfigError("unknown ffn variant '" + std::string(text) + "' (expected swishglu, geglu, reglu or none)");
}

ResidualMode parse_residual(std::string_view text) {
    if (text == "adaptive_initial") return ResidualMode::AdaptiveInitial;
    if (text == "plain") return ResidualMode::Plain;
    if (text == "none") return ResidualMode::None;
    throw ConfigError("unknown residual mode '" + std::string(text) + "' (expected adaptive_initial, plain or none)");
}

namespace {

template <typename T>
T parse_value(std::string_view key, std::string_view text) {
    T value{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw ConfigError("model." + std::string(key) + ": cannot parse '" + std::string(text) + "'");
    return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
    if (text == "true") return true;
    if (text == "false") return false;
    throw ConfigError("model." + std::string(key) + ": expected true or false");
}

void check_dropout(double rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

}  // namespace

void ModelConfig::validate() const {
    if (hidden <= 0) throw ConfigError("hidden width must be positive");
    blocks.validate(relax_depth_bound);
    if (heads < 1 || hidden % heads != 0)
        throw ConfigError("heads (" + std::to_string(heads) + ") must divide hidden (" + std::to_string(hidden) + ")");
    if (propagator == PropagatorKind::DenseAttention)
        throw ConfigError("dense attention is only available in the vanilla graph-transformer baseline");
    check_dropout(dropout);
}

std::vector<std::pair<std::string, std::string>> ModelConfig::to_entries() const {
    return {{"model.hidden", std::to_string(hidden)},
            {"model.blocks", blocks.to_string()},
            {"model.propagator", to_string(propagator)},
            {"model.ffn", to_string(ffn)},
            {"model.residual", to_string(residual)},
            {"model.dropout", format_real(dropout)},
            {"model.heads", std::to_string(heads)},
            {"model.topology_fusion", topology_fusion ? "true" : "false"}};
}

bool apply_model_key(ModelConfig& c, std::string_view key, std::string_view value) {
    if (key == "hidden")
        c.hidden = parse_value<int>(key, value);
    else if (key == "blocks")
        c.blocks = OperatorSpec::parse(value);
    else if (key == "propagator")
        c.propagator = parse_propagator(value);
    else if (key == "ffn")
        c.ffn = parse_ffn(value);
    else if (key == "residual")
        c.residual = parse_residual(value);
    else if (key == "dropout")
        c.dropout = parse_value<double>(key, value);
    else if (key == "heads")
        c.heads = parse_value<int>(key, value);
    else if (key == "topology_fusion")
        c.topology_fusion = parse_bool(key, value);
    else
        return false;
    return true;
}

LayerNormParams LayerNormParams::identity(int width) {
    return {Tensor::parameter(MatrixXd::Ones(1, width)), Tensor::parameter(MatrixXd::Zero(1, width))};
}

ModelParams ModelParams::init(const ModelConfig& config, Eigen::Index in_dim, NodeId num_nodes, int num_classes,
                              Rng& rng) {
    config.validate();
    const int d = config.hidden;
    ModelParams p;
    p.w0 = Tensor::parameter(glorot(in_dim, d, rng));
    for (const auto& pair : config.blocks.blocks) {
        BlockParams block;
        for (std::size_t k = 0; k < 2; ++k) block.slots[k] = init_slot(pair[k], config.propagator, d, config.heads, rng);
        block.alpha_logit = Tensor::scalar(0.0, true);
        block.norm = LayerNormParams::identity(d);
        p.blocks.push_back(std::move(block));
    }
    if (config.ffn != FfnVariant::None) {
        p.ffn = FfnParams{Tensor::parameter(glorot(d, d, rng)), Tensor::parameter(glorot(d, d, rng)),
                          Tensor::parameter(glorot(d, d, rng))};
        p.beta_logit = Tensor::scalar(0.0, true);
        p.ffn_norm = LayerNormParams::identity(d);
    }
    if (config.topology_fusion) {
        p.w4 = Tensor::parameter(glorot(num_nodes, d, rng));
        p.gamma_logit = Tensor::scalar(0.0, true);
    }
    p.w5 = Tensor::parameter(glorot(d, num_classes, rng));
    return p;
}

std::vector<NamedParameter> ModelParams::named() const {
    std::vector<NamedParameter> out;
    out.push_back({"w0", w0, true});
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const auto prefix = "block" + std::to_string(b);
        for (std::size_t k = 0; k < 2; ++k)
            append_parameters(blocks[b].slots[k], prefix + ".slot" + std::to_string(k), out);
        out.push_back({prefix + ".alpha_logit", blocks[b].alpha_logit, false});
        out.push_back({prefix + ".ln_gain", blocks[b].norm.gain, false});
        out.push_back({prefix + ".ln_bias", blocks[b].norm.bias, false});
    }
    if (ffn) {
        out.push_back({"ffn.w1", ffn->w1, true});
        out.push_back({"ffn.w2", ffn->w2, true});
        out.push_back({"ffn.w3", ffn->w3, true});
        out.push_back({"ffn.beta_logit", beta_logit, false});
        out.push_back({"ffn.ln_gain", ffn_norm.gain, false});
        out.push_back({"ffn.ln_bias", ffn_norm.bias, false});
    }
    if (w4.defined()) {
        out.push_back({"w4", w4, true});
        out.push_back({"gamma_logit", gamma_logit, false});
    }
    out.push_back({"w5", w5, true});
    return out;
}

Tensor initial_embed(Tape& tape, const Tensor& x, const Tensor& w0) { return relu(tape, matmul(tape, x, w0)); }

Tensor pt_block_forward(Tape& tape, const Tensor& h_prev, const Tensor& h0, const BlockParams& block,
                        const SlotPair& pair, const GraphContext& ctx, const ModelConfig& config, bool training,
                        Rng& rng) {
    const Tensor f =
        apply_operator_pair(tape, pair, h_prev, ctx, config.propagator, block.slots, config.dropout, training, rng);
    Tensor mixed = f;
    if (config.residual == ResidualMode::AdaptiveInitial)
        mixed = sigmoid_mix(tape, block.alpha_logit, h0, f);
    else if (config.residual == ResidualMode::Plain)
        mixed = sigmoid_mix(tape, block.alpha_logit, h_prev, f);
    return layer_norm(tape, mixed, block.norm.gain, block.norm.bias, kLayerNormEps);
}

Tensor ffn_forward(Tape& tape, const Tensor& h, FfnVariant variant, const FfnParams& p, double dropout_rate,
                   bool training, Rng& rng) {
    const Tensor pre = matmul(tape, h, p.w1);
    Tensor act;
    switch (variant) {
        case FfnVariant::SwishGLU: act = swish(tape, pre); break;
        case FfnVariant::GEGLU: act = gelu(tape, pre); break;
        case FfnVariant::ReGLU: act = relu(tape, pre); break;
        case FfnVariant::None: throw ConfigError("ffn_forward called with ffn = none");
    }
    const Tensor gated = dropout(tape, mul(tape, act, matmul(tape, h, p.w2)), dropout_rate, training, rng);
    return matmul(tape, gated, p.w3);
}

Tensor ffn_residual(Tape& tape, const Tensor& z, const Tensor& anchor, const Tensor& beta_logit,
                    const LayerNormParams& norm) {
    return layer_norm(tape, sigmoid_mix(tape, beta_logit, anchor, z), norm.gain, norm.bias, kLayerNormEps);
}

Tensor topology_fuse(Tape& tape, const Tensor& z, const CsrGraph& adjacency, const Tensor& w4,
                     const Tensor& gamma_logit) {
    if (w4.rows() != adjacency.num_nodes())
        throw DimensionError("topology_fuse: W4 has " + std::to_string(w4.rows()) + " rows for " +
                             std::to_string(adjacency.num_nodes()) + " nodes");
    if (adjacency.weighted()) throw ContractError("topology_fuse expects the unweighted adjacency");
    return sigmoid_mix(tape, gamma_logit, z, spmm(tape, adjacency, w4));
}

Tensor predict(Tape& tape, const Tensor& z, const Tensor& w5) { return row_softmax(tape, matmul(tape, z, w5)); }

Tensor forward(Tape& tape, const Tensor& x, const GraphContext& ctx, const ModelConfig& config,
               const ModelParams& params, bool training, Rng& rng) {
    if (params.blocks.size() != config.blocks.blocks.size())
        throw ConfigError("parameter blocks do not match the configured block count");
    if (x.rows() != ctx.adjacency.num_nodes())
        throw DimensionError("features have " + std::to_string(x.rows()) + " rows for " +
                             std::to_string(ctx.adjacency.num_nodes()) + " nodes");
    const Tensor h0 = dropout(tape, initial_embed(tape, x, params.w0), config.dropout, training, rng);
    Tensor h = h0;
    for (std::size_t b = 0; b < params.blocks.size(); ++b)
        h = pt_block_forward(tape, h, h0, params.blocks[b], config.blocks.blocks[b], ctx, config, training, rng);

    Tensor z = h;
    if (config.ffn != FfnVariant::None) {
        if (!params.ffn) throw ConfigError("ffn parameters missing");
        const Tensor ffn_out = ffn_forward(tape, h, config.ffn, *params.ffn, config.dropout, training, rng);
        switch (config.residual) {
            case ResidualMode::AdaptiveInitial:
                z = ffn_residual(tape, ffn_out, h0, params.beta_logit, params.ffn_norm);
                break;
            case ResidualMode::Plain: z = ffn_residual(tape, ffn_out, h, params.beta_logit, params.ffn_norm); break;
            case ResidualMode::None:
                z = layer_norm(tape, ffn_out, params.ffn_norm.gain, params.ffn_norm.bias, kLayerNormEps);
                break;
        }
    }
    if (config.topology_fusion) z = topology_fuse(tape, z, ctx.adjacency, params.w4, params.gamma_logit);
    return predict(tape, z, params.w5);
}

void VanillaGtConfig::validate() const {
    if (hidden <= 0) throw ConfigError("hidden width must be positive");
    if (layers < 1) throw ConfigError("vanilla GT needs at least one layer");
    if (heads < 1 || hidden % heads != 0) throw ConfigError("heads must divide hidden");
    if (attention != PropagatorKind::DenseAttention && attention != PropagatorKind::GatLike)
        throw ConfigError("vanilla GT attention must be dense or gat");
    check_dropout(dropout);
}

VanillaGtParams VanillaGtParams::init(const VanillaGtConfig& config, Eigen::Index in_dim, int num_classes, Rng& rng) {
    config.validate();
    const int d = config.hidden;
    VanillaGtParams p;
    p.w_in = Tensor::parameter(glorot(in_dim, d, rng));
    for (int l = 0; l < config.layers; ++l) {
        GtLayerParams layer;
        layer.attention = init_propagator(config.attention, d, config.heads, rng);
        layer.norm1 = LayerNormParams::identity(d);
        layer.ffn_in = Tensor::parameter(glorot(d, d, rng));
        layer.ffn_out = Tensor::parameter(glorot(d, d, rng));
        layer.norm2 = LayerNormParams::identity(d);
        p.layers.push_back(std::move(layer));
    }
    p.w_out = Tensor::parameter(glorot(d, num_classes, rng));
    return p;
}

std::vector<NamedParameter> VanillaGtParams::named() const {
    std::vector<NamedParameter> out;
    out.push_back({"w_in", w_in, true});
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto prefix = "layer" + std::to_string(l);
        append_parameters(layers[l].attention, prefix + ".attention", out);
        out.push_back({prefix + ".ln1_gain", layers[l].norm1.gain, false});
        out.push_back({prefix + ".ln1_bias", layers[l].norm1.bias, false});
        out.push_back({prefix + ".ffn_in", layers[l].ffn_in, true});
        out.push_back({prefix + ".ffn_out", layers[l].ffn_out, true});
        out.push_back({prefix + ".ln2_gain", layers[l].norm2.gain, false});
        out.push_back({prefix + ".ln2_bias", layers[l].norm2.bias, false});
    }
    out.push_back({"w_out", w_out, true});
    return out;
}

Tensor vanilla_gt_forward(Tape& tape, const Tensor& x, const GraphContext& ctx, const VanillaGtConfig& config,
                          const VanillaGtParams& params, bool training, Rng& rng) {
    const NodeId n = ctx.adjacency.num_nodes();
    if (config.attention == PropagatorKind::DenseAttention && n > kDenseAttentionNodeLimit)
        throw CapacityError("dense self-attention over " + std::to_string(n) + " nodes exceeds the " +
                            std::to_string(kDenseAttentionNodeLimit) + "-node limit");
    Tensor h = dropout(tape, relu(tape, matmul(tape, x, params.w_in)), config.dropout, training, rng);
    for (const auto& layer : params.layers) {
        const Tensor attended = propagate(tape, config.attention, h, ctx, layer.attention, config.dropout, training, rng);
        h = layer_norm(tape, add(tape, h, dropout(tape, attended, config.dropout, training, rng)), layer.norm1.gain,
                       layer.norm1.bias, kLayerNormEps);
        const Tensor hidden = dropout(tape, relu(tape, matmul(tape, h, layer.ffn_in)), config.dropout, training, rng);
        h = layer_norm(tape, add(tape, h, matmul(tape, hidden, layer.ffn_out)), layer.norm2.gain, layer.norm2.bias,
                       kLayerNormEps);
    }
    return predict(tape, h, params.w_out);
}

GnnFormerModel::GnnFormerModel(const GraphBundle& bundle, ModelConfig config, Rng& init_rng)
    : config_(std::move(config)),
      ctx_(GraphContext::build(bundle.graph)),
      x_(Tensor::constant(bundle.features)),
      params_(ModelParams::init(config_, bundle.feature_dim(), bundle.num_nodes(), bundle.num_classes, init_rng)) {}

Tensor GnnFormerModel::forward(Tape& tape, bool training, Rng& rng) const {
    return gnnformer::forward(tape, x_, *ctx_, config_, params_, training, rng);
}

VanillaGtModel::VanillaGtModel(const GraphBundle& bundle, VanillaGtConfig config, Rng& init_rng)
    : config_(std::move(config)), ctx_(GraphContext::build(bundle.graph)), x_(Tensor::constant(bundle.features)) {
    if (config_.attention == PropagatorKind::DenseAttention && bundle.num_nodes() > kDenseAttentionNodeLimit)
        throw CapacityError("dense self-attention over " + std::to_string(bundle.num_nodes()) +
                            " nodes exceeds the " + std::to_string(kDenseAttentionNodeLimit) + "-node limit");
    params_ = VanillaGtParams::init(config_, bundle.feature_dim(), bundle.num_classes, init_rng);
}

Tensor VanillaGtModel::forward(Tape& tape, bool training, Rng& rng) const {
    return vanilla_gt_forward(tape, x_, *ctx_, config_, params_, training, rng);
}

void save_checkpoint(const std::filesystem::path& dir, const ModelConfig& config,
                     const std::vector<std::pair<std::string, MatrixXd>>& params) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    std::ofstream out(dir / "config", std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "config").string());
    for (const auto& [key, value] : config.to_entries()) out << key << " = " << value << '\n';
    for (const auto& [name, value] : params) write_matrix(dir / name, value);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream in(dir / "config");
    if (!in) throw ParseError("checkpoint config not found in " + dir.string());
    Checkpoint cp;
    std::string line;
    std::size_t ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        const auto eq = line.find('=');
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (eq == std::string::npos) throw ParseError("config:" + std::to_string(ln) + ": expected key = value");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        constexpr std::string_view prefix = "model.";
        if (key.rfind(prefix, 0) != 0 || !apply_model_key(cp.config, std::string_view(key).substr(prefix.size()), value))
            throw ParseError("config:" + std::to_string(ln) + ": unknown key '" + key + "'");
    }
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name == "config" || !entry.is_regular_file()) continue;
        cp.params.emplace(name, read_matrix(entry.path()));
    }
    return cp;
}

void assign_parameters(const std::vector<NamedParameter>& target, const std::map<std::string, MatrixXd>& values) {
    for (const auto& p : target) {
        auto it = values.find(p.name);
        if (it == values.end()) throw ParseError("checkpoint lacks parameter " + p.name);
        if (it->second.rows() != p.tensor.rows() || it->second.cols() != p.tensor.cols())
            throw DimensionError("checkpoint parameter " + p.name + " has shape " + shape_string(it->second) +
                                 ", expected " + p.tensor.shape());
        Tensor t = p.tensor;
        t.mutable_value() = it->second;
    }
}

}  // namespace gnnformer

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "gnnformer/graph.hpp"
#include "gnnformer/tensor.hpp"

namespace gnnformer {

using Seed = std::uint64_t;

struct Split {
    std::vector<NodeId> train;
    std::vector<NodeId> val;
    std::vector<NodeId> test;

    friend bool operator==(const Split&, const Split&) = default;
};

/// Features, labels, graph and per-seed splits for one node-classification task.
struct GraphBundle {
    CsrGraph graph;
    MatrixXd features;
    std::vector<int> labels;
    int num_classes = 0;
    std::map<Seed, Split> splits;

    NodeId num_nodes() const { return graph.num_nodes(); }
    Eigen::Index feature_dim() const { return features.cols(); }
    const Split& split(Seed seed) const;

    /// Throws ValidationError when sizes, label ranges or splits are inconsistent.
    void validate() const;

    friend bool operator==(const GraphBundle&, const GraphBundle&) = default;
};

struct SbmParams {
    NodeId n = 400;
    int classes = 4;
    double p_in = 0.05;
    double p_out = 0.005;
    int feat_dim = 16;
    double feat_noise = 1.0;
};

/// Planted-partition graph with balanced classes. Features are the one-hot
/// class indicator (first `classes` dims) plus iid N(0, feat_noise^2).
GraphBundle sbm_generate(const SbmParams& params, Rng& rng);

/// Fraction of undirected edges whose endpoints share a label.
double edge_homophily(const GraphBundle& bundle);

/// Adds a stratified 48/32/20 train/val/test partition for every seed.
/// Classes with fewer than 3 nodes trigger a fallback to an unstratified split.
GraphBundle make_splits(GraphBundle bundle, std::span<const Seed> seeds);

/// Per-class 48/32/20 split of one seed (pure function of seed and labels).
Split make_split(std::span<const int> labels, int num_classes, Seed seed);

void save_bundle(const GraphBundle& bundle, const std::filesystem::path& dir);
GraphBundle load_bundle(const std::filesystem::path& dir);

/// Shortest round-trip decimal form of a double.
std::string format_real(double v);
/// Writes one row per line, space separated, round-trip exact.
void write_matrix(const std::filesystem::path& file, const MatrixXd& m);
/// Reads a matrix written by write_matrix. `rows`/`cols` < 0 means "infer".
MatrixXd read_matrix(const std::filesystem::path& file, Eigen::Index rows = -1, Eigen::Index cols = -1);

}  // namespace gnnformer

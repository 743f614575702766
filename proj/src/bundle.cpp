#include "gnnformer/bundle.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>

namespace gnnformer {

namespace {

constexpr double kTrainFraction = 0.48;
constexpr double kValFraction = 0.32;
// Decorrelates split shuffles from model initialization drawn with the same seed.
constexpr Seed kSplitSalt = 0x5851f42d4c957f2dULL;

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

std::string where(const std::filesystem::path& file, std::size_t line) {
    return file.filename().string() + ":" + std::to_string(line) + ": ";
}

template <typename T>
T parse_number(std::string_view token, const std::filesystem::path& file, std::size_t line) {
    T value{};
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size())
        throw ParseError(where(file, line) + "cannot parse '" + std::string(token) + "'");
    return value;
}

std::vector<std::string> read_lines(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ParseError("cannot open " + file.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

std::ofstream open_out(const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + file.string());
    return out;
}

}  // namespace

const Split& GraphBundle::split(Seed seed) const {
    auto it = splits.find(seed);
    if (it == splits.end()) throw ConfigError("bundle has no split for seed " + std::to_string(seed));
    return it->second;
}

void GraphBundle::validate() const {
    const auto n = static_cast<std::size_t>(graph.num_nodes());
    if (static_cast<std::size_t>(features.rows()) != n)
        throw ValidationError("features have " + std::to_string(features.rows()) + " rows for " + std::to_string(n) +
                              " nodes");
    if (labels.size() != n) throw ValidationError("label count differs from node count");
    if (num_classes < 1) throw ValidationError("bundle needs at least one class");
    for (int y : labels)
        if (y < 0 || y >= num_classes) throw ValidationError("label " + std::to_string(y) + " out of range");
    if (!features.allFinite()) throw ValidationError("non-finite feature value");
    for (const auto& [seed, s] : splits) {
        std::vector<int> seen(n, 0);
        for (const auto* part : {&s.train, &s.val, &s.test})
            for (NodeId i : *part) {
                if (i < 0 || static_cast<std::size_t>(i) >= n)
                    throw ValidationError("split index out of range for seed " + std::to_string(seed));
                ++seen[i];
            }
        if (std::any_of(seen.begin(), seen.end(), [](int c) { return c != 1; }))
            throw ValidationError("split for seed " + std::to_string(seed) + " is not a partition");
    }
}

GraphBundle sbm_generate(const SbmParams& p, Rng& rng) {
    if (p.classes < 1) throw ConfigError("sbm: classes must be >= 1");
    if (p.n < 2 * p.classes) throw ConfigError("sbm: every class needs at least 2 nodes");
    if (!(p.p_in >= 0.0 && p.p_in <= 1.0) || !(p.p_out >= 0.0 && p.p_out <= 1.0))
        throw ConfigError("sbm: edge probabilities must lie in [0, 1]");
    if (p.feat_dim < p.classes) throw ConfigError("sbm: feat_dim must be >= classes");
    if (!(p.feat_noise >= 0.0) || !std::isfinite(p.feat_noise)) throw ConfigError("sbm: feat_noise must be >= 0");

    GraphBundle b;
    b.num_classes = p.classes;
    b.labels.resize(p.n);
    for (NodeId i = 0; i < p.n; ++i) b.labels[i] = i % p.classes;

    std::vector<Edge> edges;
    std::bernoulli_distribution intra(p.p_in), inter(p.p_out);
    for (NodeId i = 0; i < p.n; ++i)
        for (NodeId j = i + 1; j < p.n; ++j) {
            const bool hit = b.labels[i] == b.labels[j] ? intra(rng) : inter(rng);
            if (hit) edges.emplace_back(i, j);
        }
    b.graph = CsrGraph::from_edge_list(p.n, edges);

    b.features = MatrixXd::Zero(p.n, p.feat_dim);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (NodeId i = 0; i < p.n; ++i) {
        b.features(i, b.labels[i]) = 1.0;
        if (p.feat_noise > 0.0)
            for (int k = 0; k < p.feat_dim; ++k) b.features(i, k) += p.feat_noise * noise(rng);
    }
    return b;
}

double edge_homophily(const GraphBundle& b) {
    std::int64_t total = 0, same = 0;
    for (NodeId i = 0; i < b.graph.num_nodes(); ++i)
        for (NodeId j : b.graph.neighbors(i))
            if (j > i) {
                ++total;
                if (b.labels[i] == b.labels[j]) ++same;
            }
    if (total == 0) throw DegenerateError("edge homophily undefined on an edgeless graph");
    return static_cast<double>(same) / static_cast<double>(total);
}

Split make_split(std::span<const int> labels, int num_classes, Seed seed) {
    const auto n = static_cast<std::int64_t>(labels.size());
    const auto n_train = static_cast<std::int64_t>(std::llround(kTrainFraction * static_cast<double>(n)));
    const auto n_val = static_cast<std::int64_t>(std::llround(kValFraction * static_cast<double>(n)));
    Rng rng(seed ^ kSplitSalt);

    std::vector<std::vector<NodeId>> by_class(num_classes);
    for (NodeId i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
    const bool stratify = std::all_of(by_class.begin(), by_class.end(),
                                      [](const auto& members) { return members.empty() || members.size() >= 3; });
    if (!stratify) {
        spdlog::warn("a class has fewer than 3 nodes; falling back to an unstratified split");
        by_class.assign(1, {});
        by_class[0].resize(n);
        std::iota(by_class[0].begin(), by_class[0].end(), 0);
    }
    for (auto& members : by_class) std::shuffle(members.begin(), members.end(), rng);

    // Largest-remainder quotas so that per-class counts sum to the global targets.
    auto allocate = [&](double fraction, std::int64_t target, const std::vector<std::int64_t>& capacity) {
        const std::size_t k = by_class.size();
        std::vector<std::int64_t> quota(k);
        std::vector<std::pair<double, std::size_t>> remainders;
        std::int64_t assigned = 0;
        for (std::size_t c = 0; c < k; ++c) {
            const double exact = fraction * static_cast<double>(by_class[c].size());
            quota[c] = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(exact)), capacity[c]);
            assigned += quota[c];
            remainders.emplace_back(exact - std::floor(exact), c);
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t pass = 0; assigned < target && pass < 2 * k + 2; ++pass)
            for (const auto& [rem, c] : remainders) {
                if (assigned >= target) break;
                if (quota[c] < capacity[c]) {
                    ++quota[c];
                    ++assigned;
                }
            }
        return quota;
    };

    std::vector<std::int64_t> sizes;
    for (const auto& members : by_class) sizes.push_back(static_cast<std::int64_t>(members.size()));
    const auto train_q = allocate(kTrainFraction, n_train, sizes);
    std::vector<std::int64_t> left(sizes.size());
    for (std::size_t c = 0; c < sizes.size(); ++c) left[c] = sizes[c] - train_q[c];
    const auto val_q = allocate(kValFraction, n_val, left);

    Split s;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        const auto& members = by_class[c];
        for (std::int64_t k = 0; k < static_cast<std::int64_t>(members.size()); ++k) {
            if (k < train_q[c])
                s.train.push_back(members[k]);
            else if (k < train_q[c] + val_q[c])
                s.val.push_back(members[k]);
            else
                s.test.push_back(members[k]);
        }
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

GraphBundle make_splits(GraphBundle bundle, std::span<const Seed> seeds) {
    if (seeds.empty()) throw ConfigError("make_splits needs at least one seed");
    for (Seed seed : seeds) bundle.splits[seed] = make_split(bundle.labels, bundle.num_classes, seed);
    return bundle;
}

std::string format_real(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

void write_matrix(const std::filesystem::path& file, const MatrixXd& m) {
    auto out = open_out(file);
    std::string line;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        line.clear();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j > 0) line += ' ';
            line += format_real(m(i, j));
        }
        line += '\n';
        out << line;
    }
    if (!out) throw IoError("write failed for " + file.string());
}

MatrixXd read_matrix(const std::filesystem::path& file, Eigen::Index rows, Eigen::Index cols) {
    const auto lines = read_lines(file);
    std::vector<std::vector<double>> data;
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        auto tokens = split_ws(lines[ln]);
        if (tokens.empty()) continue;
        std::vector<double> row;
        row.reserve(tokens.size());
        for (auto t : tokens) row.push_back(parse_number<double>(t, file, ln + 1));
        if (cols < 0) cols = static_cast<Eigen::Index>(row.size());
        if (static_cast<Eigen::Index>(row.size()) != cols)
            throw ParseError(where(file, ln + 1) + "expected " + std::to_string(cols) + " values, got " +
                             std::to_string(row.size()));
        data.push_back(std::move(row));
    }
    if (rows >= 0 && static_cast<Eigen::Index>(data.size()) != rows)
        throw ParseError(file.filename().string() + ": expected " + std::to_string(rows) + " rows, got " +
                         std::to_string(data.size()));
    MatrixXd m(static_cast<Eigen::Index>(data.size()), std::max<Eigen::Index>(cols, 0));
    for (std::size_t i = 0; i < data.size(); ++i)
        for (std::size_t j = 0; j < data[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = data[i][j];
    return m;
}

void save_bundle(const GraphBundle& b, const std::filesystem::path& dir) {
    b.validate();
    std::error_code ec;
    std::filesystem::create_directories(dir / "splits", ec);
    if (ec) throw IoError("cannot create " + (dir / "splits").string() + ": " + ec.message());

    {
        auto out = open_out(dir / "meta");
        out << "n " << b.num_nodes() << '\n' << "d " << b.feature_dim() << '\n' << "classes " << b.num_classes << '\n';
        out << "seeds";
        for (const auto& [seed, s] : b.splits) out << ' ' << seed;
        out << '\n';
    }
    {
        auto out = open_out(dir / "edges");
        for (const auto& [i, j] : b.graph.undirected_edges()) out << i << ' ' << j << '\n';
    }
    write_matrix(dir / "features", b.features);
    {
        auto out = open_out(dir / "labels");
        for (int y : b.labels) out << y << '\n';
    }
    for (const auto& [seed, s] : b.splits) {
        std::vector<const char*> role(static_cast<std::size_t>(b.num_nodes()), "test");
        for (NodeId i : s.train) role[i] = "train";
        for (NodeId i : s.val) role[i] = "val";
        auto out = open_out(dir / "splits" / ("seed_" + std::to_string(seed)));
        for (const char* r : role) out << r << '\n';
    }
}

GraphBundle load_bundle(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw ParseError("bundle directory not found: " + dir.string());
    const auto meta_file = dir / "meta";
    long long n = -1, d = -1, classes = -1;
    std::vector<Seed> seeds;
    bool saw_seeds = false;
    {
        const auto lines = read_lines(meta_file);
        for (std::size_t ln = 0; ln < lines.size(); ++ln) {
            auto tokens = split_ws(lines[ln]);
            if (tokens.empty()) continue;
            const auto key = tokens[0];
            if (key == "seeds") {
                saw_seeds = true;
                for (std::size_t k = 1; k < tokens.size(); ++k)
                    seeds.push_back(parse_number<Seed>(tokens[k], meta_file, ln + 1));
                continue;
            }
            if (tokens.size() != 2) throw ParseError(where(meta_file, ln + 1) + "expected '<key> <value>'");
            const auto value = parse_number<long long>(tokens[1], meta_file, ln + 1);
            if (key == "n")
                n = value;
            else if (key == "d")
                d = value;
            else if (key == "classes")
                classes = value;
            else
                throw ParseError(where(meta_file, ln + 1) + "unknown key '" + std::string(key) + "'");
        }
    }
    if (n < 0 || d < 0 || classes < 1 || !saw_seeds)
        throw ParseError("meta: missing one of n, d, classes, seeds");

    std::vector<Edge> edges;
    {
        const auto file = dir / "edges";
        const auto lines = read_lines(file);
        for (std::size_t ln = 0; ln < lines.size(); ++ln) {
            auto tokens = split_ws(lines[ln]);
            if (tokens.empty()) continue;
            if (tokens.size() != 2) throw ParseError(where(file, ln + 1) + "expected 'i j'");
            const auto i = parse_number<NodeId>(tokens[0], file, ln + 1);
            const auto j = parse_number<NodeId>(tokens[1], file, ln + 1);
            if (i < 0 || j < 0 || i >= n || j >= n) throw ParseError(where(file, ln + 1) + "node index out of range");
            edges.emplace_back(i, j);
        }
    }

    GraphBundle b;
    b.graph = CsrGraph::from_edge_list(static_cast<NodeId>(n), edges);
    b.num_classes = static_cast<int>(classes);
    b.features = read_matrix(dir / "features", n, d);
    {
        const auto file = dir / "labels";
        const auto lines = read_lines(file);
        for (std::size_t ln = 0; ln < lines.size(); ++ln) {
            auto tokens = split_ws(lines[ln]);
            if (tokens.empty()) continue;
            if (tokens.size() != 1) throw ParseError(where(file, ln + 1) + "expected one label");
            const int y = parse_number<int>(tokens[0], file, ln + 1);
            if (y < 0 || y >= classes) throw ParseError(where(file, ln + 1) + "label out of range");
            b.labels.push_back(y);
        }
        if (static_cast<long long>(b.labels.size()) != n)
            throw ParseError("labels: expected " + std::to_string(n) + " lines, got " + std::to_string(b.labels.size()));
    }
    for (Seed seed : seeds) {
        const auto file = dir / "splits" / ("seed_" + std::to_string(seed));
        const auto lines = read_lines(file);
        Split s;
        NodeId node = 0;
        for (std::size_t ln = 0; ln < lines.size(); ++ln) {
            auto tokens = split_ws(lines[ln]);
            if (tokens.empty()) continue;
            if (tokens.size() != 1 || node >= n) throw ParseError(where(file, ln + 1) + "unexpected content");
            if (tokens[0] == "train")
                s.train.push_back(node);
            else if (tokens[0] == "val")
                s.val.push_back(node);
            else if (tokens[0] == "test")
                s.test.push_back(node);
            else
                throw ParseError(where(file, ln + 1) + "expected train, val or test");
            ++node;
        }
        if (node != n) throw ParseError(file.filename().string() + ": expected " + std::to_string(n) + " lines");
        b.splits.emplace(seed, std::move(s));
    }
    b.validate();
    return b;
}

}  // namespace gnnformer

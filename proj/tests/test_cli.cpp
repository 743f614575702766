#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gnnformer/cli.hpp"

namespace fs = std::filesystem;
namespace g = gnnformer;
namespace cli = gnnformer::cli;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args) {
    args.insert(args.begin(), "ptformer");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("gnnformer_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

const char* kSmallSbm =
    "data.sbm.n = 80\n"
    "data.sbm.classes = 4\n"
    "data.sbm.p_in = 0.1\n"
    "data.sbm.p_out = 0.01\n"
    "data.sbm.feat_dim = 8\n"
    "data.sbm.seed = 3\n"
    "model.hidden = 8\n"
    "model.dropout = 0.3\n"
    "train.max_epochs = 6\n"
    "train.patience = 3\n"
    "train.seeds = 0,1\n";

}  // namespace

TEST(ConfigParse, SectionsCommentsAndPaths) {
    const auto c = cli::parse_experiment_config(
        "# comment\n"
        "data.path = bundles/x   # trailing\n"
        "\n"
        "model.blocks = TT+PP\n"
        "model.propagator = sage\n"
        "model.dropout = 0.9\n"
        "train.lr = 5e-3\n"
        "train.weight_decay = 5e-4\n"
        "train.seeds = 4, 5,6\n"
        "depth.depths = 2,8\n"
        "output.dir = out\n",
        "/base");
    EXPECT_EQ(*c.data_path, fs::path("/base/bundles/x"));
    EXPECT_EQ(c.model.blocks.to_string(), "TT+PP");
    EXPECT_EQ(c.model.propagator, g::PropagatorKind::SageLike);
    EXPECT_EQ(c.model.dropout, 0.9);
    EXPECT_EQ(c.train.seeds, (std::vector<g::Seed>{4, 5, 6}));
    EXPECT_EQ(c.depths, (std::vector<int>{2, 8}));
    EXPECT_NO_THROW(c.validate());
}

TEST(ConfigParse, RejectsUnknownDuplicateAndMalformed) {
    EXPECT_THROW(cli::parse_experiment_config("model.colour = red\n"), g::ConfigError);
    EXPECT_THROW(cli::parse_experiment_config("train.lr = 1\ntrain.lr = 2\n"), g::ConfigError);
    EXPECT_THROW(cli::parse_experiment_config("train.lr 1\n"), g::ConfigError);
    EXPECT_THROW(cli::parse_experiment_config("train.lr = fast\n"), g::ConfigError);
    EXPECT_THROW(cli::parse_experiment_config("train.seeds = 1,,2\n"), g::ConfigError);
    try {
        cli::parse_experiment_config("train.lr = 1\n\nbogus.key = 2\n");
        FAIL();
    } catch (const g::ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
    auto both = cli::parse_experiment_config("data.path = x\ndata.sbm.n = 40\n");
    EXPECT_THROW(both.validate(), g::ConfigError);
    auto neither = cli::parse_experiment_config("train.lr = 0.1\n");
    EXPECT_THROW(neither.validate(), g::ConfigError);
}

TEST(ConfigParse, PresetsParseAndValidate) {
    const fs::path dir = fs::path(GNNFORMER_SOURCE_DIR) / "presets";
    int count = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto c = cli::load_experiment_config(entry.path());
        EXPECT_NO_THROW(c.validate()) << entry.path();
        ++count;
    }
    EXPECT_EQ(count, 12);
    const auto best = cli::load_experiment_config(dir / "chameleon_fix_best.cfg");
    EXPECT_EQ(best.model.blocks.to_string(), "TT+PP");
    EXPECT_EQ(best.model.propagator, g::PropagatorKind::SageLike);
    EXPECT_EQ(best.train.lr, 5e-3);
    EXPECT_EQ(best.train.weight_decay, 5e-4);
    EXPECT_EQ(best.model.dropout, 0.9);
    EXPECT_EQ(best.model.hidden, 64);
    EXPECT_EQ(best.train.seeds.size(), 10u);
}

TEST(Generate, ReportsAndIsReproducible) {
    const auto dir = scratch("generate");
    auto a = run({"generate", "--n", "400", "--classes", "4", "--p-in", "0.05", "--p-out", "0", "--seed", "9",
                  "--out", (dir / "a").string()});
    ASSERT_EQ(a.code, 0) << a.err;
    EXPECT_NE(a.out.find("nodes 400\n"), std::string::npos);
    EXPECT_NE(a.out.find("homophily 1.00\n"), std::string::npos) << a.out;
    auto b = run({"generate", "--n", "400", "--classes", "4", "--p-in", "0.05", "--p-out", "0", "--seed", "9",
                  "--out", (dir / "b").string()});
    ASSERT_EQ(b.code, 0);
    for (const char* f : {"meta", "edges", "features", "labels", "splits/seed_0", "splits/seed_9"})
        EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;

    const auto bundle = g::load_bundle(dir / "a");
    ASSERT_EQ(bundle.labels.size(), 400u);
    for (int y : bundle.labels) {
        EXPECT_GE(y, 0);
        EXPECT_LT(y, 4);
    }
    EXPECT_EQ(bundle.splits.size(), 10u);

    EXPECT_EQ(run({"generate", "--n", "3", "--classes", "4", "--out", (dir / "c").string()}).code, 2);
    EXPECT_FALSE(fs::exists(dir / "c"));
}

TEST(Generate, UnwritablePathIsRuntimeError) {
    const auto dir = scratch("unwritable");
    write(dir / "file", "x");
    auto r = run({"generate", "--n", "40", "--classes", "2", "--out", (dir / "file" / "sub").string()});
    EXPECT_EQ(r.code, 1) << r.err;
}

TEST(Train, MalformedConfigExitsTwoWithoutOutput) {
    const auto dir = scratch("malformed");
    write(dir / "bad.cfg", std::string(kSmallSbm) + "model.widht = 3\n");
    auto r = run({"train", "--config", (dir / "bad.cfg").string(), "--out", (dir / "out").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("widht"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(dir / "out"));

    write(dir / "invalid.cfg", std::string(kSmallSbm) + "model.heads = 3\n");
    EXPECT_EQ(run({"train", "--config", (dir / "invalid.cfg").string(), "--out", (dir / "out").string()}).code, 2);
    EXPECT_FALSE(fs::exists(dir / "out"));

    EXPECT_EQ(run({"train", "--out", (dir / "out").string()}).code, 2);
    EXPECT_EQ(run({"frobnicate"}).code, 2);
    EXPECT_EQ(run({"train", "--config", (dir / "missing.cfg").string(), "--out", (dir / "out").string()}).code, 2);
}

TEST(Train, WritesReportsAndReruns) {
    const auto dir = scratch("train");
    write(dir / "exp.cfg", kSmallSbm);
    auto a = run({"train", "--config", (dir / "exp.cfg").string(), "--out", (dir / "a").string()});
    ASSERT_EQ(a.code, 0) << a.err;
    for (const char* f : {"results.csv", "summary.md", "curves.csv", "checkpoints/seed_0/config",
                          "checkpoints/seed_1/w5"})
        EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;
    auto b = run({"train", "--config", (dir / "exp.cfg").string(), "--out", (dir / "b").string(), "--jobs", "2"});
    ASSERT_EQ(b.code, 0);
    EXPECT_EQ(slurp(dir / "a" / "results.csv"), slurp(dir / "b" / "results.csv"));
    EXPECT_EQ(slurp(dir / "a" / "curves.csv"), slurp(dir / "b" / "curves.csv"));

    const auto ckpt = g::load_checkpoint(dir / "a" / "checkpoints" / "seed_0");
    EXPECT_EQ(ckpt.config.hidden, 8);

    auto seeds = run({"train", "--config", (dir / "exp.cfg").string(), "--out", (dir / "c").string(), "--seeds",
                      "5"});
    ASSERT_EQ(seeds.code, 0);
    EXPECT_NE(slurp(dir / "c" / "results.csv").find("gnnformer,5,ok"), std::string::npos);
}

TEST(Train, DivergenceExitsOne) {
    const auto dir = scratch("diverge");
    write(dir / "exp.cfg", std::string(kSmallSbm) + "train.lr = 1e300\n");
    auto r = run({"train", "--config", (dir / "exp.cfg").string(), "--out", (dir / "out").string()});
    EXPECT_EQ(r.code, 1) << r.err;
    EXPECT_NE(r.err.find("diverged"), std::string::npos) << r.err;
}

TEST(Suites, AblateDepthBaselineOutputs) {
    const auto dir = scratch("suites");
    write(dir / "exp.cfg", kSmallSbm);
    const auto cfg = (dir / "exp.cfg").string();
    ASSERT_EQ(run({"ablate", "--config", cfg, "--out", (dir / "ab").string()}).code, 0);
    const auto ab = slurp(dir / "ab" / "summary.md");
    for (const char* row : {"| best |", "| w/o FFN |", "| FFN(GEGLU) |", "| FFN(ReGLU) |", "| w/o AIRes |",
                            "| AIRes-Res |"})
        EXPECT_NE(ab.find(row), std::string::npos) << row;

    ASSERT_EQ(run({"depth", "--config", cfg, "--out", (dir / "d").string(), "--depths", "2,4"}).code, 0);
    const auto d = slurp(dir / "d" / "summary.md");
    EXPECT_NE(d.find("gnnformer depth 4"), std::string::npos) << d;
    EXPECT_NE(d.find("gcn-control depth 4"), std::string::npos) << d;

    ASSERT_EQ(run({"baseline-gt", "--config", cfg, "--out", (dir / "b").string()}).code, 0);
    const auto b = slurp(dir / "b" / "summary.md");
    for (const char* row : {"| vanilla GT |", "| variant GT |", "| GNNFormer |"})
        EXPECT_NE(b.find(row), std::string::npos) << row;
}

#include "sena/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = 0;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "sena");
    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out, err;
    Result r;
    r.code = sena::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

int run_binary(const std::string& args) {
    const std::string cmd = std::string(SENA_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

nlohmann::json manifest(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / "manifest.json")); }

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root_ = fs::temp_directory_path() / ("sena_cli_" + std::to_string(::getpid()));
        fs::remove_all(root_);
        fs::create_directories(root_);
        ASSERT_EQ(run({"synth", "--out", str("synth"), "--n-controls", "48", "--cells", "12", "--seed", "4"}).code, 0);
        ASSERT_EQ(train("run1", "1"), 0);
    }
    static void TearDownTestSuite() { fs::remove_all(root_); }

    static std::string str(const std::string& rel) { return (root_ / rel).string(); }

    static int train(const std::string& dir, const std::string& seed, const std::string& epochs = "2") {
        return run({"train", "--data", str("synth/data.tsv"), "--gmt", str("synth/pathways.gmt"), "--out", str(dir), "--epochs", epochs,
                    "--batch-size", "16", "--seed", seed})
            .code;
    }

    static fs::path root_;
};

fs::path Cli::root_;

}

TEST_F(Cli, SynthArtifacts) {
    for (const char* f : {"data.tsv", "pathways.gmt", "truth.json", "l2_groups.tsv", "manifest.json"}) {
        EXPECT_TRUE(fs::exists(root_ / "synth" / f)) << f;
    }
    const auto m = manifest(root_ / "synth");
    EXPECT_EQ(m["format"], "sena-manifest");
    EXPECT_EQ(m["command"], "synth");
    EXPECT_EQ(m["seed"], 4);
    EXPECT_EQ(m["artifacts"].size(), 4u);
    const auto ds = sena::load_expression_file(str("synth/data.tsv"));
    EXPECT_EQ(ds.n_genes(), 100u);
}

TEST_F(Cli, TrainArtifactsAndManifest) {
    for (const char* f : {"config.cfg", "model.ckpt", "loss.tsv", "manifest.json"}) {
        EXPECT_TRUE(fs::exists(root_ / "run1" / f)) << f;
    }
    const auto m = manifest(root_ / "run1");
    EXPECT_EQ(m["command"], "train");
    EXPECT_EQ(m["seed"], 1);
    EXPECT_EQ(m["epochs_completed"], 2);
    EXPECT_EQ(m["inputs"].size(), 2u);
    EXPECT_TRUE(m.contains("config_crc32"));
    const auto ckpt = sena::load_checkpoint(str("run1/model.ckpt"));
    EXPECT_EQ(ckpt.epoch, 2u);
    EXPECT_EQ(ckpt.config.batch_size, 16u);
    std::istringstream loss(slurp(root_ / "run1" / "loss.tsv"));
    std::string line;
    std::size_t lines = 0;
    while (std::getline(loss, line)) {
        ++lines;
    }
    EXPECT_EQ(lines, 3u);
}

TEST_F(Cli, RerunIsByteIdentical) {
    ASSERT_EQ(train("run1b", "1"), 0);
    EXPECT_EQ(slurp(root_ / "run1" / "model.ckpt"), slurp(root_ / "run1b" / "model.ckpt"));
    EXPECT_EQ(slurp(root_ / "run1" / "manifest.json").size(), slurp(root_ / "run1b" / "manifest.json").size());
    const std::vector<std::string> a{"eval", "--ckpt", str("run1/model.ckpt"), "--data", str("synth/data.tsv"), "--seed", "2", "--out", str("eval_a")};
    auto b = a;
    b.back() = str("eval_b");
    ASSERT_EQ(run(a).code, 0);
    ASSERT_EQ(run(b).code, 0);
    for (const char* f : {"da.tsv", "hits_dar.tsv", "heads.tsv", "factor_map.tsv", "doubles.tsv", "summary.json"}) {
        EXPECT_EQ(slurp(root_ / "eval_a" / f), slurp(root_ / "eval_b" / f)) << f;
    }
}

TEST_F(Cli, EvalDefaultOutAndSummary) {
    ASSERT_EQ(run({"eval", "--ckpt", str("run1/model.ckpt"), "--data", str("synth/data.tsv"), "--seed", "2", "--hits-n", "5"}).code, 0);
    const auto dir = root_ / "run1" / "eval";
    const auto s = nlohmann::json::parse(slurp(dir / "summary.json"));
    EXPECT_EQ(s["n_perturbations"], 12);
    EXPECT_EQ(s["hits_n"], 5);
    EXPECT_EQ(s["doubles"].size(), 4u);
    EXPECT_EQ(manifest(dir)["command"], "eval");

    ASSERT_EQ(run({"analyze", "metrics", "--ckpt", str("run1/model.ckpt"), "--data", str("synth/data.tsv"), "--seed", "2"}).code, 0);
    EXPECT_TRUE(fs::exists(root_ / "run1" / "metrics" / "da.tsv"));
}

TEST_F(Cli, Identity) {
    ASSERT_EQ(run({"analyze", "identity", "--ckpt", str("run1/model.ckpt"), "--data", str("synth/data.tsv"), "--draws", "1000", "--seed", "3"}).code, 0);
    const auto dir = root_ / "run1" / "identity";
    EXPECT_TRUE(fs::exists(dir / "identity.tsv"));
    std::istringstream r(slurp(dir / "identity_r.tsv"));
    std::string line;
    std::size_t rows = 0;
    while (std::getline(r, line)) {
        ++rows;
    }
    EXPECT_EQ(rows, 1u + 1u + 8u + 4u);
    EXPECT_NE(run({"analyze", "identity", "--ckpt", str("run1/model.ckpt"), "--data", str("synth/data.tsv"), "--draws", "10", "--seed", "3"}).code, 0);
}

TEST_F(Cli, Edges) {
    ASSERT_EQ(train("run2", "2"), 0);
    ASSERT_EQ(run({"analyze", "edges", "--ckpt", str("run1/model.ckpt"), "--ckpt", str("run2/model.ckpt"), "--out", str("edges")}).code, 0);
    std::istringstream e(slurp(root_ / "edges" / "edges.tsv"));
    std::string line;
    std::size_t rows = 0;
    while (std::getline(e, line)) {
        ++rows;
    }
    EXPECT_EQ(rows, 1u + 8u * 7u / 2u);
    EXPECT_TRUE(fs::exists(root_ / "edges" / "consistency_ecdf.tsv"));
    EXPECT_EQ(run({"analyze", "edges", "--ckpt", str("run1/model.ckpt"), "--out", str("edges1")}).code, 1);
}

TEST_F(Cli, L2bp) {
    ASSERT_EQ(run({"analyze", "l2bp", "--ckpt", str("run1/model.ckpt"), "--data", str("synth/data.tsv"), "--groups", str("synth/l2_groups.tsv"), "--n-perm",
                   "100", "--min-members", "2", "--seed", "5"})
                  .code,
              0);
    const auto text = slurp(root_ / "run1" / "l2bp" / "l2bp.tsv");
    EXPECT_NE(text.find("L2_A"), std::string::npos);
    EXPECT_NE(text.find("L2_B"), std::string::npos);
}

TEST_F(Cli, ExportGraph) {
    auto ckpt = sena::load_checkpoint(str("run1/model.ckpt"));
    auto& a = ckpt.model.params.at("causal.A");
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            a(i, j) = 0.0;
        }
    }
    fs::create_directories(root_ / "edgeless");
    sena::save_checkpoint(ckpt, str("edgeless/model.ckpt"));
    ASSERT_EQ(run({"export-graph", "--ckpt", str("edgeless/model.ckpt")}).code, 0);
    auto g = nlohmann::json::parse(slurp(root_ / "edgeless" / "graph" / "graph.json"));
    EXPECT_EQ(g["nodes"].size(), 8u);
    EXPECT_TRUE(g["edges"].empty());

    a(0, 3) = 0.5;
    a(1, 2) = -0.9;
    sena::save_checkpoint(ckpt, str("edgeless/model.ckpt"));
    ASSERT_EQ(run({"export-graph", "--ckpt", str("edgeless/model.ckpt"), "--data", str("synth/data.tsv"), "--top-edges", "1", "--out", str("graph1")}).code,
              0);
    g = nlohmann::json::parse(slurp(root_ / "graph1" / "graph.json"));
    ASSERT_EQ(g["edges"].size(), 1u);
    EXPECT_EQ(g["edges"][0]["from"], "U1");
    EXPECT_EQ(g["edges"][0]["to"], "U2");
    EXPECT_EQ(g["edges"][0]["sign"], "-");
    const auto dot = slurp(root_ / "graph1" / "graph.dot");
    EXPECT_NE(dot.find("U1 -> U2"), std::string::npos);
    EXPECT_EQ(dot.find("U0 -> U3"), std::string::npos);
}

TEST_F(Cli, Resume) {
    ASSERT_EQ(run({"train", "--data", str("synth/data.tsv"), "--resume", str("run1/model.ckpt"), "--out", str("resumed"), "--epochs", "3", "--seed", "1"}).code,
              0);
    ASSERT_EQ(train("run3", "1", "3"), 0);
    EXPECT_EQ(slurp(root_ / "resumed" / "model.ckpt"), slurp(root_ / "run3" / "model.ckpt"));
    const auto r = run({"train", "--data", str("synth/data.tsv"), "--resume", str("run1/model.ckpt"), "--out", str("conflict"), "--epochs", "3",
                        "--learning-rate", "0.5", "--seed", "1"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("only the epoch count"), std::string::npos);
}

TEST_F(Cli, CheckGrad) {
    const auto r = run({"check-grad", "--data", str("synth/data.tsv"), "--gmt", str("synth/pathways.gmt"), "--out", str("grad"), "--batch-size", "8",
                        "--set", "embed_dim=4", "--set", "hidden_dim=4", "--seed", "1"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(root_ / "grad" / "gradcheck.tsv"));
    EXPECT_EQ(manifest(root_ / "grad")["passed"], true);
}

TEST_F(Cli, BinaryExitCodes) {
    EXPECT_EQ(run_binary("--help"), 0);
    EXPECT_EQ(run_binary(""), 1);
    EXPECT_EQ(run_binary("frobnicate"), 1);
    EXPECT_EQ(run_binary("synth --out " + str("x") + " --seed 1 --bogus"), 1);
    EXPECT_EQ(run_binary("train --data " + str("missing.tsv") + " --gmt " + str("synth/pathways.gmt") + " --out " + str("y") + " --seed 1"), 1);
    EXPECT_EQ(run_binary("train --data " + str("synth/data.tsv") + " --out " + str("y") + " --seed 1"), 1);
    EXPECT_EQ(run_binary("train --data " + str("synth/data.tsv") + " --gmt " + str("synth/pathways.gmt") + " --out " + str("y") + " --seed 1 --set nope=1"),
              1);
    EXPECT_EQ(run_binary("eval --ckpt " + str("synth/data.tsv") + " --data " + str("synth/data.tsv") + " --seed 1"), 1);
}

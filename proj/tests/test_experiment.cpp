// End-to-end checks of the eigenmap-lab command line: exit codes, artifacts,
// determinism and the generate / verify / sweep subcommands.

#include "eigenmap/config.hpp"
#include "eigenmap/retrieval.hpp"
#include "eigenmap/trainer.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

using namespace eigenmap;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = fs::path(EIGENMAP_SOURCE_DIR) / "configs";

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "eigenmap_cli" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t line_count(const fs::path& p) {
    const std::string s = slurp(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

struct Outcome {
    int code;
    std::string output;  // stdout and stderr
};

Outcome lab(const std::string& args, const std::string& env = "") {
    const fs::path out = fs::temp_directory_path() / "eigenmap_cli" / "last_output.txt";
    fs::create_directories(out.parent_path());
    const std::string cmd = env + (env.empty() ? "" : " ") + "\"" EIGENMAP_LAB_EXE "\" " + args + " > \"" +
                            out.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out)};
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    os << text;
}

const char* kTiny = R"([experiment]
kind = analytic_eigen
seed = 3

[data]
source = uniform
n = 64

[kernel]
type = rbf
sigma = 0.5

[model]
k = 3
hidden = 16

[objective]
alpha = 20

[train]
optimizer = adam
lr = 0.003
batch_size = 32
epochs = 10
)";

}  // namespace

TEST(Cli, ShippedConfigsValidate) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(kConfigs))
        if (e.path().extension() == ".cfg") {
            ++n;
            EXPECT_NO_THROW(load_config(e.path().string())) << e.path();
        }
    EXPECT_GE(n, 4u);
}

TEST(Cli, RbfExampleWritesFiveAlignmentRows) {
    const fs::path out = scratch("rbf");
    const Outcome r = lab("run \"" + (kConfigs / "rbf_1d.cfg").string() + "\" --output \"" + out.string() +
                          "\" --set train.epochs=40 --set train.checkpoint_every=0");
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_EQ(line_count(out / "alignment.csv"), 6u);
    const std::string align = slurp(out / "alignment.csv");
    EXPECT_EQ(align.substr(0, align.find('\n')), "dim,cosine,estimate,oracle,relative_error,principal_angle_deg");
    EXPECT_EQ(line_count(out / "log.csv"), 41u);
    EXPECT_TRUE(fs::exists(out / "ckpt_40"));
    EXPECT_TRUE(fs::exists(out / "run.meta"));
    EXPECT_TRUE(fs::exists(out / "oracle_eigenvalues.csv"));
}

TEST(Cli, RerunIsByteIdenticalAndRunMetaReruns) {
    const fs::path dir = scratch("rerun");
    write(dir / "tiny.cfg", kTiny);
    ASSERT_EQ(lab("run \"" + (dir / "tiny.cfg").string() + "\" --output \"" + (dir / "a").string() + "\"").code, 0);
    ASSERT_EQ(lab("run \"" + (dir / "tiny.cfg").string() + "\" --output \"" + (dir / "b").string() + "\"").code, 0);
    EXPECT_EQ(slurp(dir / "a" / "log.csv"), slurp(dir / "b" / "log.csv"));
    EXPECT_EQ(slurp(dir / "a" / "metrics.csv"), slurp(dir / "b" / "metrics.csv"));
    EXPECT_EQ(slurp(dir / "a" / "alignment.csv"), slurp(dir / "b" / "alignment.csv"));
    // run.meta is itself a runnable config.
    ASSERT_EQ(lab("run \"" + (dir / "a" / "run.meta").string() + "\" --output \"" + (dir / "c").string() + "\"").code, 0);
    EXPECT_EQ(slurp(dir / "a" / "log.csv"), slurp(dir / "c" / "log.csv"));
    const std::string meta = slurp(dir / "a" / "run.meta");
    EXPECT_NE(meta.find("# config_hash = "), std::string::npos);
    EXPECT_NE(meta.find("# threads_used = 1"), std::string::npos);
    // A different seed changes the log.
    ASSERT_EQ(lab("run \"" + (dir / "tiny.cfg").string() + "\" --output \"" + (dir / "d").string() +
                  "\" --set experiment.seed=4")
                  .code,
              0);
    EXPECT_NE(slurp(dir / "a" / "log.csv"), slurp(dir / "d" / "log.csv"));
}

TEST(Cli, ConfigErrorsExitTwoAndNameTheField) {
    const fs::path dir = scratch("errors");
    std::string missing = kTiny;
    missing.erase(missing.find("k = 3\n"), 6);
    write(dir / "missing.cfg", missing);
    Outcome r = lab("run \"" + (dir / "missing.cfg").string() + "\"");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("missing required field model.k"), std::string::npos) << r.output;

    write(dir / "unknown.cfg", std::string(kTiny) + "bogus = 1\n");
    r = lab("run \"" + (dir / "unknown.cfg").string() + "\"");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("unknown.cfg:25: unknown key train.bogus"), std::string::npos) << r.output;

    write(dir / "bigk.cfg", kTiny);
    r = lab("run \"" + (dir / "bigk.cfg").string() + "\" --set model.k=40");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("exceeds train.batch_size"), std::string::npos) << r.output;

    r = lab("run \"" + (dir / "nope.cfg").string() + "\"");
    EXPECT_EQ(r.code, 2);

    r = lab("run \"" + (dir / "bigk.cfg").string() + "\"", "EIGENMAP_LAB_THREADS=zero");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("EIGENMAP_LAB_THREADS"), std::string::npos);
}

TEST(Cli, RuntimeFailureExitsOne) {
    const fs::path dir = scratch("runtime");
    std::string text = kTiny;
    text.replace(text.find("source = uniform"), 16, "source = points_file\npath = does_not_exist.csv");
    write(dir / "f.cfg", text);
    const Outcome r = lab("run \"" + (dir / "f.cfg").string() + "\" --output \"" + (dir / "o").string() + "\"");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.output.find("does_not_exist.csv"), std::string::npos) << r.output;
}

TEST(Cli, ThreadsVariableIsRecorded) {
    const fs::path dir = scratch("threads");
    write(dir / "t.cfg", kTiny);
    const Outcome r = lab("run \"" + (dir / "t.cfg").string() + "\" --output \"" + (dir / "o").string() +
                              "\" --set train.epochs=1",
                          "EIGENMAP_LAB_THREADS=4");
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_NE(slurp(dir / "o" / "run.meta").find("# threads_requested = 4"), std::string::npos);
}

TEST(Cli, GenerateIsDeterministic) {
    const fs::path a = scratch("gen_a"), b = scratch("gen_b");
    for (const fs::path& d : {a, b}) {
        ASSERT_EQ(lab("generate sbm_graph --n 200 --blocks 2 --p-in 0.5 --p-out 0.05 --seed 9 --out \"" + d.string() + "\"")
                      .code,
                  0);
        ASSERT_EQ(lab("generate gaussian_blobs --n 300 --classes 3 --sigma 0.2 --seed 9 --out \"" + d.string() + "\"").code,
                  0);
        ASSERT_EQ(lab("generate two_moons --n 50 --seed 9 --out \"" + d.string() + "\"").code, 0);
        ASSERT_EQ(lab("generate ring_graph --n 30 --reach 2 --out \"" + d.string() + "\"").code, 0);
    }
    for (const char* f : {"sbm_graph.edges", "sbm_graph.labels.csv", "gaussian_blobs.csv", "two_moons.csv",
                          "ring_graph.edges", "ring_graph.labels.csv"})
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    EXPECT_EQ(line_count(a / "gaussian_blobs.csv"), 301u);
    EXPECT_EQ(slurp(a / "gaussian_blobs.csv").substr(0, 12), "x0,x1,label\n");
    EXPECT_EQ(line_count(a / "sbm_graph.labels.csv"), 201u);

    EXPECT_EQ(lab("generate sbm_graph --p-in 2 --out \"" + a.string() + "\"").code, 2);
    EXPECT_EQ(lab("generate ring_graph --n 2 --out \"" + a.string() + "\"").code, 2);
    EXPECT_EQ(lab("generate spirals --out \"" + a.string() + "\"").code, 2);
}

TEST(Cli, GraphFromGeneratedFiles) {
    const fs::path dir = scratch("graph_files");
    ASSERT_EQ(lab("generate sbm_graph --n 120 --blocks 2 --p-in 0.3 --p-out 0.02 --seed 1 --out \"" + dir.string() + "\"").code,
              0);
    write(dir / "g.cfg", R"([experiment]
kind = graph_nodes
seed = 2

[data]
source = edge_list
path = sbm_graph.edges
labels_path = sbm_graph.labels.csv

[model]
k = 2
hidden = none

[objective]
alpha = 10
batch_scaling = one_over_b

[train]
optimizer = adam
lr = 0.01
batch_size = 60
epochs = 150

[eval]
probe_epochs = 30
)");
    const Outcome r = lab("run \"" + (dir / "g.cfg").string() + "\" --output \"" + (dir / "o").string() + "\"");
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_EQ(line_count(dir / "o" / "alignment.csv"), 3u);
    EXPECT_NE(slurp(dir / "o" / "metrics.csv").find("probe_accuracy"), std::string::npos);
    // File paths are resolved against the config directory, so run.meta reruns from anywhere.
    const std::string meta = slurp(dir / "o" / "run.meta");
    EXPECT_NE(meta.find("path = /"), std::string::npos);
    EXPECT_NE(meta.find("# inputs_hash = "), std::string::npos);
}

TEST(Cli, VerifyCheckpoint) {
    const fs::path dir = scratch("verify");
    write(dir / "t.cfg", kTiny);
    ASSERT_EQ(lab("run \"" + (dir / "t.cfg").string() + "\" --output \"" + (dir / "o").string() + "\"").code, 0);
    Outcome r = lab("verify \"" + (dir / "o" / "ckpt_20").string() + "\" \"" + (dir / "t.cfg").string() + "\" --output \"" +
                    (dir / "v").string() + "\"");
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_EQ(line_count(dir / "v" / "alignment.csv"), 4u);
    r = lab("verify \"" + (dir / "o" / "ckpt_20").string() + "\" \"" + (dir / "t.cfg").string() + "\" --output \"" +
            (dir / "v").string() + "\" --min-cosine 1.5");
    EXPECT_EQ(r.code, 1);
    r = lab("verify \"" + (dir / "missing").string() + "\" \"" + (dir / "t.cfg").string() + "\"");
    EXPECT_EQ(r.code, 1);
}

TEST(Cli, SweepRunsEveryGridPoint) {
    const fs::path dir = scratch("sweep");
    write(dir / "t.cfg", kTiny);
    const Outcome r = lab("sweep \"" + (dir / "t.cfg").string() + "\" --grid train.lr=0.001,0.003 --grid model.k=2,3 --output \"" +
                          (dir / "o").string() + "\"");
    ASSERT_EQ(r.code, 0) << r.output;
    for (int i = 0; i < 4; ++i) EXPECT_TRUE(fs::exists(dir / "o" / ("run_" + std::to_string(i)) / "log.csv")) << i;
    const std::string summary = slurp(dir / "o" / "sweep.csv");
    EXPECT_EQ(summary.substr(0, summary.find('\n')), "run,train.lr,model.k,status,metric,value");
    EXPECT_NE(summary.find("run_3,0.003,3,ok,cosine_3,"), std::string::npos);
    EXPECT_EQ(lab("sweep \"" + (dir / "t.cfg").string() + "\" --grid train.nothing=1").code, 2);
}

TEST(Cli, PairsProbeAndRetrievalKinds) {
    const fs::path dir = scratch("kinds");
    write(dir / "pairs.cfg", R"([experiment]
kind = contrastive_pairs
seed = 1
[data]
source = gaussian_blobs
n = 200
classes = 4
dim = 3
[augment]
noise_std = 0.1
[model]
k = 4
hidden = 16
[objective]
alpha = 1
[train]
optimizer = adam
lr = 0.003
batch_size = 64
epochs = 3
steps_per_epoch = 10
[eval]
probe = true
probe_epochs = 10
)");
    Outcome r = lab("run \"" + (dir / "pairs.cfg").string() + "\" --output \"" + (dir / "p").string() + "\"");
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_EQ(line_count(dir / "p" / "log.csv"), 31u);
    EXPECT_FALSE(fs::exists(dir / "p" / "alignment.csv"));

    std::string probe = slurp(dir / "pairs.cfg");
    probe.replace(probe.find("contrastive_pairs"), 17, "probe");
    probe.replace(probe.find("[augment]\nnoise_std = 0.1\n"), 26, "[kernel]\ntype = rbf\nsigma = 1.0\n");
    probe.replace(probe.find("steps_per_epoch = 10\n"), 21, "");
    write(dir / "probe.cfg", probe);
    r = lab("run \"" + (dir / "probe.cfg").string() + "\" --output \"" + (dir / "q").string() + "\"");
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_NE(slurp(dir / "q" / "metrics.csv").find("probe_accuracy,"), std::string::npos);

    r = lab("run \"" + (kConfigs / "blobs_retrieval.cfg").string() + "\" --output \"" + (dir / "r").string() +
            "\" --set data.n=300 --set data.queries=30 --set model.k=8 --set model.hidden=16 --set train.batch_size=64"
            " --set train.epochs=2 --set eval.lengths=2,4,8 --set eval.random_runs=3");
    ASSERT_EQ(r.code, 0) << r.output;
    const auto curves = load_curves_csv((dir / "r" / "curves.csv").string());
    ASSERT_EQ(curves.size(), 4u);
    EXPECT_EQ(curves[0].mode, "prefix");
    EXPECT_EQ(curves[1].mode, "random");
    EXPECT_EQ(curves[1].runs.size(), 3u);
    EXPECT_TRUE(fs::exists(dir / "r" / "ordered" / "log.csv"));
    EXPECT_TRUE(fs::exists(dir / "r" / "unordered" / "log.csv"));
    EXPECT_NE(slurp(dir / "r" / "metrics.csv").find("matched_length_ratio_precision,"), std::string::npos);
}

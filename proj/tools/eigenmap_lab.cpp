// eigenmap-lab: run, verify and sweep eigenmap experiments; generate
// synthetic datasets.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error.

#include "eigenmap/config.hpp"
#include "eigenmap/experiment.hpp"
#include "eigenmap/synthetic.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

using namespace eigenmap;
namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

void print_result(const ExperimentResult& r) {
    std::printf("run directory: %s\n", r.dir.string().c_str());
    std::printf("steps: %zu\n", r.log.steps);
    if (!r.log.epoch_seconds.empty()) {
        double s = 0.0;
        for (double e : r.log.epoch_seconds) s += e;
        std::printf("training time: %.2f s over %zu epochs\n", s, r.log.epoch_seconds.size());
    }
    for (const auto& [k, v] : r.metrics) std::printf("  %-36s %.6g\n", k.c_str(), v);
}

void print_diverged(const TrainingDiverged& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    std::fprintf(stderr, "  step %zu, lr %.17g\n", e.step(), e.lr());
    if (const auto& last = e.last_finite()) {
        std::fprintf(stderr, "  last finite loss: total %.17g diagonal %.17g penalty %.17g\n", last->total,
                     last->diagonal_term, last->penalty_term);
        for (std::size_t j = 0; j < last->per_dimension.size(); ++j)
            std::fprintf(stderr, "    M_%zu%zu = %.17g\n", j + 1, j + 1, last->per_dimension[j]);
    } else {
        std::fprintf(stderr, "  no finite step was completed\n");
    }
}

/// Runs `body`, mapping exceptions to exit codes.
template <class F>
int guarded(F&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const TrainingDiverged& e) {
        print_diverged(e);
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
}

ExperimentConfig load_resolved(const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides,
                               const std::string& output_override) {
    ExperimentConfig cfg = load_config(path, overrides);
    resolve_data_paths(cfg, fs::path(path).parent_path());
    if (!output_override.empty()) cfg.output_dir = output_override;
    return cfg;
}

std::vector<std::pair<std::string, std::string>> parse_sets(const std::vector<std::string>& sets) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const std::string& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set '" + s + "': expected section.key=value");
        out.emplace_back(IniFile::trim(s.substr(0, eq)), IniFile::trim(s.substr(eq + 1)));
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"eigenmap-lab: neural eigenfunction experiments at desk scale"};
    app.require_subcommand(1);

    // run
    std::string run_cfg, run_out;
    std::vector<std::string> run_sets;
    auto* run = app.add_subcommand("run", "Train, verify against the oracle where one exists, and evaluate");
    run->add_option("config", run_cfg, "Experiment config file")->required();
    run->add_option("--output", run_out, "Override experiment.output_dir");
    run->add_option("--set", run_sets, "Override a field, section.key=value (repeatable)");

    // generate
    std::string gen_kind, gen_out = ".";
    std::uint64_t gen_seed = 0;
    std::size_t gen_n = 0, gen_classes = 3, gen_dim = 2, gen_blocks = 2, gen_reach = 1, gen_segments = 4;
    double gen_sigma = 0.2, gen_center = 1.0, gen_noise = 0.1, gen_pin = 0.5, gen_pout = 0.05;
    auto* gen = app.add_subcommand("generate", "Write a synthetic dataset (CSV points or edge list plus labels)");
    gen->add_option("kind", gen_kind, "gaussian_blobs, two_moons, sbm_graph or ring_graph")
        ->required()
        ->check(CLI::IsMember({"gaussian_blobs", "two_moons", "sbm_graph", "ring_graph"}));
    gen->add_option("--out", gen_out, "Output directory");
    gen->add_option("--seed", gen_seed, "Root seed");
    gen->add_option("--n", gen_n, "Number of points or nodes");
    gen->add_option("--classes", gen_classes, "Blob classes");
    gen->add_option("--dim", gen_dim, "Blob dimension");
    gen->add_option("--sigma", gen_sigma, "Blob within-class standard deviation");
    gen->add_option("--center-scale", gen_center, "Blob center spread");
    gen->add_option("--noise", gen_noise, "Two-moons jitter");
    gen->add_option("--blocks", gen_blocks, "SBM block count");
    gen->add_option("--p-in", gen_pin, "SBM within-block edge probability");
    gen->add_option("--p-out", gen_pout, "SBM between-block edge probability");
    gen->add_option("--reach", gen_reach, "Ring neighbours on each side");
    gen->add_option("--segments", gen_segments, "Ring label segments");

    // verify
    std::string ver_ckpt, ver_cfg, ver_out;
    double ver_min_cos = -1.0, ver_max_angle = -1.0;
    auto* ver = app.add_subcommand("verify", "Oracle-only alignment pass on a checkpoint");
    ver->add_option("checkpoint", ver_ckpt, "Checkpoint file")->required();
    ver->add_option("config", ver_cfg, "Experiment config the checkpoint was trained under")->required();
    ver->add_option("--output", ver_out, "Directory for alignment.csv (default <output_dir>/verify)");
    ver->add_option("--min-cosine", ver_min_cos, "Fail (exit 1) if any per-dimension |cos| is below this");
    ver->add_option("--max-angle", ver_max_angle, "Fail (exit 1) if the largest principal angle (degrees) exceeds this");

    // sweep
    std::string sw_cfg, sw_out;
    std::vector<std::string> sw_grid;
    auto* sw = app.add_subcommand("sweep", "Sequential runs over a grid of config overrides");
    sw->add_option("config", sw_cfg, "Base experiment config")->required();
    sw->add_option("--grid", sw_grid, "section.key=v1,v2,... (repeatable; cartesian product)")->required();
    sw->add_option("--output", sw_out, "Override the base experiment.output_dir");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    std::size_t threads = 1;
    {
        const int rc = guarded([&] {
            threads = requested_threads(std::getenv("EIGENMAP_LAB_THREADS"));
            return 0;
        });
        if (rc) return rc;
        if (threads > 1)
            std::fprintf(stderr, "note: EIGENMAP_LAB_THREADS=%zu recorded; computation is single-threaded\n", threads);
    }

    if (*run) {
        return guarded([&] {
            const ExperimentConfig cfg = load_resolved(run_cfg, parse_sets(run_sets), run_out);
            print_result(run_experiment(cfg, threads));
            return 0;
        });
    }

    if (*gen) {
        return guarded([&] {
            fs::create_directories(gen_out);
            const fs::path base = fs::path(gen_out) / gen_kind;
            auto need = [](bool ok, const std::string& msg) {
                if (!ok) throw ConfigError("generate: " + msg);
            };
            try {
                if (gen_kind == "gaussian_blobs") {
                    const PointSet ps =
                        gaussian_blobs(BlobParams{gen_n ? gen_n : 300, gen_classes, gen_dim, gen_sigma, gen_center}, gen_seed);
                    save_points_csv(base.string() + ".csv", ps.points, ps.labels);
                    std::printf("wrote %s.csv (%zu rows)\n", base.string().c_str(), ps.points.rows());
                } else if (gen_kind == "two_moons") {
                    const PointSet ps = two_moons(gen_n ? gen_n : 300, gen_noise, gen_seed);
                    save_points_csv(base.string() + ".csv", ps.points, ps.labels);
                    std::printf("wrote %s.csv (%zu rows)\n", base.string().c_str(), ps.points.rows());
                } else {
                    const GraphDataset g = gen_kind == "sbm_graph"
                                               ? sbm_graph(SbmParams{gen_n ? gen_n : 200, gen_blocks, gen_pin, gen_pout}, gen_seed)
                                               : ring_graph(gen_n ? gen_n : 200, gen_reach, gen_segments);
                    save_edge_list(base.string() + ".edges", g);
                    save_labels(base.string() + ".labels.csv", g.labels());
                    std::printf("wrote %s.edges (%zu nodes, %zu edges) and %s.labels.csv\n", base.string().c_str(),
                                g.num_nodes(), g.stats().undirected_edges, base.string().c_str());
                }
            } catch (const ConfigError&) {
                throw;
            } catch (const Error& e) {
                need(false, e.what());  // generator parameter checks are configuration errors
            }
            return 0;
        });
    }

    if (*ver) {
        return guarded([&] {
            const ExperimentConfig cfg = load_resolved(ver_cfg, {}, "");
            const fs::path out = ver_out.empty() ? fs::path(cfg.output_dir) / "verify" : fs::path(ver_out);
            const AlignmentReport rep = verify_checkpoint(ver_ckpt, cfg, out);
            bool ok = true;
            for (std::size_t j = 0; j < rep.k; ++j) {
                std::printf("dim %zu  |cos| %.6f  oracle %.6g\n", j + 1, rep.cosines[j], rep.oracle_eigenvalues[j]);
                ok = ok && !(ver_min_cos >= 0.0 && rep.cosines[j] < ver_min_cos);
            }
            std::printf("largest principal angle: %.4f deg\n", rep.max_angle_degrees());
            if (!rep.warning.empty()) std::printf("warning: %s\n", rep.warning.c_str());
            if (ver_max_angle >= 0.0 && rep.max_angle_degrees() > ver_max_angle) ok = false;
            std::printf("wrote %s\n", (out / "alignment.csv").string().c_str());
            return ok ? 0 : kExitRuntime;
        });
    }

    if (*sw) {
        return guarded([&] {
            std::vector<GridAxis> axes;
            for (const std::string& g : sw_grid) axes.push_back(parse_grid_axis(g));
            const ExperimentConfig base = load_resolved(sw_cfg, {}, sw_out);
            const auto points = expand_grid(axes);
            // Validate every grid point before running any of them.
            std::vector<ExperimentConfig> cfgs;
            for (const SweepPoint& p : points) {
                ExperimentConfig c = load_resolved(sw_cfg, p.overrides, "");
                c.output_dir = (fs::path(base.output_dir) / p.dir_name).string();
                cfgs.push_back(std::move(c));
            }
            fs::create_directories(base.output_dir);
            std::ofstream summary(fs::path(base.output_dir) / "sweep.csv", std::ios::binary);
            summary << "run";
            for (const GridAxis& a : axes) summary << ',' << a.key;
            summary << ",status,metric,value\n";
            int worst = 0;
            for (std::size_t i = 0; i < cfgs.size(); ++i) {
                std::printf("== %s:", points[i].dir_name.c_str());
                for (const auto& [k, v] : points[i].overrides) std::printf(" %s=%s", k.c_str(), v.c_str());
                std::printf("\n");
                std::string prefix = points[i].dir_name;
                for (const auto& ov : points[i].overrides) prefix += ',' + ov.second;
                ExperimentResult r;
                const int rc = guarded([&] {
                    r = run_experiment(cfgs[i], threads);
                    print_result(r);
                    return 0;
                });
                worst = std::max(worst, rc);
                if (rc) {
                    summary << prefix << ",failed,,\n";
                    continue;
                }
                for (const auto& [k, v] : r.metrics) {
                    char buf[40];
                    std::snprintf(buf, sizeof buf, "%.17g", v);
                    summary << prefix << ",ok," << k << ',' << buf << '\n';
                }
            }
            return worst;
        });
    }
    return 0;
}

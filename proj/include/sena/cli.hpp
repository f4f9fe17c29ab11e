#ifndef SENA_CLI_HPP
#define SENA_CLI_HPP

#include "analysis.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "gradcheck.hpp"
#include "metrics.hpp"
#include "synthetic.hpp"
#include "trainer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

/**
 * @file cli.hpp
 * @brief The `sena` command line: synth, train, eval, analyze, export-graph and check-grad.
 *
 * Exit status is 0 on success, 1 for usage and validation errors and 2 for runtime or numeric failures.
 */

namespace sena::cli {

inline int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::domain:
        case ErrorKind::diverged:
        case ErrorKind::undefined_correlation:
        case ErrorKind::insufficient_sample:
        case ErrorKind::io: return 2;
        default: return 1;
    }
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::io, "cannot open " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string hex32(std::uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%08x", v);
    return buf;
}

/**
 * @brief Output directory that records every artifact for the manifest.
 */
class RunDir {
public:
    RunDir(std::string command, const std::string& path) : command_(std::move(command)), path_(path) {
        std::error_code ec;
        std::filesystem::create_directories(path_, ec);
        if (ec) {
            throw Error(ErrorKind::io, "cannot create output directory " + path + ": " + ec.message());
        }
    }

    std::string file(const std::string& name) const { return (path_ / name).string(); }

    void write(const std::string& name, const std::string& content) {
        std::ofstream out(file(name), std::ios::binary);
        if (!out || !(out << content)) {
            throw Error(ErrorKind::io, "cannot write " + file(name));
        }
        artifacts_.push_back({name, content.size(), crc32_of(content)});
    }

    void input(const std::string& role, const std::string& path) {
        const auto content = read_file(path);
        inputs_.push_back({role + ":" + path, content.size(), crc32_of(content)});
    }

    void set_config(const std::string& text) { config_ = text; }
    void set_seed(std::uint64_t seed) { seed_ = seed; }
    void note(const std::string& key, nlohmann::ordered_json value) { extra_[key] = std::move(value); }

    void write_manifest() {
        nlohmann::ordered_json j;
        j["format"] = "sena-manifest";
        j["command"] = command_;
        if (seed_) {
            j["seed"] = *seed_;
        } else {
            j["seed"] = nullptr;
        }
        if (config_) {
            j["config_crc32"] = hex32(crc32_of(*config_));
            j["config"] = *config_;
        }
        auto list = [](const std::vector<Entry>& xs) {
            nlohmann::ordered_json a = nlohmann::ordered_json::array();
            for (const auto& e : xs) {
                a.push_back({{"name", e.name}, {"bytes", e.bytes}, {"crc32", hex32(e.crc)}});
            }
            return a;
        };
        j["inputs"] = list(inputs_);
        j["artifacts"] = list(artifacts_);
        for (const auto& [k, v] : extra_.items()) {
            j[k] = v;
        }
        std::ofstream out(file("manifest.json"), std::ios::binary);
        out << j.dump(2) << '\n';
        if (!out) {
            throw Error(ErrorKind::io, "cannot write " + file("manifest.json"));
        }
    }

private:
    struct Entry {
        std::string name;
        std::size_t bytes;
        std::uint32_t crc;
    };
    std::string command_;
    std::filesystem::path path_;
    std::vector<Entry> inputs_, artifacts_;
    std::optional<std::string> config_;
    std::optional<std::uint64_t> seed_;
    nlohmann::ordered_json extra_ = nlohmann::ordered_json::object();
};

inline std::string config_help() {
    std::string out = "Config file: one `key = value` per line, `#` comments. Keys and defaults:\n";
    for (const auto& [k, v] : config_entries(TrainConfig{})) {
        out += "  " + k + " = " + v + "\n";
    }
    return out;
}

inline PathwayDatabase load_pathways(const std::string& gmt, const std::string& parents) {
    auto db = parse_gmt_file(gmt);
    if (!parents.empty()) {
        db.ancestors = parse_parents_file(parents);
    }
    return db;
}

struct Options {
    std::string out, data, gmt, parents, config, ckpt, groups, resume;
    std::vector<std::string> ckpts, sets;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs, latent_dim, batch_size;
    std::optional<double> lambda, learning_rate;
    std::string variant;
    std::size_t hits_n = 100, draws = 10000, n_perm = 1000, min_members = 10, top_edges = 10;
    std::size_t n_controls = 400, cells = 100, warmup = 0;
    double top_fraction = 0.01, fdr = 0.05, tol = 1e-4, threshold = 0.0, fd_step = 1e-5;
    bool weighted = false;
};

inline TrainConfig effective_config(const Options& o, TrainConfig cfg = {}) {
    if (!o.config.empty()) {
        cfg = load_config_file(o.config, cfg);
    }
    for (const auto& kv : o.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorKind::validation, "--set expects key=value, got '" + kv + "'");
        }
        set_config_value(cfg, trim(kv.substr(0, eq)), kv.substr(eq + 1));
    }
    if (o.seed) cfg.seed = *o.seed;
    if (o.epochs) cfg.epochs = *o.epochs;
    if (o.latent_dim) cfg.latent_dim = *o.latent_dim;
    if (o.batch_size) cfg.batch_size = *o.batch_size;
    if (o.lambda) cfg.lambda = *o.lambda;
    if (o.learning_rate) cfg.learning_rate = *o.learning_rate;
    if (!o.variant.empty()) cfg.encoder_variant = parse_encoder_variant(o.variant);
    cfg.validate();
    return cfg;
}

inline std::string loss_tsv(const Checkpoint& c) {
    std::ostringstream out;
    out << "epoch\tmse\tkld\tmmd\tl1\tell1\ttotal\n";
    for (const auto& h : c.history) {
        out << h.epoch << '\t' << format_double(h.parts.mse) << '\t' << format_double(h.parts.kld) << '\t' << format_double(h.parts.mmd) << '\t'
            << format_double(h.parts.l1) << '\t' << format_double(h.parts.ell1) << '\t' << format_double(h.total) << '\n';
    }
    return out.str();
}

inline std::string to_text(const std::function<void(std::ostream&)>& f) {
    std::ostringstream out;
    f(out);
    return out.str();
}

inline int cmd_synth(const Options& o, std::ostream& log) {
    auto spec = default_synthetic_spec(*o.seed);
    spec.n_controls = o.n_controls;
    spec.cells_per_perturbation = o.cells;
    spec.cells_per_double = o.cells;
    auto data = generate_synthetic(spec);
    RunDir run("synth", o.out);
    run.set_seed(*o.seed);
    run.write("data.tsv", to_text([&](std::ostream& s) { write_expression(s, data.dataset); }));
    run.write("pathways.gmt", to_text([&](std::ostream& s) { write_gmt(s, data.pathways); }));
    run.write("truth.json", data.truth.to_json().dump(2) + "\n");
    std::string groups;
    for (std::size_t k = 0; k < data.truth.bp_ids.size(); ++k) {
        groups += (k < data.truth.bp_ids.size() / 2 ? "L2_A\t" : "L2_B\t") + data.truth.bp_ids[k] + "\n";
    }
    run.write("l2_groups.tsv", groups);
    run.write_manifest();
    log << "wrote " << data.dataset.n_cells() << " cells x " << data.dataset.n_genes() << " genes to " << o.out << "\n";
    return 0;
}

inline int cmd_train(const Options& o, std::ostream& log) {
    std::optional<Checkpoint> start;
    if (!o.resume.empty()) {
        start = load_checkpoint(o.resume);
    }
    const auto cfg = start ? effective_config(o, start->config) : effective_config(o);
    if (start) {
        auto same = cfg;
        same.epochs = start->config.epochs;
        if (!(same == start->config)) {
            throw Error(ErrorKind::conflict, "only the epoch count may change when resuming");
        }
    }
    const auto ds = load_expression_file(o.data);
    RunDir run("train", o.out);
    run.input("data", o.data);
    run.set_seed(cfg.seed);
    Checkpoint ckpt;
    try {
        if (start) {
            run.input("resume", o.resume);
            ckpt = resume(std::move(*start), ds, cfg.epochs, &log);
        } else {
            run.input("gmt", o.gmt);
            if (!o.parents.empty()) {
                run.input("parents", o.parents);
            }
            ckpt = train(cfg, ds, load_pathways(o.gmt, o.parents), &log);
        }
    } catch (const TrainingDiverged& e) {
        save_checkpoint(e.last_good(), run.file("last_good.ckpt"));
        log << "training diverged; last good checkpoint written to " << run.file("last_good.ckpt") << "\n";
        throw;
    }
    run.set_config(write_config(ckpt.config));
    run.write("config.cfg", write_config(ckpt.config));
    run.write("model.ckpt", serialize_checkpoint(ckpt));
    run.write("loss.tsv", loss_tsv(ckpt));
    run.note("epochs_completed", ckpt.epoch);
    run.write_manifest();
    return 0;
}

inline MetricsOptions metrics_options(const Options& o) {
    MetricsOptions mo;
    mo.hits_n = o.hits_n;
    mo.factor_map.top_fraction = o.top_fraction;
    mo.factor_map.fdr = o.fdr;
    return mo;
}

inline int cmd_eval(const Options& o, const std::string& name, std::ostream& log) {
    const auto ckpt = load_checkpoint(o.ckpt);
    const auto ds = load_expression_file(o.data);
    Rng rng = Rng::substream(*o.seed, "eval");
    const auto rep = compute_metrics(ckpt.model, ds, rng, metrics_options(o));
    RunDir run(name, o.out);
    run.input("ckpt", o.ckpt);
    run.input("data", o.data);
    run.set_seed(*o.seed);
    run.set_config(write_config(ckpt.config));
    run.write("da.tsv", to_text([&](std::ostream& s) { write_da_tsv(s, rep); }));
    run.write("hits_dar.tsv", to_text([&](std::ostream& s) { write_hits_dar_tsv(s, rep); }));
    run.write("heads.tsv", to_text([&](std::ostream& s) { write_heads_tsv(s, rep); }));
    run.write("factor_map.tsv", to_text([&](std::ostream& s) { write_factor_map_tsv(s, rep); }));
    run.write("doubles.tsv", to_text([&](std::ostream& s) { write_doubles_tsv(s, rep); }));
    const auto summary = metrics_summary(rep);
    run.write("summary.json", summary.dump(2) + "\n");
    run.write_manifest();
    log << "mean hits@" << o.hits_n << " " << summary["mean_hits"].get<double>() << ", sparsity " << rep.sparsity << "\n";
    return 0;
}

inline int cmd_identity(const Options& o, std::ostream& log) {
    const auto ckpt = load_checkpoint(o.ckpt);
    const auto ds = load_expression_file(o.data);
    Rng rng = Rng::substream(*o.seed, "identity");
    const auto res = identity_check(ckpt.model, identity_groups(ds), o.draws, rng);
    RunDir run("analyze identity", o.out);
    run.input("ckpt", o.ckpt);
    run.input("data", o.data);
    run.set_seed(*o.seed);
    std::ostringstream t, r;
    t << "group\tfactor\tlhs\trhs\n";
    r << "group\tn_cells\tpearson\n";
    for (const auto& g : res) {
        for (std::size_t j = 0; j < g.lhs.size(); ++j) {
            t << g.group << '\t' << j << '\t' << format_double(g.lhs[j]) << '\t' << format_double(g.rhs[j]) << '\n';
        }
        r << g.group << '\t' << g.n_cells << '\t' << format_double(g.pearson) << '\n';
        log << g.group << " r = " << g.pearson << "\n";
    }
    run.write("identity.tsv", t.str());
    run.write("identity_r.tsv", r.str());
    run.note("draws", o.draws);
    run.write_manifest();
    return 0;
}

inline int cmd_edges(const Options& o, std::ostream& log) {
    std::vector<Tensor> as;
    RunDir run("analyze edges", o.out);
    for (const auto& path : o.ckpts) {
        as.push_back(load_checkpoint(path).model.params.at("causal.A"));
        run.input("ckpt", path);
    }
    const auto rob = edge_robustness(as);
    std::ostringstream e, c;
    e << "from\tto\tmean\tstd\tpositive\tnegative\tzero\tconsistency\tstability\n";
    for (const auto& x : rob.edges) {
        e << x.from << '\t' << x.to << '\t' << format_double(x.mean) << '\t' << format_double(x.std) << '\t' << x.positive << '\t' << x.negative << '\t'
          << x.zero << '\t' << format_double(x.consistency) << '\t' << (std::isinf(x.stability) ? std::string("inf") : format_double(x.stability)) << '\n';
    }
    c << "consistency\tcumulative_fraction\n";
    for (const auto& [v, f] : rob.consistency_ecdf) {
        c << format_double(v) << '\t' << format_double(f) << '\n';
    }
    run.write("edges.tsv", e.str());
    run.write("consistency_ecdf.tsv", c.str());
    run.write_manifest();
    log << rob.edges.size() << " edges over " << rob.runs << " runs\n";
    return 0;
}

inline int cmd_l2bp(const Options& o, std::ostream& log) {
    const auto ckpt = load_checkpoint(o.ckpt);
    const auto ds = load_expression_file(o.data);
    const auto groups = filter_l2_groups(parse_l2_groups_file(o.groups), ckpt.model.bp_ids, o.min_members);
    Rng rng = Rng::substream(*o.seed, "l2bp");
    const auto mode = o.weighted ? ContributionMode::weighted : ContributionMode::literal;
    const auto agg = l2_permutation_test(l2_inputs(ckpt.model, ds.values), groups, o.n_perm, rng, mode);
    RunDir run("analyze l2bp", o.out);
    run.input("ckpt", o.ckpt);
    run.input("data", o.data);
    run.input("groups", o.groups);
    run.set_seed(*o.seed);
    std::ostringstream t;
    t << "group\tfactor\tsize\tcontribution\tp_value\tbonferroni\tstatus\n";
    for (const auto& r : agg.rows) {
        const char* status = r.skipped ? "skipped" : (r.undefined ? "undefined" : "tested");
        t << r.group << '\t' << r.factor << '\t' << r.size << '\t' << (std::isnan(r.contribution) ? std::string("nan") : format_double(r.contribution)) << '\t'
          << format_double(r.p_value) << '\t' << format_double(r.corrected) << '\t' << status << '\n';
    }
    run.write("l2bp.tsv", t.str());
    run.note("mode", o.weighted ? "weighted" : "literal");
    run.note("dropped_groups", agg.groups.dropped);
    run.note("n_perm", o.n_perm);
    run.write_manifest();
    log << agg.groups.groups.size() << " groups tested, " << agg.groups.dropped.size() << " dropped\n";
    return 0;
}

struct GraphEdge {
    std::size_t from = 0, to = 0;
    double weight = 0.0;
};

/**
 * The `top` largest-|weight| strict-upper entries of A with |weight| > threshold, largest first
 * (ties by position).
 */
inline std::vector<GraphEdge> top_edges(const Tensor& a, std::size_t top, double threshold) {
    std::vector<GraphEdge> all;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = i + 1; j < a.cols(); ++j) {
            if (a(i, j) != 0.0 && std::abs(a(i, j)) > threshold) {
                all.push_back({i, j, a(i, j)});
            }
        }
    }
    std::stable_sort(all.begin(), all.end(), [](const GraphEdge& x, const GraphEdge& y) { return std::abs(x.weight) > std::abs(y.weight); });
    if (all.size() > top) {
        all.resize(top);
    }
    return all;
}

inline int cmd_export_graph(const Options& o, std::ostream& log) {
    const auto ckpt = load_checkpoint(o.ckpt);
    const auto& m = ckpt.model;
    RunDir run("export-graph", o.out);
    run.input("ckpt", o.ckpt);
    const std::size_t d = m.latent_dim();
    std::vector<std::vector<std::string>> bps(d), perts(d);
    const Tensor targets = intervention_targets(m);
    for (std::size_t p = 0; p < m.n_perturbations(); ++p) {
        auto r = targets.row_span(p);
        perts[static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin())].push_back(m.perturbations[p]);
    }
    if (!o.data.empty()) {
        run.input("data", o.data);
        const auto ds = load_expression_file(o.data);
        std::vector<DAReport> reps;
        for (const auto& [l, cells] : split_dataset(ds).singles) {
            if (cells.size() >= 2) {
                reps.push_back(differential_activation(m, ds, l));
            }
        }
        FactorMapOptions fo;
        fo.top_fraction = o.top_fraction;
        fo.fdr = o.fdr;
        for (const auto& a : map_bps_to_factors(m, reps, fo)) {
            if (a.assigned) {
                bps[a.factor].push_back(a.bp_id);
            }
        }
    }
    const auto edges = top_edges(m.params.at("causal.A"), o.top_edges, o.threshold);
    nlohmann::ordered_json j;
    j["format"] = "sena-graph";
    j["latent_dim"] = d;
    nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
    for (std::size_t f = 0; f < d; ++f) {
        nodes.push_back({{"id", "U" + std::to_string(f)}, {"factor", f}, {"bps", bps[f]}, {"perturbations", perts[f]}, {"n_perturbations", perts[f].size()}});
    }
    j["nodes"] = nodes;
    nlohmann::ordered_json ej = nlohmann::ordered_json::array();
    std::ostringstream dot;
    dot << "digraph causal {\n  rankdir=LR;\n";
    for (std::size_t f = 0; f < d; ++f) {
        std::string label = "U" + std::to_string(f) + "\\n" + std::to_string(perts[f].size()) + " perturbations";
        for (const auto& b : bps[f]) {
            label += "\\n" + b;
        }
        dot << "  U" << f << " [shape=box, label=\"" << label << "\"];\n";
    }
    for (const auto& e : edges) {
        ej.push_back({{"from", "U" + std::to_string(e.from)}, {"to", "U" + std::to_string(e.to)}, {"weight", e.weight}, {"sign", e.weight > 0 ? "+" : "-"}});
        dot << "  U" << e.from << " -> U" << e.to << " [label=\"" << format_double(e.weight) << "\", color=" << (e.weight > 0 ? "darkgreen" : "red")
            << "];\n";
    }
    dot << "}\n";
    j["edges"] = ej;
    run.write("graph.json", j.dump(2) + "\n");
    run.write("graph.dot", dot.str());
    run.note("top_edges", o.top_edges);
    run.write_manifest();
    log << edges.size() << " edges exported\n";
    return 0;
}

inline int cmd_check_grad(const Options& o, std::ostream& log) {
    auto cfg = effective_config(o);
    auto ds = load_expression_file(o.data);
    Trainer trainer(cfg, ds, load_pathways(o.gmt, o.parents), &log);
    for (std::size_t e = 0; e < o.warmup; ++e) {
        trainer.run_epoch();
    }
    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < std::min(trainer.n_controls(), cfg.batch_size); ++i) {
        positions.push_back(i);
    }
    const auto batch = trainer.make_batch(positions);
    Tape tape;
    TapeBackend be{tape};
    auto p = tape_values(tape, trainer.model());
    auto obj = build_objective(be, trainer.model(), p, batch, cfg.loss_weights(), cfg.mmd_options());
    const auto report = check_gradients(tape, obj.total, o.tol, o.fd_step);
    RunDir run("check-grad", o.out);
    run.input("data", o.data);
    run.input("gmt", o.gmt);
    run.set_seed(cfg.seed);
    run.set_config(write_config(cfg));
    std::ostringstream t;
    t << "group\tcoordinates\tmax_relative_error\tviolations\n";
    for (const auto& g : report.groups) {
        t << g.group << '\t' << g.coordinates << '\t' << format_double(g.max_relative_error) << '\t' << g.violations << '\n';
        log << g.group << " max rel err " << g.max_relative_error << "\n";
    }
    run.write("gradcheck.tsv", t.str());
    run.note("tolerance", o.tol);
    run.note("warmup_epochs", o.warmup);
    run.note("passed", report.passed());
    run.write_manifest();
    if (!report.passed()) {
        log << "gradient check failed: max relative error " << report.max_relative_error() << " exceeds " << o.tol << "\n";
        return 2;
    }
    return 0;
}

/**
 * Parse and dispatch one command. Diagnostics go to `err`, progress to `log`.
 */
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Pathway-informed causal representation learning for perturbation data"};
    app.require_subcommand(1);
    app.footer(config_help());
    Options o;

    auto seed_opt = [&](CLI::App* c, bool required) {
        auto* opt = c->add_option("--seed", o.seed, "Seed of every random stream");
        if (required) {
            opt->required();
        }
    };
    auto train_opts = [&](CLI::App* c) {
        c->add_option("--config", o.config, "Config file")->check(CLI::ExistingFile);
        c->add_option("--set", o.sets, "Override a config key (key=value), repeatable");
        c->add_option("--epochs", o.epochs, "Epochs");
        c->add_option("--lambda", o.lambda, "Soft-mask value outside gene sets");
        c->add_option("--latent-dim", o.latent_dim, "Latent dimension");
        c->add_option("--batch-size", o.batch_size, "Control cells per batch");
        c->add_option("--learning-rate", o.learning_rate, "Adam step size");
        c->add_option("--encoder-variant", o.variant, "sena | sena_delta | mlp | mlp_l1");
    };

    auto* synth = app.add_subcommand("synth", "Generate a synthetic interventional dataset");
    synth->add_option("--out", o.out, "Output directory")->required();
    synth->add_option("--n-controls", o.n_controls, "Control cells");
    synth->add_option("--cells", o.cells, "Cells per perturbation");
    seed_opt(synth, true);

    auto* trainc = app.add_subcommand("train", "Train a model");
    trainc->add_option("--data", o.data, "Expression TSV")->required()->check(CLI::ExistingFile);
    trainc->add_option("--gmt", o.gmt, "Gene sets (GMT)")->check(CLI::ExistingFile);
    trainc->add_option("--parents", o.parents, "Gene-set parent relations (child<TAB>parent)")->check(CLI::ExistingFile);
    trainc->add_option("--resume", o.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
    trainc->add_option("--out", o.out, "Run directory")->required();
    train_opts(trainc);
    seed_opt(trainc, true);

    auto* evalc = app.add_subcommand("eval", "Compute interpretability and prediction metrics");
    auto metric_opts = [&](CLI::App* c) {
        c->add_option("--ckpt", o.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
        c->add_option("--data", o.data, "Expression TSV")->required()->check(CLI::ExistingFile);
        c->add_option("--out", o.out, "Output directory (default: <checkpoint dir>/<command>)");
        c->add_option("--hits-n", o.hits_n, "N of Hits@N");
        c->add_option("--top-fraction", o.top_fraction, "DA magnitude gate of the factor mapping");
        c->add_option("--fdr", o.fdr, "FDR gate of the factor mapping");
        seed_opt(c, true);
    };
    metric_opts(evalc);

    auto* analyze = app.add_subcommand("analyze", "Post-hoc analyses");
    analyze->require_subcommand(1);
    auto* identity = analyze->add_subcommand("identity", "Check E(U) against the closed form");
    identity->add_option("--ckpt", o.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    identity->add_option("--data", o.data, "Expression TSV")->required()->check(CLI::ExistingFile);
    identity->add_option("--out", o.out, "Output directory (default: <checkpoint dir>/<command>)");
    identity->add_option("--draws", o.draws, "Monte-Carlo draws per cell");
    seed_opt(identity, true);
    auto* edges = analyze->add_subcommand("edges", "Edge consistency and stability across runs");
    edges->add_option("--ckpt", o.ckpts, "Checkpoints (two or more)")->required()->check(CLI::ExistingFile);
    edges->add_option("--out", o.out, "Output directory (default: <checkpoint dir>/<command>)");
    auto* l2 = analyze->add_subcommand("l2bp", "Permutation test of gene-set groups on latent factors");
    l2->add_option("--ckpt", o.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    l2->add_option("--data", o.data, "Expression TSV")->required()->check(CLI::ExistingFile);
    l2->add_option("--groups", o.groups, "Groups file (l2_id<TAB>bp_id)")->required()->check(CLI::ExistingFile);
    l2->add_option("--out", o.out, "Output directory (default: <checkpoint dir>/<command>)");
    l2->add_option("--n-perm", o.n_perm, "Permutations");
    l2->add_option("--min-members", o.min_members, "Smallest group kept");
    l2->add_flag("--weighted", o.weighted, "Weight member activities by the mean-head weights");
    seed_opt(l2, true);
    auto* metrics = analyze->add_subcommand("metrics", "Same as eval");
    metric_opts(metrics);

    auto* graph = app.add_subcommand("export-graph", "Export the causal graph as JSON and DOT");
    graph->add_option("--ckpt", o.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    graph->add_option("--data", o.data, "Expression TSV for the gene-set mapping")->check(CLI::ExistingFile);
    graph->add_option("--out", o.out, "Output directory (default: <checkpoint dir>/<command>)");
    graph->add_option("--top-edges", o.top_edges, "Largest edges kept");
    graph->add_option("--threshold", o.threshold, "Smallest |weight| kept");
    graph->add_option("--top-fraction", o.top_fraction, "DA magnitude gate of the factor mapping");
    graph->add_option("--fdr", o.fdr, "FDR gate of the factor mapping");

    auto* grad = app.add_subcommand("check-grad", "Compare tape gradients with central differences");
    grad->add_option("--data", o.data, "Expression TSV")->required()->check(CLI::ExistingFile);
    grad->add_option("--gmt", o.gmt, "Gene sets (GMT)")->required()->check(CLI::ExistingFile);
    grad->add_option("--parents", o.parents, "Gene-set parent relations")->check(CLI::ExistingFile);
    grad->add_option("--out", o.out, "Output directory")->required();
    grad->add_option("--tol", o.tol, "Relative error tolerance");
    grad->add_option("--step", o.fd_step, "Finite-difference step");
    grad->add_option("--warmup-epochs", o.warmup, "Epochs trained before checking (the shift starts at zero, which zeroes the target gradients)");
    train_opts(grad);
    seed_opt(grad, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    auto default_out = [&](const char* sub) {
        if (o.out.empty()) {
            const std::string& ck = o.ckpt.empty() ? o.ckpts.front() : o.ckpt;
            o.out = (std::filesystem::path(ck).parent_path() / sub).string();
        }
    };
    if (*evalc) default_out("eval");
    if (*identity) default_out("identity");
    if (*edges) default_out("edges");
    if (*l2) default_out("l2bp");
    if (*metrics) default_out("metrics");
    if (*graph) default_out("graph");

    try {
        if (*synth) return cmd_synth(o, err);
        if (*trainc) {
            if (o.gmt.empty() && o.resume.empty()) {
                throw Error(ErrorKind::validation, "train needs --gmt (or --resume)");
            }
            return cmd_train(o, err);
        }
        if (*evalc) return cmd_eval(o, "eval", err);
        if (*identity) return cmd_identity(o, err);
        if (*edges) return cmd_edges(o, err);
        if (*l2) return cmd_l2bp(o, err);
        if (*metrics) return cmd_eval(o, "analyze metrics", err);
        if (*graph) return cmd_export_graph(o, err);
        if (*grad) return cmd_check_grad(o, err);
    } catch (const Error& e) {
        err << "sena: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        err << "sena: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

}

#endif

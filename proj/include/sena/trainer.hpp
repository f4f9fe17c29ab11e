#ifndef SENA_TRAINER_HPP
#define SENA_TRAINER_HPP

#include "config.hpp"
#include "data.hpp"
#include "losses.hpp"
#include "model.hpp"
#include "optimizer.hpp"
#include "pathways.hpp"
#include "rng.hpp"

#include <cmath>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

/**
 * @file trainer.hpp
 * @brief Minibatch objective, the deterministic training loop and training checkpoints.
 *
 * Reconstruction and the variational term only see control cells. Each perturbation's
 * interventional distribution is generated from the control batch and matched to observed
 * cells of that perturbation.
 */

namespace sena {

/**
 * @brief Inputs of one optimization step.
 */
struct TrainBatch {
    Tensor x_control;
    Tensor eps;

    /** Observed cells per single perturbation, in fixed label order. */
    std::vector<std::pair<PerturbationLabel, Tensor>> observed;
};

template<typename Backend_>
struct Objective {
    typename Backend_::Value mse, kld, mmd, l1, ell1, total;
    bool has_mmd = false;
    bool has_ell1 = false;
    std::vector<double> bandwidths;
};

/**
 * Full training objective for one batch on either backend.
 *
 * Kernel bandwidths are resolved from the current values and enter the graph as constants.
 */
template<typename Backend_>
Objective<Backend_> build_objective(Backend_& be, const Model& m, const ParamValues<Backend_>& p, const TrainBatch& batch, const LossWeights& w,
    const MmdOptions& mmd_opt) {
    using V = typename Backend_::Value;
    Objective<Backend_> out;
    const std::size_t rows = batch.x_control.rows();
    const std::vector<PerturbationLabel> ctrl(rows);
    V x = be.constant(batch.x_control);
    auto f = graph::forward(be, m, p, x, ctrl, batch.eps, m.config.train_temperature);
    out.mse = loss::mse(be, f.x_hat, x);
    out.kld = loss::kld(be, f.mu, f.logvar);
    out.l1 = loss::l1_adjacency(be, p["causal.A"]);
    V total = be.add(out.mse, be.scale(out.kld, w.beta_kld));
    total = be.add(total, be.scale(out.l1, w.rho_l1));

    if (w.gamma_mmd > 0.0 && !batch.observed.empty()) {
        out.has_mmd = true;
        V acc;
        bool first = true;
        for (const auto& [label, obs] : batch.observed) {
            const std::vector<PerturbationLabel> labels(rows, label);
            auto z_int = graph::intervene(be, m, p, f.z, labels, m.config.train_temperature);
            auto x_gen = graph::decode(be, m, p, be.matmul(z_int, f.L));
            const Tensor& gen = be.value(x_gen);
            const double bw = resolve_bandwidth(gen, obs, mmd_opt);
            out.bandwidths.push_back(bw);
            const bool unbiased = mmd_opt.estimator == MmdEstimator::unbiased && gen.rows() >= 2 && obs.rows() >= 2;
            auto term = loss::mmd(be, x_gen, be.constant(obs), bw, unbiased);
            acc = first ? term : be.add(acc, term);
            first = false;
        }
        out.mmd = be.scale(acc, 1.0 / static_cast<double>(batch.observed.size()));
        total = be.add(total, be.scale(out.mmd, w.gamma_mmd));
    }
    if (w.ell1_encoder > 0.0) {
        out.has_ell1 = true;
        out.ell1 = loss::l1(be, p["encoder.W"]);
        total = be.add(total, be.scale(out.ell1, w.ell1_encoder));
    }
    out.total = total;
    return out;
}

struct EpochRecord {
    std::size_t epoch = 0;
    LossParts parts;
    double total = 0.0;
    bool operator==(const EpochRecord& o) const {
        return epoch == o.epoch && parts.mse == o.parts.mse && parts.kld == o.parts.kld && parts.mmd == o.parts.mmd && parts.l1 == o.parts.l1 &&
            parts.ell1 == o.parts.ell1 && total == o.total;
    }
};

/**
 * @brief Complete training state at an epoch boundary.
 */
struct Checkpoint {
    TrainConfig config;
    Model model;
    AdamState adam;
    std::size_t epoch = 0;
    std::string rng_main;
    std::string rng_pert;
    std::vector<EpochRecord> history;

    bool operator==(const Checkpoint& o) const {
        return config == o.config && model == o.model && adam == o.adam && epoch == o.epoch && rng_main == o.rng_main && rng_pert == o.rng_pert &&
            history == o.history;
    }
};

/**
 * Raised when a loss component stops being finite; carries the last completed-epoch state.
 */
class TrainingDiverged : public Error {
public:
    TrainingDiverged(const std::string& msg, Checkpoint last_good)
        : Error(ErrorKind::diverged, msg), last_good_(std::make_shared<Checkpoint>(std::move(last_good))) {}
    const Checkpoint& last_good() const { return *last_good_; }

private:
    std::shared_ptr<Checkpoint> last_good_;
};

struct StepResult {
    LossParts parts;
    double total = 0.0;
    std::map<std::string, Tensor> grads;
};

/** Target genes of the single perturbations present in a dataset, ascending. */
inline std::vector<std::string> single_targets(const ExpressionDataset& ds) {
    std::set<std::string> genes;
    for (const auto& l : ds.labels) {
        if (l.order() == 1) {
            genes.insert(*l.targets.begin());
        }
    }
    return {genes.begin(), genes.end()};
}

/**
 * @brief Deterministic minibatch optimizer over one dataset.
 */
class Trainer {
public:
    Trainer(const TrainConfig& config, const ExpressionDataset& ds, const PathwayDatabase& db, std::ostream* log = nullptr) : ds_(ds) {
        config.validate();
        auto selected = select_bps(db, ds.gene_set(), config.selection(), log);
        Checkpoint c;
        c.config = config;
        c.model = create_model(config.model_config(), ds.genes, selected, single_targets(ds), config.seed);
        c.adam = AdamState::zeros_like(c.model.params);
        c.rng_main = Rng::substream(config.seed, "train-main").state();
        c.rng_pert = Rng::substream(config.seed, "train-perturbed").state();
        state_ = std::move(c);
        bind();
    }

    Trainer(Checkpoint ckpt, const ExpressionDataset& ds) : ds_(ds), state_(std::move(ckpt)) {
        state_.config.validate();
        if (ds.genes != state_.model.genes) {
            throw Error(ErrorKind::validation, "dataset genes differ from the checkpoint's gene list");
        }
        if (single_targets(ds) != state_.model.perturbations) {
            throw Error(ErrorKind::validation, "dataset single perturbations differ from the checkpoint's perturbation list");
        }
        bind();
    }

    /** Current parameters, which run ahead of `state()` inside an epoch. */
    const Model& model() const { return model_; }
    const Checkpoint& state() const { return state_; }
    std::size_t n_controls() const { return split_.controls.size(); }

    /**
     * Batch from control positions (indices into the control list); draws the noise from the
     * main stream and the observed perturbed cells from the perturbation stream.
     */
    TrainBatch make_batch(const std::vector<std::size_t>& positions) {
        TrainBatch b;
        std::vector<std::size_t> rows;
        for (auto pos : positions) {
            rows.push_back(split_.controls.at(pos));
        }
        b.x_control = ds_.rows(rows);
        b.eps = draw_normal(rows.size(), model_.latent_dim(), main_);
        if (state_.config.gamma_mmd > 0.0) {
            for (const auto& [label, cells] : split_.singles) {
                auto order = cells;
                pert_.shuffle(order);
                order.resize(std::min(order.size(), state_.config.batch_size));
                b.observed.emplace_back(label, ds_.rows(order));
            }
        }
        return b;
    }

    StepResult evaluate(const TrainBatch& batch, bool want_grad) const {
        const auto w = state_.config.loss_weights();
        const auto opt = state_.config.mmd_options();
        StepResult r;
        auto read = [&](auto& be, const auto& obj) {
            r.parts.mse = be.value(obj.mse).item();
            r.parts.kld = be.value(obj.kld).item();
            r.parts.l1 = be.value(obj.l1).item();
            r.parts.mmd = obj.has_mmd ? be.value(obj.mmd).item() : 0.0;
            r.parts.ell1 = obj.has_ell1 ? be.value(obj.ell1).item() : 0.0;
            r.total = be.value(obj.total).item();
        };
        if (!want_grad) {
            EagerBackend be;
            auto obj = build_objective(be, model_, eager_values(model_), batch, w, opt);
            read(be, obj);
            return r;
        }
        Tape tape;
        TapeBackend be{tape};
        auto p = tape_values(tape, model_);
        auto obj = build_objective(be, model_, p, batch, w, opt);
        read(be, obj);
        auto g = tape.gradient(obj.total);
        for (const auto& [name, var] : p.values) {
            r.grads[name] = std::move(g.at(var.id));
        }
        return r;
    }

    /** One pass over the shuffled controls; returns the epoch's mean losses. */
    EpochRecord run_epoch() {
        const auto& cfg = state_.config;
        std::vector<std::size_t> order(split_.controls.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        main_.shuffle(order);
        EpochRecord rec;
        rec.epoch = state_.epoch + 1;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            auto batch = make_batch({order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(stop)});
            auto r = evaluate(batch, true);
            for (double v : {r.parts.mse, r.parts.kld, r.parts.mmd, r.parts.l1, r.parts.ell1, r.total}) {
                if (!std::isfinite(v)) {
                    throw TrainingDiverged("non-finite loss at epoch " + std::to_string(rec.epoch) + ", batch " + std::to_string(batches + 1), state_);
                }
            }
            for (const auto& [name, g] : r.grads) {
                if (!g.all_finite()) {
                    throw TrainingDiverged("non-finite gradient for " + name + " at epoch " + std::to_string(rec.epoch), state_);
                }
            }
            adam_step(model_.params, r.grads, adam_, cfg.learning_rate);
            rec.parts.mse += r.parts.mse;
            rec.parts.kld += r.parts.kld;
            rec.parts.mmd += r.parts.mmd;
            rec.parts.l1 += r.parts.l1;
            rec.parts.ell1 += r.parts.ell1;
            rec.total += r.total;
            ++batches;
        }
        const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(batches, 1));
        rec.parts.mse *= inv;
        rec.parts.kld *= inv;
        rec.parts.mmd *= inv;
        rec.parts.l1 *= inv;
        rec.parts.ell1 *= inv;
        rec.total *= inv;
        state_.model.params = model_.params;
        state_.adam = adam_;
        state_.epoch = rec.epoch;
        state_.rng_main = main_.state();
        state_.rng_pert = pert_.state();
        state_.history.push_back(rec);
        return rec;
    }

    /** Run until `config.epochs` epochs are complete. */
    const Checkpoint& run(std::ostream* log = nullptr) {
        while (state_.epoch < state_.config.epochs) {
            auto rec = run_epoch();
            if (log) {
                *log << "epoch " << rec.epoch << " total " << rec.total << " mse " << rec.parts.mse << " kld " << rec.parts.kld << " mmd " << rec.parts.mmd
                     << " l1 " << rec.parts.l1 << "\n";
            }
        }
        return state_;
    }

private:
    void bind() {
        split_ = split_dataset(ds_);
        if (split_.controls.empty()) {
            throw Error(ErrorKind::contract, "training needs control cells");
        }
        if (state_.config.gamma_mmd > 0.0 && split_.singles.empty()) {
            throw Error(ErrorKind::contract, "gamma_mmd > 0 needs single-perturbation cells");
        }
        main_.set_state(state_.rng_main);
        pert_.set_state(state_.rng_pert);
        model_ = state_.model;
        adam_ = state_.adam;
    }

    const ExpressionDataset& ds_;
    Checkpoint state_;
    DatasetSplit split_;
    Rng main_;
    Rng pert_;
    Model model_;
    AdamState adam_;
};

/**
 * Train from scratch for `config.epochs` epochs.
 */
inline Checkpoint train(const TrainConfig& config, const ExpressionDataset& ds, const PathwayDatabase& db, std::ostream* log = nullptr) {
    Trainer t(config, ds, db, log);
    return t.run(log);
}

/**
 * Continue a checkpoint until `total_epochs` epochs are complete.
 */
inline Checkpoint resume(Checkpoint ckpt, const ExpressionDataset& ds, std::size_t total_epochs, std::ostream* log = nullptr) {
    ckpt.config.epochs = total_epochs;
    Trainer t(std::move(ckpt), ds);
    return t.run(log);
}

}

#endif

#include "gradmesh/harness.hpp"

#include "gradmesh/errors.hpp"
#include "gradmesh/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

namespace gradmesh {

void ExperimentConfig::validate() const {
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (batches_per_worker < 1) throw ConfigError("batches_per_worker must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (tau < 0.0) throw ConfigError("tau must be >= 0");
    if (classes < 2) throw ConfigError("classes must be >= 2");
    if (features < 1) throw ConfigError("features must be >= 1");
    if (minibatches_per_round < 1) throw ConfigError("minibatches_per_round must be >= 1");
    if (batches_per_worker % minibatches_per_round != 0)
        throw ConfigError("minibatches_per_round must divide batches_per_worker");
    if (!(ram_mb_assumed > 0.0)) throw ConfigError("ram_mb must be positive");
    if (!(compute_rate > 0.0)) throw ConfigError("compute_rate must be positive");
    if (poll_budget < 1) throw ConfigError("poll_budget must be >= 1");
    if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
    const Eigen::Index needed =
        static_cast<Eigen::Index>(workers) * batches_per_worker * batch_size;
    if (needed > dataset_n)
        throw ConfigError("dataset too small: need " + std::to_string(needed) + " examples, have " +
                          std::to_string(dataset_n));
}

bool early_stop_check(const std::vector<double>& history, int patience, double min_delta) {
    if (patience < 1) throw ConfigError("early-stop patience must be >= 1");
    double best = -std::numeric_limits<double>::infinity();
    int stale = 0;
    for (double acc : history) {
        if (acc > best + min_delta) {
            best = acc;
            stale = 0;
        } else {
            ++stale; // improvement below min_delta counts as no improvement
        }
    }
    return stale >= patience;
}

double invocation_duration(Eigen::Index param_dim, Eigen::Index batch_size, double compute_rate,
                           double latency_charges_s) {
    if (!(compute_rate > 0.0)) throw ConfigError("compute_rate must be positive");
    return static_cast<double>(batch_size) * static_cast<double>(param_dim) / compute_rate +
           latency_charges_s;
}

std::string params_digest(const ModelParams& params) {
    const Eigen::VectorXd flat = params.flat();
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(flat.data());
    for (Eigen::Index i = 0; i < flat.size() * 8; ++i) {
        hash ^= bytes[i];
        hash *= 0x100000001b3ULL;
    }
    std::ostringstream out;
    out << std::hex;
    for (int shift = 60; shift >= 0; shift -= 4) out << ((hash >> shift) & 0xF);
    return out.str();
}

double param_distance(const ModelParams& a, const ModelParams& b) {
    const Eigen::VectorXd fa = a.flat();
    const Eigen::VectorXd fb = b.flat();
    if (fa.size() != fb.size()) throw ContractError("parameter vectors of unequal length");
    const double scale = std::max(fb.norm(), 1e-12);
    return (fa - fb).norm() / scale;
}

namespace {

// Per-worker per-round mean gradient; equals the single gradient when
// m == 1. Accumulation order matches the strategies exactly.
GradientVector worker_round_gradient(const ModelParams& params, const MinibatchSchedule& schedule,
                                     int first_batch, int m) {
    std::vector<Eigen::VectorXd> grads;
    grads.reserve(static_cast<std::size_t>(m));
    GradientVector g;
    for (int b = 0; b < m; ++b) {
        g = compute_gradient(params, schedule[static_cast<std::size_t>(first_batch + b)]);
        grads.push_back(g.values);
    }
    g.values = ordered_mean(grads);
    return g;
}

} // namespace

ModelParams oracle_sequential_run(const ExperimentConfig& cfg) {
    return oracle_sequential_run(cfg, cfg.epochs);
}

ModelParams oracle_sequential_run(const ExperimentConfig& cfg, int epochs) {
    cfg.validate();
    const Dataset ds = generate_synthetic_dataset(cfg.dataset_n, cfg.classes, cfg.features,
                                                  cfg.separation, cfg.seed);
    const auto schedules =
        partition_dataset(ds, cfg.workers, cfg.batches_per_worker, cfg.batch_size);
    ModelParams params = init_model(cfg.classes, cfg.features, cfg.seed);

    const int m = cfg.minibatches_per_round;
    const int rounds = cfg.batches_per_worker / m;
    for (int e = 0; e < epochs; ++e) {
        for (int q = 0; q < rounds; ++q) {
            std::vector<Eigen::VectorXd> per_worker;
            per_worker.reserve(static_cast<std::size_t>(cfg.workers));
            for (int w = 0; w < cfg.workers; ++w)
                per_worker.push_back(
                    worker_round_gradient(params, schedules[static_cast<std::size_t>(w)], q * m, m)
                        .values);
            GradientVector step;
            step.classes = cfg.classes;
            step.features = cfg.features;
            step.values = ordered_mean(per_worker);
            params = apply_update(params, step, cfg.lr);
        }
    }
    return params;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();

    const Dataset ds = generate_synthetic_dataset(cfg.dataset_n, cfg.classes, cfg.features,
                                                  cfg.separation, cfg.seed);
    auto schedules = partition_dataset(ds, cfg.workers, cfg.batches_per_worker, cfg.batch_size);
    const ModelParams initial = init_model(cfg.classes, cfg.features, cfg.seed);

    World world(cfg.latency);
    StrategyWorld sw = build_strategy_world(world, cfg.workers);

    std::vector<WorkerState> workers(static_cast<std::size_t>(cfg.workers));
    const Eigen::VectorXd zero_residual = Eigen::VectorXd::Zero(initial.dim());
    for (int w = 0; w < cfg.workers; ++w) {
        auto& worker = workers[static_cast<std::size_t>(w)];
        worker.worker_id = w;
        worker.local_db = &world.make_kv(SubstrateClass::LocalDB, w);
        worker.schedule = std::move(schedules[static_cast<std::size_t>(w)]);
        worker.classes = cfg.classes;
        worker.features = cfg.features;
        worker.residual = zero_residual;
        persist_worker_state(worker, initial,
                             cfg.strategy == StrategyKind::MLLessPS ? &zero_residual : nullptr);
    }

    RoundConfig rc;
    rc.lr = cfg.lr;
    rc.tau = cfg.strategy == StrategyKind::MLLessPS ? cfg.tau : 0.0;
    rc.minibatches_per_round =
        cfg.strategy == StrategyKind::SpirtP2P ? cfg.minibatches_per_round : 1;
    rc.mode = cfg.scheduler;
    rc.poll_budget = cfg.poll_budget;
    rc.compute_rate = cfg.compute_rate;
    rc.parallel_invocations = cfg.parallel_invocations;

    const int rounds_per_epoch = cfg.batches_per_worker / rc.minibatches_per_round;

    ExperimentResult result;
    result.config = cfg;
    std::vector<double> accuracy_history;
    ModelParams current = initial;

    for (int e = 0; e < cfg.epochs; ++e) {
        const TrafficCounters before = world.traffic_snapshot();
        std::vector<double> clock_start(workers.size());
        std::vector<double> wait_start(workers.size());
        for (std::size_t i = 0; i < workers.size(); ++i) {
            clock_start[i] = workers[i].clock.now;
            wait_start[i] = workers[i].clock.sync_wait;
        }

        RoundOutcome last;
        for (int q = 0; q < rounds_per_epoch; ++q) {
            rc.first_batch_index = q * rc.minibatches_per_round;
            last = run_round(cfg.strategy, workers, sw, rc);
        }
        current = last.updated.front();

        EpochMetrics em;
        em.epoch = e;
        em.train_accuracy = evaluate_accuracy(current, ds);
        em.mean_loss = evaluate_loss(current, ds);
        em.traffic_delta = world.traffic_snapshot().delta_since(before);

        double max_epoch_time = 0.0;
        double mean_invocation = 0.0;
        double wait_total = 0.0;
        for (std::size_t i = 0; i < workers.size(); ++i) {
            const double epoch_time = workers[i].clock.now - clock_start[i];
            max_epoch_time = std::max(max_epoch_time, epoch_time);
            mean_invocation += epoch_time / static_cast<double>(cfg.batches_per_worker);
            wait_total += workers[i].clock.sync_wait - wait_start[i];
        }
        mean_invocation /= static_cast<double>(workers.size());
        em.sim_time_total_s = max_epoch_time;
        em.sim_time_per_invocation_s = mean_invocation;
        em.sync_wait_total_s = wait_total;

        em.cost = cfg.deployment == Deployment::Serverless
                      ? build_cost_report(mean_invocation, cfg.ram_mb_assumed,
                                          cfg.batches_per_worker, cfg.workers, cfg.pricing,
                                          Deployment::Serverless)
                      : build_cost_report(max_epoch_time, cfg.ram_mb_assumed, 1, cfg.workers,
                                          cfg.pricing, Deployment::Gpu);

        result.epochs.push_back(em);
        accuracy_history.push_back(em.train_accuracy);
        if (cfg.early_stop && early_stop_check(accuracy_history, cfg.early_stop_patience,
                                               cfg.early_stop_min_delta)) {
            result.early_stopped = true;
            break;
        }
    }

    result.final_accuracy = accuracy_history.back();
    result.final_params_digest = params_digest(current);
    result.oracle_divergence =
        param_distance(current, oracle_sequential_run(cfg, static_cast<int>(result.epochs.size())));
    return result;
}

} // namespace gradmesh

#include "gradmesh/strategies.hpp"

#include "gradmesh/errors.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <thread>

namespace gradmesh {

const char* strategy_name(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::SpirtP2P: return "SPIRT";
        case StrategyKind::MLLessPS: return "MLLess";
        case StrategyKind::ScatterReduce: return "ScatterReduce";
        case StrategyKind::AllReduce: return "AllReduce";
        case StrategyKind::SharedStoreBaseline: return "SharedStoreBaseline";
    }
    return "unknown";
}

std::optional<StrategyKind> parse_strategy(const std::string& name) {
    std::string lower;
    lower.reserve(name.size());
    for (char c : name) lower.push_back(static_cast<char>(std::tolower(c)));
    if (lower == "spirt" || lower == "spirtp2p") return StrategyKind::SpirtP2P;
    if (lower == "mlless" || lower == "mllessps") return StrategyKind::MLLessPS;
    if (lower == "scatterreduce" || lower == "scatter-reduce") return StrategyKind::ScatterReduce;
    if (lower == "allreduce" || lower == "all-reduce") return StrategyKind::AllReduce;
    if (lower == "sharedstore" || lower == "sharedstorebaseline" || lower == "gpu")
        return StrategyKind::SharedStoreBaseline;
    return std::nullopt;
}

ChunkAssignment ChunkAssignment::build(Eigen::Index total_dims, int workers) {
    if (workers < 1) throw ConfigError("chunking needs at least one worker");
    if (static_cast<Eigen::Index>(workers) > total_dims)
        throw ConfigError("more chunks than gradient dimensions; empty chunks are forbidden");
    ChunkAssignment a;
    a.total_dims = total_dims;
    a.workers = workers;
    const Eigen::Index base = total_dims / workers;
    const Eigen::Index remainder = total_dims % workers;
    Eigen::Index start = 0;
    for (int i = 0; i < workers; ++i) {
        const Eigen::Index len = base + (i < remainder ? 1 : 0);
        a.boundaries.emplace_back(start, start + len);
        start += len;
    }
    return a;
}

std::vector<Eigen::VectorXd> chunk_split(const Eigen::VectorXd& values, int workers) {
    const ChunkAssignment a = ChunkAssignment::build(values.size(), workers);
    std::vector<Eigen::VectorXd> chunks;
    chunks.reserve(static_cast<std::size_t>(workers));
    for (const auto& [start, end] : a.boundaries) chunks.push_back(values.segment(start, end - start));
    return chunks;
}

Eigen::VectorXd chunk_concat(const std::vector<Eigen::VectorXd>& chunks) {
    Eigen::Index total = 0;
    for (const auto& c : chunks) total += c.size();
    Eigen::VectorXd out(total);
    Eigen::Index at = 0;
    for (const auto& c : chunks) {
        out.segment(at, c.size()) = c;
        at += c.size();
    }
    return out;
}

bool significance_test(const GradientVector& update, const ModelParams& params, double tau) {
    if (update.dim() != params.dim())
        throw ContractError("significance test over mismatched dimensions");
    constexpr double kEps = 1e-12;
    return update.values.norm() / (params.flat().norm() + kEps) > tau;
}

StrategyWorld build_strategy_world(World& world, int workers) {
    StrategyWorld sw;
    sw.world = &world;
    sw.shared_kv = &world.make_kv(SubstrateClass::SharedDB);
    sw.object_store = &world.make_object_store();
    sw.notify_queue = &world.make_queue("sync");
    sw.supervisor_queue = &world.make_queue("supervisor");
    for (int w = 0; w < workers; ++w)
        sw.inboxes.push_back(&world.make_queue("inbox/" + std::to_string(w)));
    return sw;
}

namespace {

std::string zpad(std::int64_t v, int width) {
    std::string s = std::to_string(v);
    if (static_cast<int>(s.size()) < width) s.insert(0, static_cast<std::size_t>(width) - s.size(), '0');
    return s;
}

std::string round_key(const char* prefix, std::int64_t round) {
    return std::string(prefix) + "/r" + zpad(round, 6);
}

std::string worker_key(const char* prefix, std::int64_t round, int worker) {
    return round_key(prefix, round) + "/w" + zpad(worker, 4);
}

constexpr const char* kParamsKey = "state/params";
constexpr const char* kResidualKey = "state/residual";

struct Step {
    enum class Role { AllWorkers, MasterOnly, Supervisor };
    Role role = Role::AllWorkers;
    std::function<void(int)> fn;
};

class RoundDriver {
public:
    RoundDriver(StrategyKind kind, std::vector<WorkerState>& workers, StrategyWorld& sw,
                const RoundConfig& cfg)
        : kind_(kind), workers_(workers), sw_(sw), cfg_(cfg),
          worker_count_(static_cast<int>(workers.size())) {
        if (workers_.empty()) throw ConfigError("round needs at least one worker");
        round_ = workers_.front().round;
        for (const auto& w : workers_)
            if (w.round != round_)
                throw ProtocolError(std::string(strategy_name(kind_)) +
                                    ": workers entered a round out of step");
        scratch_.resize(workers_.size());
    }

    RoundOutcome run(std::vector<Step> steps) {
        const TrafficCounters before = sw_.world->traffic_snapshot();
        if (cfg_.mode == SchedulerMode::Deterministic)
            run_deterministic(steps);
        else
            run_concurrent(steps);

        RoundOutcome out;
        out.traffic_delta = sw_.world->traffic_snapshot().delta_since(before);
        for (std::size_t i = 0; i < workers_.size(); ++i) {
            out.aggregated.push_back(scratch_[i].aggregate);
            out.updated.push_back(scratch_[i].updated);
            out.duration_s.push_back(workers_[i].clock.now - scratch_[i].start_clock);
            out.sync_wait_s.push_back(workers_[i].clock.sync_wait - scratch_[i].start_wait);
        }
        return out;
    }

    std::vector<Step> allreduce_steps();
    std::vector<Step> scatterreduce_steps();
    std::vector<Step> spirt_steps();
    std::vector<Step> mlless_steps();
    std::vector<Step> sharedstore_steps();

private:
    struct Scratch {
        GradientVector grad;
        Eigen::VectorXd own_chunk;
        Eigen::VectorXd own_agg_chunk;
        std::map<int, std::string> announced; // MLLess: sender -> store key
        GradientVector aggregate;
        ModelParams updated;
        double start_clock = 0.0;
        double start_wait = 0.0;
    };

    void run_deterministic(const std::vector<Step>& steps) {
        for (const auto& step : steps) {
            switch (step.role) {
                case Step::Role::AllWorkers:
                    for (int w = 0; w < worker_count_; ++w) step.fn(w);
                    break;
                case Step::Role::MasterOnly: step.fn(0); break;
                case Step::Role::Supervisor: step.fn(-1); break;
            }
        }
    }

    void run_concurrent(const std::vector<Step>& steps) {
        const bool has_supervisor = std::any_of(steps.begin(), steps.end(), [](const Step& s) {
            return s.role == Step::Role::Supervisor;
        });
        std::vector<std::exception_ptr> errors(workers_.size() + 1);
        std::vector<std::thread> threads;
        for (int w = 0; w < worker_count_; ++w) {
            threads.emplace_back([&, w] {
                try {
                    for (const auto& step : steps) {
                        if (step.role == Step::Role::AllWorkers ||
                            (step.role == Step::Role::MasterOnly && w == 0))
                            step.fn(w);
                    }
                } catch (...) {
                    errors[static_cast<std::size_t>(w)] = std::current_exception();
                }
            });
        }
        if (has_supervisor) {
            threads.emplace_back([&] {
                try {
                    for (const auto& step : steps)
                        if (step.role == Step::Role::Supervisor) step.fn(-1);
                } catch (...) {
                    errors.back() = std::current_exception();
                }
            });
        }
        for (auto& t : threads) t.join();
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    // Invocation entry: a stateless worker holds nothing in memory, so the
    // model (and the MLLess residual) is reloaded from the durable store.
    void invoke_begin(int w) {
        WorkerState& worker = workers_[static_cast<std::size_t>(w)];
        assert(!worker.params.has_value() && "worker retained state across invocations");
        Scratch& s = scratch_[static_cast<std::size_t>(w)];
        s = Scratch{};
        s.start_clock = worker.clock.now;
        s.start_wait = worker.clock.sync_wait;
        const ActorCtx ctx = worker.ctx();
        worker.params = ModelParams::from_flat(
            deserialize_f64(worker.local_db->get(kParamsKey, ctx)), worker.classes,
            worker.features);
        if (kind_ == StrategyKind::MLLessPS)
            worker.residual = deserialize_f64(worker.local_db->get(kResidualKey, ctx));
    }

    // Invocation exit: persist the updated model (and residual), then drop
    // all in-memory state.
    void invoke_end(int w, const GradientVector& aggregate) {
        WorkerState& worker = workers_[static_cast<std::size_t>(w)];
        Scratch& s = scratch_[static_cast<std::size_t>(w)];
        ModelParams updated = apply_update(*worker.params, aggregate, cfg_.lr);
        const ActorCtx ctx = worker.ctx();
        worker.local_db->put(kParamsKey, serialize_f64(updated.flat()), ctx);
        if (kind_ == StrategyKind::MLLessPS)
            worker.local_db->put(kResidualKey, serialize_f64(worker.residual), ctx);
        s.aggregate = aggregate;
        s.updated = std::move(updated);
        worker.params.reset();
        worker.round += 1;
    }

    const Minibatch& batch_for(int w, int offset) const {
        const WorkerState& worker = workers_[static_cast<std::size_t>(w)];
        const std::size_t index = static_cast<std::size_t>(cfg_.first_batch_index + offset);
        if (index >= worker.schedule.size())
            throw ConfigError("round asks for batch " + std::to_string(index) +
                              " beyond the worker schedule");
        return worker.schedule[index];
    }

    GradientVector compute_charged(int w, const Minibatch& batch, bool charge) {
        WorkerState& worker = workers_[static_cast<std::size_t>(w)];
        if (charge)
            worker.clock.now += static_cast<double>(batch.size()) *
                                static_cast<double>(worker.params->dim()) / cfg_.compute_rate;
        return compute_gradient(*worker.params, batch);
    }

    GradientVector make_grad(int w, Eigen::VectorXd values) const {
        GradientVector g;
        g.classes = workers_[static_cast<std::size_t>(w)].classes;
        g.features = workers_[static_cast<std::size_t>(w)].features;
        g.values = std::move(values);
        return g;
    }

    template <typename F>
    auto fetch(F&& f, int w, const std::string& what) {
        try {
            return f();
        } catch (const KeyNotFound& e) {
            throw ProtocolError(std::string(strategy_name(kind_)) + " round " +
                                std::to_string(round_) + " worker " + std::to_string(w) + ": " +
                                what + " missing (" + e.what() + ")");
        }
    }

    double wait_on(std::int64_t barrier_round, int w, int expected) {
        return barrier_wait(*sw_.shared_kv, barrier_round, w, expected,
                            workers_[static_cast<std::size_t>(w)].clock, cfg_.mode, worker_count_,
                            cfg_.poll_budget);
    }

    StrategyKind kind_;
    std::vector<WorkerState>& workers_;
    StrategyWorld& sw_;
    RoundConfig cfg_;
    int worker_count_;
    std::int64_t round_ = 0;
    std::vector<Scratch> scratch_;
};

std::vector<Step> RoundDriver::allreduce_steps() {
    const int W = worker_count_;
    std::vector<Step> steps;

    steps.push_back({Step::Role::AllWorkers, [this](int w) {
        invoke_begin(w);
        WorkerState& worker = workers_[static_cast<std::size_t>(w)];
        Scratch& s = scratch_[static_cast<std::size_t>(w)];
        s.grad = compute_charged(w, batch_for(w, 0), true);
        sw_.shared_kv->put(worker_key("allreduce/grad", round_, w), serialize_f64(s.grad.values),
                           worker.ctx());
        if (worker_count_ > 1) sw_.shared_kv->barrier_add(2 * round_, w, worker.ctx());
    }});

    steps.push_back({Step::Role::AllWorkers, [this, W](int w) {
        if (W > 1) wait_on(2 * round_, w, W);
    }});

    // The designated master pulls every gradient (its own included: a
    // stateless function trusts only the store), averages, and publishes.
    steps.push_back({Step::Role::MasterOnly, [this, W](int w) {
        WorkerState& worker = workers_[static_cast<std::size_t>(w)];
        std::vector<Eigen::VectorXd> grads;
        for (int j = 0; j < W; ++j)
            grads.push_back(fetch(
                [&] {
                    return deserialize_f64(
                        sw_.shared_kv->get(worker_key("allreduce/grad", round_, j), worker.ctx()));
                },
                w, "gradient of worker " + std::to_string(j)));
        sw_.shared_kv->put(round_key("allreduce/agg", round_), serialize_f64(ordered_mean(grads)),
                           worker.ctx());
        if (W > 1) sw_.shared_kv->barrier_add(2 * round_ + 1, w, worker.ctx());
    }});

    steps.push_back({Step::Role::AllWorkers, [this, W](int w) {
        WorkerState& worker = workers_[static_cast<std::size_t>(w)];
        if (W > 1 && w != 0) wait_on(2 * round_ + 1, w, 1);
        const Eigen::VectorXd agg = fetch(
            [&] {
                return deserialize_f64(
                    sw_.shared_kv->get(round_key("allreduce/agg", round_), worker.ctx()));
            },
            w, "aggregated gradient");
        invoke_end(w, make_grad(w, agg));
    }});

    return steps;
}

std::vector<Step> RoundDriver::scatterreduce_steps() {
    const int W = worker_count_;
    std::vector<Step> steps;

    if (W == 1) {
        // Degenerate single-worker round: everything retained locally, no
        // gradient payload touches the substrate.
        steps.push_back({Step::Role::AllWorkers, [this](int w) {
            invoke_begin(w);
            GradientVector g = compute_charged(w, batch_for(w, 0), true);
            invoke_end(w, g);
        }});
        return steps;
    }

    steps.push_back({Step::Role::AllWorkers, [this, W](int w) {
        invoke_begin(w);
        WorkerState& worker = workers_[static_cast<std::size_t>(w)];
        Scratch& s = scratch_[static_cast<std::size_t>(w)];
        s.grad = compute_charged(w, batch_for(w, 0), true);
        std::vector<Eigen::VectorXd> chunks = chunk_split(s.grad.values, W);
        s.own_chunk = chunks[static_cast<std::size_t>(w)];
        for (int c = 0; c < W; ++c) {
            if (c == w) continue;
            sw_.shared_kv->put(worker_key(("scatter/chunk" + zpad(c, 4)).c_str(), round_, w),
                               serialize_f64(chunks[static_cast<std::size_t>(c)]), worker.ctx());
        }
        sw_.shared_kv->barrier_add(2 * round_, w, worker.ctx());
    }});

    // Each worker reduces its assigned chunk across all peers and
    // publishes the partial aggregate.
    steps.push_back({Step::Role::AllWorkers, [this, W](int w) {
        wait_on(2 * round_, w, W);
        WorkerState& worker = workers_[static_cast<std::size_t>(w)];
        Scratch& s = scratch_[static_cast<std::size_t>(w)];
        std::vector<Eigen::VectorXd> copies;
        for (int src = 0; src < W; ++src) {
            if (src == w) {
                copies.push_back(s.own_chunk);
                continue;
            }
            copies.push_back(fetch(
                [&] {
                    return deserialize_f64(sw_.shared_kv->get(
                        worker_key(("scatter/chunk" + zpad(w, 4)).c_str(), round_, src),
                        worker.ctx()));
                },
                w, "chunk " + std::to_string(w) + " from worker " + std::to_string(src)));
        }
        s.own_agg_chunk = ordered_mean(copies);
        sw_.shared_kv->put(round_key(("scatter/agg" + zpad(w, 4)).c_str(), round_),
                           serialize_f64(s.own_agg_chunk), worker.ctx());
        sw_.shared_kv->barrier_add(2 * round_ + 1, w, worker.ctx());
    }});

    steps.push_back({Step::Role::AllWorkers, [this, W](int w) {
        wait_on(2 * round_ + 1, w, W);
        WorkerState& worker = workers_[static_cast<std::size_t>(w)];
        Scratch& s = scratch_[static_cast<std::size_t>(w)];
        std::vector<Eigen::VectorXd> parts;
        for (int c = 0; c < W; ++c) {
            if (c == w) {
                parts.push_back(s.own_agg_chunk);
                continue;
            }
            parts.push_back(fetch(
                [&] {
                    return deserialize_f64(sw_.shared_kv->get(
                        round_key(("scatter/agg" + zpad(c, 4)).c_str(), round_), worker.ctx()));
                },
                w, "aggregated chunk " + std::to_string(c)));
        }
        invoke_end(w, make_grad(w, chunk_concat(parts)));
    }});

    return steps;
}

std::vector<Step> RoundDriver::spirt_steps() {
    const int W = worker_count_;
    const int m = cfg_.minibatches_per_round;
    std::vector<Step> steps;

    steps.push_back({Step::Role::AllWorkers, [this, m](int w) {
        invoke_begin(w);
        WorkerState& worker = workers_[static_cast<std::size_t>(w)];
        std::vector<std::string> grad_keys;
        for (int b = 0; b < m; ++b) {
            // With parallel invocations the m batch computations overlap,
            // so only the first one advances the clock.
            const bool charge = !cfg_.parallel_invocations || b == 0;
            GradientVector g = compute_charged(w, batch_for(w, b), charge);
            grad_keys.push_back(round_key(("spirt/grad" + zpad(b, 4)).c_str(), round_));
            worker.local_db->put(grad_keys.back(), serialize_f64(g.values), worker.ctx());
        }
        worker.local_db->server_average(grad_keys, round_key("spirt/localavg", round_),
                                        worker.ctx());
        QueueMessage ready;
        ready.sender = w;
        ready.round = round_;
        ready.kind = MsgKind::GradReady;
        ready.sim_time = worker.clock.now;
        sw_.notify_queue->push(std::move(ready), worker.ctx());
        if (worker_count_ > 1) sw_.shared_kv->barrier_add(round_, w, worker.ctx());
    }});

    steps.push_back({Step::Role::AllWorkers, [this, W](int w) {
        WorkerState& worker = workers_[static_cast<std::size_t>(w)];
        if (W > 1) wait_on(round_, w, W);
        // Consume one readiness notification; the barrier set is the
        // ground truth, the queue message is the wake-up.
        if (!sw_.notify_queue->poll(worker.ctx(),
                                    cfg_.mode == SchedulerMode::Concurrent ? 5.0 : 0.0))
            throw ProtocolError("SPIRT round " + std::to_string(round_) +
                                ": missing readiness notification");

        std::vector<std::string> avg_keys;
        for (int j = 0; j < W; ++j) {
            if (j == w) {
                avg_keys.push_back(round_key("spirt/localavg", round_));
                continue;
            }
            auto peer_bytes = fetch(
                [&] {
                    return workers_[static_cast<std::size_t>(j)].local_db->get(
                        round_key("spirt/localavg", round_), worker.ctx());
                },
                w, "local average of worker " + std::to_string(j));
            const std::string copy_key = round_key(("spirt/peer" + zpad(j, 4)).c_str(), round_);
            worker.local_db->put(copy_key, std::move(peer_bytes), worker.ctx());
            avg_keys.push_back(copy_key);
        }
        worker.local_db->server_average(avg_keys, round_key("spirt/agg", round_), worker.ctx());
        const Eigen::VectorXd agg =
            deserialize_f64(worker.local_db->get(round_key("spirt/agg", round_), worker.ctx()));
        invoke_end(w, make_grad(w, agg));
    }});

    return steps;
}

std::vector<Step> RoundDriver::mlless_steps() {
    const int W = worker_count_;
    std::vector<Step> steps;

    steps.push_back({Step::Role::AllWorkers, [this, W](int w) {
        invoke_begin(w);
        WorkerState& worker = workers_[static_cast<std::size_t>(w)];
        Scratch& s = scratch_[static_cast<std::size_t>(w)];
        s.grad = compute_charged(w, batch_for(w, 0), true);

        GradientVector candidate = s.grad;
        candidate.values += worker.residual;
        QueueMessage status;
        status.sender = w;
        status.round = round_;
        if (significance_test(candidate, *worker.params, cfg_.tau)) {
            const std::string key = worker_key("mlless/update", round_, w);
            sw_.shared_kv->put(key, serialize_f64(candidate.values), worker.ctx());
            for (int j = 0; j < W; ++j) {
                if (j == w) continue;
                QueueMessage announce;
                announce.sender = w;
                announce.round = round_;
                announce.kind = MsgKind::UpdateKey;
                announce.payload_key = key;
                announce.sim_time = worker.clock.now;
                sw_.inboxes[static_cast<std::size_t>(j)]->push(std::move(announce), worker.ctx());
            }
            status.kind = MsgKind::UpdateKey;
            status.payload_key = key;
            worker.residual.setZero();
        } else {
            // Not propagated this round: delay the information for peers
            // by folding it into the residual.
            worker.residual = candidate.values;
            status.kind = MsgKind::Done;
        }
        status.sim_time = worker.clock.now;
        sw_.supervisor_queue->push(std::move(status), worker.ctx());
    }});

    steps.push_back({Step::Role::Supervisor, [this, W](int) {
        ActorCtx ctx{-1, &sw_.supervisor_clock};
        std::vector<bool> heard(static_cast<std::size_t>(W), false);
        double latest = 0.0;
        for (int n = 0; n < W; ++n) {
            auto msg = sw_.supervisor_queue->poll(
                ctx, cfg_.mode == SchedulerMode::Concurrent
                         ? std::max(2.0, static_cast<double>(cfg_.poll_budget) * 1e-3)
                         : 0.0);
            if (!msg) {
                std::ostringstream absent;
                for (int j = 0; j < W; ++j)
                    if (!heard[static_cast<std::size_t>(j)]) absent << " " << j;
                throw ProtocolError("MLLess round " + std::to_string(round_) +
                                    ": supervisor timed out; no status from workers:" +
                                    absent.str());
            }
            if (msg->round != round_)
                throw ProtocolError("MLLess supervisor received a status for round " +
                                    std::to_string(msg->round) + " during round " +
                                    std::to_string(round_));
            heard[static_cast<std::size_t>(msg->sender)] = true;
            latest = std::max(latest, msg->sim_time);
        }
        sw_.supervisor_clock.now = std::max(sw_.supervisor_clock.now, latest);
        for (int j = 0; j < W; ++j) {
            QueueMessage proceed;
            proceed.sender = -1;
            proceed.round = round_;
            proceed.kind = MsgKind::Proceed;
            proceed.sim_time = sw_.supervisor_clock.now;
            sw_.inboxes[static_cast<std::size_t>(j)]->push(std::move(proceed), ctx);
        }
    }});

    steps.push_back({Step::Role::AllWorkers, [this](int w) {
        WorkerState& worker = workers_[static_cast<std::size_t>(w)];
        Scratch& s = scratch_[static_cast<std::size_t>(w)];
        MessageQueue& inbox = *sw_.inboxes[static_cast<std::size_t>(w)];
        const double poll_timeout = cfg_.mode == SchedulerMode::Concurrent
                                        ? std::max(2.0, static_cast<double>(cfg_.poll_budget) * 1e-3)
                                        : 0.0;
        double proceed_time = 0.0;
        int requeues = 0;
        for (;;) {
            auto msg = inbox.poll(worker.ctx(), poll_timeout);
            if (!msg)
                throw ProtocolError("MLLess round " + std::to_string(round_) + " worker " +
                                    std::to_string(w) + ": no Proceed from supervisor");
            if (msg->round > round_) {
                // A fast peer already announced for the next round; the
                // message stays queued rather than in worker memory.
                if (++requeues > cfg_.poll_budget)
                    throw ProtocolError("MLLess round " + std::to_string(round_) +
                                        ": inbox churn without a Proceed");
                inbox.push(*msg, worker.ctx());
                continue;
            }
            if (msg->kind == MsgKind::UpdateKey) {
                s.announced[msg->sender] = msg->payload_key;
            } else if (msg->kind == MsgKind::Proceed) {
                proceed_time = msg->sim_time;
                break;
            }
        }
        if (proceed_time > worker.clock.now) {
            worker.clock.sync_wait += proceed_time - worker.clock.now;
            worker.clock.now = proceed_time;
        }

        // Own contribution is this round's fresh gradient: the residual
        // backlog was already applied locally in the rounds it was earned.
        std::vector<Eigen::VectorXd> contributions;
        for (int j = 0; j < worker_count_; ++j) {
            if (j == w) {
                contributions.push_back(s.grad.values);
            } else if (auto it = s.announced.find(j); it != s.announced.end()) {
                contributions.push_back(fetch(
                    [&] { return deserialize_f64(sw_.shared_kv->get(it->second, worker.ctx())); },
                    w, "announced update " + it->second));
            }
        }
        invoke_end(w, make_grad(w, ordered_mean(contributions)));
    }});

    return steps;
}

std::vector<Step> RoundDriver::sharedstore_steps() {
    const int W = worker_count_;
    std::vector<Step> steps;

    steps.push_back({Step::Role::AllWorkers, [this](int w) {
        invoke_begin(w);
        WorkerState& worker = workers_[static_cast<std::size_t>(w)];
        Scratch& s = scratch_[static_cast<std::size_t>(w)];
        s.grad = compute_charged(w, batch_for(w, 0), true);
        sw_.object_store->put(StrategyWorld::kBucket, worker_key("shared/grad", round_, w),
                              serialize_f64(s.grad.values), worker.ctx());
        if (worker_count_ > 1) sw_.shared_kv->barrier_add(round_, w, worker.ctx());
    }});

    steps.push_back({Step::Role::AllWorkers, [this, W](int w) {
        if (W > 1) wait_on(round_, w, W);
        WorkerState& worker = workers_[static_cast<std::size_t>(w)];
        Scratch& s = scratch_[static_cast<std::size_t>(w)];
        const auto keys = sw_.object_store->list(StrategyWorld::kBucket,
                                                 round_key("shared/grad", round_), worker.ctx());
        if (static_cast<int>(keys.size()) != W)
            throw ProtocolError("SharedStoreBaseline round " + std::to_string(round_) +
                                ": expected " + std::to_string(W) + " gradients, found " +
                                std::to_string(keys.size()));
        std::vector<Eigen::VectorXd> grads;
        for (int j = 0; j < W; ++j) {
            if (j == w) {
                grads.push_back(s.grad.values); // own copy used from memory
                continue;
            }
            grads.push_back(fetch(
                [&] {
                    return deserialize_f64(sw_.object_store->get(
                        StrategyWorld::kBucket, worker_key("shared/grad", round_, j),
                        worker.ctx()));
                },
                w, "gradient object of worker " + std::to_string(j)));
        }
        invoke_end(w, make_grad(w, ordered_mean(grads)));
    }});

    return steps;
}

} // namespace

double barrier_wait(KvStore& store, std::int64_t round, int worker, int expected, SimClock& clock,
                    SchedulerMode mode, int total_workers, int poll_budget) {
    if (total_workers <= 1) return 0.0; // no peers to wait for

    auto absent_message = [&] {
        const auto arrivals = store.barrier_arrivals(round);
        std::vector<bool> present(static_cast<std::size_t>(total_workers), false);
        for (const auto& [id, _] : arrivals)
            if (id >= 0 && id < total_workers) present[static_cast<std::size_t>(id)] = true;
        std::ostringstream msg;
        msg << "barrier round " << round << ": worker " << worker << " exhausted " << poll_budget
            << " polls waiting for " << expected << " registrations; absent workers:";
        for (int j = 0; j < total_workers; ++j)
            if (!present[static_cast<std::size_t>(j)]) msg << " " << j;
        return msg.str();
    };

    if (mode == SchedulerMode::Concurrent) {
        const double timeout = std::max(2.0, static_cast<double>(poll_budget) * 1e-3);
        if (!store.barrier_block_until(round, expected, timeout))
            throw ProtocolError(absent_message());
    } else {
        int polls = 0;
        while (store.barrier_cardinality(round) < expected)
            if (++polls >= poll_budget) throw ProtocolError(absent_message());
    }

    double latest = clock.now;
    for (const auto& [_, arrival] : store.barrier_arrivals(round)) latest = std::max(latest, arrival);

    const double tick = store.owning_world().latency().fixed(store.cls());
    double wait = 0.0;
    if (tick > 0.0) {
        const double polls_needed = std::ceil((latest - clock.now) / tick - 1e-9);
        wait = tick * std::max(1.0, polls_needed);
    } else {
        wait = std::max(0.0, latest - clock.now);
    }
    clock.now += wait;
    clock.sync_wait += wait;
    return wait;
}

RoundOutcome run_allreduce_round(std::vector<WorkerState>& workers, StrategyWorld& sw,
                                 const RoundConfig& cfg) {
    RoundDriver driver(StrategyKind::AllReduce, workers, sw, cfg);
    return driver.run(driver.allreduce_steps());
}

RoundOutcome run_scatterreduce_round(std::vector<WorkerState>& workers, StrategyWorld& sw,
                                     const RoundConfig& cfg) {
    RoundDriver driver(StrategyKind::ScatterReduce, workers, sw, cfg);
    return driver.run(driver.scatterreduce_steps());
}

RoundOutcome run_spirt_round(std::vector<WorkerState>& workers, StrategyWorld& sw,
                             const RoundConfig& cfg) {
    RoundDriver driver(StrategyKind::SpirtP2P, workers, sw, cfg);
    return driver.run(driver.spirt_steps());
}

RoundOutcome run_mlless_round(std::vector<WorkerState>& workers, StrategyWorld& sw,
                              const RoundConfig& cfg) {
    RoundDriver driver(StrategyKind::MLLessPS, workers, sw, cfg);
    return driver.run(driver.mlless_steps());
}

RoundOutcome run_sharedstore_round(std::vector<WorkerState>& workers, StrategyWorld& sw,
                                   const RoundConfig& cfg) {
    RoundDriver driver(StrategyKind::SharedStoreBaseline, workers, sw, cfg);
    return driver.run(driver.sharedstore_steps());
}

RoundOutcome run_round(StrategyKind kind, std::vector<WorkerState>& workers, StrategyWorld& sw,
                       const RoundConfig& cfg) {
    switch (kind) {
        case StrategyKind::AllReduce: return run_allreduce_round(workers, sw, cfg);
        case StrategyKind::ScatterReduce: return run_scatterreduce_round(workers, sw, cfg);
        case StrategyKind::SpirtP2P: return run_spirt_round(workers, sw, cfg);
        case StrategyKind::MLLessPS: return run_mlless_round(workers, sw, cfg);
        case StrategyKind::SharedStoreBaseline: return run_sharedstore_round(workers, sw, cfg);
    }
    throw ConfigError("unknown strategy");
}

void persist_worker_state(WorkerState& worker, const ModelParams& params,
                          const Eigen::VectorXd* residual) {
    const ActorCtx setup{worker.worker_id, nullptr};
    worker.local_db->put(kParamsKey, serialize_f64(params.flat()), setup);
    if (residual) worker.local_db->put(kResidualKey, serialize_f64(*residual), setup);
}

ModelParams load_worker_params(WorkerState& worker) {
    const ActorCtx setup{worker.worker_id, nullptr};
    return ModelParams::from_flat(deserialize_f64(worker.local_db->get(kParamsKey, setup)),
                                  worker.classes, worker.features);
}

} // namespace gradmesh

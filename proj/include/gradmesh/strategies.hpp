#pragma once

#include "gradmesh/sgd.hpp"
#include "gradmesh/substrate.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gradmesh {

enum class StrategyKind { SpirtP2P, MLLessPS, ScatterReduce, AllReduce, SharedStoreBaseline };

const char* strategy_name(StrategyKind kind);
std::optional<StrategyKind> parse_strategy(const std::string& name);

enum class SchedulerMode { Deterministic, Concurrent };

// Contiguous, disjoint index ranges covering [0, total_dims); the first
// total_dims % workers ranges carry one extra element.
struct ChunkAssignment {
    Eigen::Index total_dims = 0;
    int workers = 0;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> boundaries; // [start, end)

    static ChunkAssignment build(Eigen::Index total_dims, int workers);
};

std::vector<Eigen::VectorXd> chunk_split(const Eigen::VectorXd& values, int workers);
Eigen::VectorXd chunk_concat(const std::vector<Eigen::VectorXd>& chunks);

// ||update|| / (||params|| + eps) > tau.
bool significance_test(const GradientVector& update, const ModelParams& params, double tau);

// One emulated stateless worker. Between rounds the model lives only in
// the durable store; `params` is populated for the span of an invocation
// and must be empty at every round boundary.
struct WorkerState {
    int worker_id = 0;
    KvStore* local_db = nullptr; // durable store; SPIRT also aggregates here
    MinibatchSchedule schedule;
    int classes = 0;
    int features = 0;
    std::int64_t round = 0;
    SimClock clock;

    std::optional<ModelParams> params;
    Eigen::VectorXd residual; // MLLess backlog of unannounced updates

    ActorCtx ctx() { return ActorCtx{worker_id, &clock}; }
};

struct RoundOutcome {
    std::vector<GradientVector> aggregated; // per worker
    std::vector<ModelParams> updated;       // per worker
    std::vector<double> duration_s;         // per worker, this round
    std::vector<double> sync_wait_s;        // per worker, this round
    TrafficCounters traffic_delta;
};

// The substrate instances one experiment runs over.
struct StrategyWorld {
    World* world = nullptr;
    KvStore* shared_kv = nullptr;               // payloads + barrier registrations
    ObjectStore* object_store = nullptr;        // SharedStoreBaseline bucket
    std::vector<MessageQueue*> inboxes;         // per worker (MLLess)
    MessageQueue* supervisor_queue = nullptr;   // MLLess worker -> supervisor
    MessageQueue* notify_queue = nullptr;       // SPIRT sync queue
    SimClock supervisor_clock;

    static constexpr const char* kBucket = "gradients";
};

// Builds every substrate the strategies touch; worker-local stores are
// created per WorkerState by the harness.
StrategyWorld build_strategy_world(World& world, int workers);

struct RoundConfig {
    double lr = 0.5;
    double tau = 0.0;              // MLLess threshold
    int minibatches_per_round = 1; // SPIRT m
    int first_batch_index = 0;     // schedule offset of this round's batches
    SchedulerMode mode = SchedulerMode::Deterministic;
    int poll_budget = 10000;
    double compute_rate = 5e7;          // example-parameter products per second
    bool parallel_invocations = false;  // SPIRT: overlap the m batch computations
};

// Polls the store's per-round registration set until `expected` workers
// have arrived, one latency tick per poll. Returns the simulated wait,
// which is also accumulated into the clock.
double barrier_wait(KvStore& store, std::int64_t round, int worker, int expected, SimClock& clock,
                    SchedulerMode mode, int total_workers, int poll_budget = 10000);

RoundOutcome run_allreduce_round(std::vector<WorkerState>& workers, StrategyWorld& sw,
                                 const RoundConfig& cfg);
RoundOutcome run_scatterreduce_round(std::vector<WorkerState>& workers, StrategyWorld& sw,
                                     const RoundConfig& cfg);
RoundOutcome run_spirt_round(std::vector<WorkerState>& workers, StrategyWorld& sw,
                             const RoundConfig& cfg);
RoundOutcome run_mlless_round(std::vector<WorkerState>& workers, StrategyWorld& sw,
                              const RoundConfig& cfg);
RoundOutcome run_sharedstore_round(std::vector<WorkerState>& workers, StrategyWorld& sw,
                                   const RoundConfig& cfg);

RoundOutcome run_round(StrategyKind kind, std::vector<WorkerState>& workers, StrategyWorld& sw,
                       const RoundConfig& cfg);

// State persistence helpers shared by the harness (initial seeding) and
// the round runners (per-invocation load/restore).
void persist_worker_state(WorkerState& worker, const ModelParams& params,
                          const Eigen::VectorXd* residual);
ModelParams load_worker_params(WorkerState& worker);

} // namespace gradmesh

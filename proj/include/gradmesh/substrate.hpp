#pragma once

#include "gradmesh/serialize.hpp"

#include <array>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace gradmesh {

enum class SubstrateClass { LocalDB = 0, SharedDB = 1, Queue = 2, ObjectStore = 3 };
inline constexpr int kSubstrateClassCount = 4;

const char* substrate_class_name(SubstrateClass cls);

// Point-in-time copy of the per-class tallies. bytes_written/bytes_read
// are payload bytes (the f64 data all traffic closed forms are stated
// in); framing costs (length headers, queue envelopes) are tracked
// separately. peer_bytes_read singles out cross-worker reads of another
// worker's local store.
struct ClassCounters {
    std::uint64_t bytes_written = 0;
    std::uint64_t bytes_read = 0;
    std::uint64_t envelope_bytes_written = 0;
    std::uint64_t envelope_bytes_read = 0;
    std::uint64_t op_count = 0;
    std::uint64_t peer_bytes_read = 0;
};

struct TrafficCounters {
    std::array<ClassCounters, kSubstrateClassCount> by_class;

    ClassCounters& operator[](SubstrateClass cls) { return by_class[static_cast<int>(cls)]; }
    const ClassCounters& operator[](SubstrateClass cls) const {
        return by_class[static_cast<int>(cls)];
    }
    TrafficCounters delta_since(const TrafficCounters& earlier) const;
    std::string to_json() const;
};

// Simulated-time knobs: every operation on a class costs a fixed setup
// latency plus transferred bytes over the class bandwidth.
struct LatencyModel {
    std::array<double, kSubstrateClassCount> fixed_latency = {100e-6, 1e-3, 500e-6, 5e-3};
    std::array<double, kSubstrateClassCount> bandwidth = {1e9, 2.5e8, 1.25e8, 1e8};

    double fixed(SubstrateClass cls) const { return fixed_latency[static_cast<int>(cls)]; }
    double bw(SubstrateClass cls) const { return bandwidth[static_cast<int>(cls)]; }
    static LatencyModel zero();
};

// Per-worker logical clock. sync_wait accumulates time spent blocked at
// barriers or awaiting supervisor instructions, reported separately.
struct SimClock {
    double now = 0.0;
    double sync_wait = 0.0;
};

// Identity of the caller for counter attribution and latency charging.
// Ops without a clock (world setup) advance no simulated time.
struct ActorCtx {
    int actor = -1;
    SimClock* clock = nullptr;
};

enum class MsgKind { GradReady, UpdateKey, Proceed, Done };

struct QueueMessage {
    int sender = -1;
    std::int64_t round = 0;
    MsgKind kind = MsgKind::GradReady;
    std::string payload_key; // present iff kind == UpdateKey
    double sim_time = 0.0;   // sender clock at push
};

class World;

// In-memory key-value store with server-side aggregation and an atomic
// per-round registration set standing in for the synchronization queue.
class KvStore {
public:
    KvStore(World& world, SubstrateClass cls, int owner = -1);

    SubstrateClass cls() const { return cls_; }
    int owner() const { return owner_; }
    const World& owning_world() const { return world_; }

    void put(const std::string& key, std::vector<std::uint8_t> value, const ActorCtx& ctx);
    std::vector<std::uint8_t> get(const std::string& key, const ActorCtx& ctx) const;
    bool contains(const std::string& key) const;

    // Elementwise mean of the named values, written to output_key without
    // any payload crossing the client boundary: one op, one value write.
    void server_average(const std::vector<std::string>& input_keys,
                        const std::string& output_key, const ActorCtx& ctx);

    // Atomic set-add, idempotent per (round, worker). Returns the number
    // of distinct workers registered for the round.
    int barrier_add(std::int64_t round, int worker, const ActorCtx& ctx);
    int barrier_cardinality(std::int64_t round) const;
    // Registered (worker, arrival sim-time) pairs, ascending by worker.
    std::vector<std::pair<int, double>> barrier_arrivals(std::int64_t round) const;
    // Blocks until the round's cardinality reaches `target` or the real
    // deadline passes. Used by the concurrent scheduler only.
    bool barrier_block_until(std::int64_t round, int target, double timeout_seconds) const;

private:
    World& world_;
    SubstrateClass cls_;
    int owner_;
    mutable std::mutex mu_;
    mutable std::condition_variable cv_;
    std::unordered_map<std::string, std::vector<std::uint8_t>> data_;
    std::map<std::int64_t, std::vector<std::pair<int, double>>> barrier_;
};

// FIFO queue with a fixed 64-byte envelope plus key length per message.
class MessageQueue {
public:
    explicit MessageQueue(World& world, std::string name);

    void push(QueueMessage msg, const ActorCtx& ctx);
    // Non-blocking when max_wait_seconds == 0 (deterministic scheduler);
    // otherwise blocks up to the real deadline. Empty result on timeout.
    std::optional<QueueMessage> poll(const ActorCtx& ctx, double max_wait_seconds = 0.0);
    std::size_t depth() const;

private:
    World& world_;
    std::string name_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<QueueMessage> messages_;
};

// Bucketed byte-blob store.
class ObjectStore {
public:
    explicit ObjectStore(World& world);

    void put(const std::string& bucket, const std::string& key, std::vector<std::uint8_t> value,
             const ActorCtx& ctx);
    std::vector<std::uint8_t> get(const std::string& bucket, const std::string& key,
                                  const ActorCtx& ctx) const;
    std::vector<std::string> list(const std::string& bucket, const std::string& prefix,
                                  const ActorCtx& ctx) const;

private:
    World& world_;
    mutable std::mutex mu_;
    std::map<std::string, std::map<std::string, std::vector<std::uint8_t>>> buckets_;
};

struct OpEvent {
    std::uint64_t seq = 0;
    int actor = -1;
    SubstrateClass cls = SubstrateClass::LocalDB;
    std::string op;
    std::string key;
    std::uint64_t payload_bytes = 0;
    std::uint64_t envelope_bytes = 0;
    bool is_read = false;
};

// Owns every substrate instance of a run together with the shared
// counters, the latency model, and the optional bounded op log.
class World {
public:
    explicit World(LatencyModel latency = LatencyModel{});

    KvStore& make_kv(SubstrateClass cls, int owner = -1);
    MessageQueue& make_queue(std::string name);
    ObjectStore& make_object_store();

    TrafficCounters traffic_snapshot() const;
    const LatencyModel& latency() const { return latency_; }

    // fixed_latency + bytes / bandwidth, added to the caller's clock.
    double charge_latency(SimClock& clock, SubstrateClass cls, std::uint64_t bytes) const;

    void enable_op_log(std::size_t max_events);
    std::vector<OpEvent> op_log() const;
    std::string op_log_jsonl() const;

    // Internal accounting hooks used by the store implementations.
    void record(SubstrateClass cls, bool is_read, std::uint64_t payload, std::uint64_t envelope,
                bool count_op, bool peer_read, const ActorCtx& ctx, const char* op,
                const std::string& key);

private:
    LatencyModel latency_;
    mutable std::mutex mu_;
    TrafficCounters counters_;
    std::vector<std::unique_ptr<KvStore>> kvs_;
    std::vector<std::unique_ptr<MessageQueue>> queues_;
    std::vector<std::unique_ptr<ObjectStore>> stores_;

    bool log_enabled_ = false;
    std::size_t log_cap_ = 0;
    std::uint64_t seq_ = 0;
    std::vector<OpEvent> log_;
};

} // namespace gradmesh

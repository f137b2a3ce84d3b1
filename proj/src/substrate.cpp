#include "gradmesh/substrate.hpp"

#include "gradmesh/errors.hpp"
#include "gradmesh/sgd.hpp"

#include <algorithm>
#include <chrono>
#include <sstream>

namespace gradmesh {

namespace {
constexpr std::uint64_t kQueueEnvelopeBytes = 64;
}

const char* substrate_class_name(SubstrateClass cls) {
    switch (cls) {
        case SubstrateClass::LocalDB: return "local_db";
        case SubstrateClass::SharedDB: return "shared_db";
        case SubstrateClass::Queue: return "queue";
        case SubstrateClass::ObjectStore: return "object_store";
    }
    return "unknown";
}

TrafficCounters TrafficCounters::delta_since(const TrafficCounters& earlier) const {
    TrafficCounters d;
    for (int i = 0; i < kSubstrateClassCount; ++i) {
        d.by_class[i].bytes_written = by_class[i].bytes_written - earlier.by_class[i].bytes_written;
        d.by_class[i].bytes_read = by_class[i].bytes_read - earlier.by_class[i].bytes_read;
        d.by_class[i].envelope_bytes_written =
            by_class[i].envelope_bytes_written - earlier.by_class[i].envelope_bytes_written;
        d.by_class[i].envelope_bytes_read =
            by_class[i].envelope_bytes_read - earlier.by_class[i].envelope_bytes_read;
        d.by_class[i].op_count = by_class[i].op_count - earlier.by_class[i].op_count;
        d.by_class[i].peer_bytes_read =
            by_class[i].peer_bytes_read - earlier.by_class[i].peer_bytes_read;
    }
    return d;
}

std::string TrafficCounters::to_json() const {
    std::ostringstream out;
    out << "{";
    for (int i = 0; i < kSubstrateClassCount; ++i) {
        const auto& c = by_class[i];
        if (i) out << ",";
        out << "\"" << substrate_class_name(static_cast<SubstrateClass>(i)) << "\":{"
            << "\"bytes_read\":" << c.bytes_read << ",\"bytes_written\":" << c.bytes_written
            << ",\"envelope_bytes_read\":" << c.envelope_bytes_read
            << ",\"envelope_bytes_written\":" << c.envelope_bytes_written
            << ",\"op_count\":" << c.op_count << ",\"peer_bytes_read\":" << c.peer_bytes_read
            << "}";
    }
    out << "}";
    return out.str();
}

LatencyModel LatencyModel::zero() {
    LatencyModel m;
    m.fixed_latency = {0.0, 0.0, 0.0, 0.0};
    m.bandwidth = {1.0, 1.0, 1.0, 1.0};
    return m;
}

// ---------------------------------------------------------------------------
// KvStore

KvStore::KvStore(World& world, SubstrateClass cls, int owner)
    : world_(world), cls_(cls), owner_(owner) {}

void KvStore::put(const std::string& key, std::vector<std::uint8_t> value, const ActorCtx& ctx) {
    if (key.empty()) throw ContractError("kv_put requires a non-empty key");
    if (value.size() < kHeaderBytes) throw ContractError("kv value shorter than its length header");
    const std::uint64_t payload = value.size() - kHeaderBytes;
    {
        std::lock_guard lock(mu_);
        data_[key] = std::move(value); // last writer wins
    }
    world_.record(cls_, false, payload, kHeaderBytes, true, false, ctx, "kv_put", key);
}

std::vector<std::uint8_t> KvStore::get(const std::string& key, const ActorCtx& ctx) const {
    std::vector<std::uint8_t> value;
    {
        std::lock_guard lock(mu_);
        auto it = data_.find(key);
        if (it == data_.end()) throw KeyNotFound(key);
        value = it->second;
    }
    const std::uint64_t payload = value.size() - kHeaderBytes;
    const bool peer = owner_ >= 0 && ctx.actor >= 0 && ctx.actor != owner_;
    world_.record(cls_, true, payload, kHeaderBytes, true, peer, ctx, "kv_get", key);
    return value;
}

bool KvStore::contains(const std::string& key) const {
    std::lock_guard lock(mu_);
    return data_.count(key) > 0;
}

void KvStore::server_average(const std::vector<std::string>& input_keys,
                             const std::string& output_key, const ActorCtx& ctx) {
    if (input_keys.empty()) throw ContractError("server_average needs at least one input key");
    std::vector<Eigen::VectorXd> values;
    values.reserve(input_keys.size());
    {
        std::lock_guard lock(mu_);
        for (const auto& key : input_keys) {
            auto it = data_.find(key);
            if (it == data_.end()) throw KeyNotFound(key);
            values.push_back(deserialize_f64(it->second));
            if (values.back().size() != values.front().size())
                throw ContractError("server_average over values of unequal length");
        }
        data_[output_key] = serialize_f64(ordered_mean(values));
    }
    // One op; one value write on the server side; nothing crosses the
    // client boundary, so reads stay zero and latency is setup-only.
    world_.record(cls_, false, payload_size(static_cast<std::size_t>(values.front().size())),
                  kHeaderBytes, true, false, ctx, "kv_server_average", output_key);
}

int KvStore::barrier_add(std::int64_t round, int worker, const ActorCtx& ctx) {
    int cardinality = 0;
    {
        std::lock_guard lock(mu_);
        auto& entries = barrier_[round];
        const bool seen = std::any_of(entries.begin(), entries.end(),
                                      [worker](const auto& e) { return e.first == worker; });
        if (!seen) {
            const double arrival = ctx.clock ? ctx.clock->now : 0.0;
            entries.emplace_back(worker, arrival);
            std::sort(entries.begin(), entries.end());
        }
        cardinality = static_cast<int>(entries.size());
    }
    cv_.notify_all();
    world_.record(cls_, false, 0, 0, true, false, ctx, "kv_barrier_add",
                  "round/" + std::to_string(round));
    return cardinality;
}

int KvStore::barrier_cardinality(std::int64_t round) const {
    std::lock_guard lock(mu_);
    auto it = barrier_.find(round);
    return it == barrier_.end() ? 0 : static_cast<int>(it->second.size());
}

std::vector<std::pair<int, double>> KvStore::barrier_arrivals(std::int64_t round) const {
    std::lock_guard lock(mu_);
    auto it = barrier_.find(round);
    return it == barrier_.end() ? std::vector<std::pair<int, double>>{} : it->second;
}

bool KvStore::barrier_block_until(std::int64_t round, int target, double timeout_seconds) const {
    std::unique_lock lock(mu_);
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                              std::chrono::duration<double>(timeout_seconds));
    return cv_.wait_until(lock, deadline, [&] {
        auto it = barrier_.find(round);
        return it != barrier_.end() && static_cast<int>(it->second.size()) >= target;
    });
}

// ---------------------------------------------------------------------------
// MessageQueue

MessageQueue::MessageQueue(World& world, std::string name)
    : world_(world), name_(std::move(name)) {}

void MessageQueue::push(QueueMessage msg, const ActorCtx& ctx) {
    if ((msg.kind == MsgKind::UpdateKey) != !msg.payload_key.empty())
        throw ContractError("payload_key must be present exactly for UpdateKey messages");
    const std::uint64_t envelope = kQueueEnvelopeBytes + msg.payload_key.size();
    {
        std::lock_guard lock(mu_);
        messages_.push_back(std::move(msg));
    }
    cv_.notify_all();
    world_.record(SubstrateClass::Queue, false, 0, envelope, true, false, ctx, "queue_push",
                  name_);
}

std::optional<QueueMessage> MessageQueue::poll(const ActorCtx& ctx, double max_wait_seconds) {
    std::optional<QueueMessage> msg;
    {
        std::unique_lock lock(mu_);
        if (messages_.empty() && max_wait_seconds > 0.0) {
            const auto deadline = std::chrono::steady_clock::now() +
                                  std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                      std::chrono::duration<double>(max_wait_seconds));
            cv_.wait_until(lock, deadline, [&] { return !messages_.empty(); });
        }
        if (messages_.empty()) return std::nullopt; // timeout, not an error
        msg = std::move(messages_.front());
        messages_.pop_front();
    }
    const std::uint64_t envelope = kQueueEnvelopeBytes + msg->payload_key.size();
    world_.record(SubstrateClass::Queue, true, 0, envelope, true, false, ctx, "queue_poll", name_);
    return msg;
}

std::size_t MessageQueue::depth() const {
    std::lock_guard lock(mu_);
    return messages_.size();
}

// ---------------------------------------------------------------------------
// ObjectStore

ObjectStore::ObjectStore(World& world) : world_(world) {}

void ObjectStore::put(const std::string& bucket, const std::string& key,
                      std::vector<std::uint8_t> value, const ActorCtx& ctx) {
    if (key.empty()) throw ContractError("object_put requires a non-empty key");
    if (value.size() < kHeaderBytes)
        throw ContractError("object value shorter than its length header");
    const std::uint64_t payload = value.size() - kHeaderBytes;
    {
        std::lock_guard lock(mu_);
        buckets_[bucket][key] = std::move(value);
    }
    world_.record(SubstrateClass::ObjectStore, false, payload, kHeaderBytes, true, false, ctx,
                  "object_put", bucket + "/" + key);
}

std::vector<std::uint8_t> ObjectStore::get(const std::string& bucket, const std::string& key,
                                           const ActorCtx& ctx) const {
    std::vector<std::uint8_t> value;
    {
        std::lock_guard lock(mu_);
        auto bit = buckets_.find(bucket);
        if (bit == buckets_.end()) throw KeyNotFound(bucket + "/" + key);
        auto it = bit->second.find(key);
        if (it == bit->second.end()) throw KeyNotFound(bucket + "/" + key);
        value = it->second;
    }
    world_.record(SubstrateClass::ObjectStore, true, value.size() - kHeaderBytes, kHeaderBytes,
                  true, false, ctx, "object_get", bucket + "/" + key);
    return value;
}

std::vector<std::string> ObjectStore::list(const std::string& bucket, const std::string& prefix,
                                           const ActorCtx& ctx) const {
    std::vector<std::string> keys;
    {
        std::lock_guard lock(mu_);
        auto bit = buckets_.find(bucket);
        if (bit != buckets_.end())
            for (const auto& [key, _] : bit->second)
                if (key.rfind(prefix, 0) == 0) keys.push_back(key);
    }
    std::uint64_t name_bytes = 0;
    for (const auto& k : keys) name_bytes += k.size();
    world_.record(SubstrateClass::ObjectStore, true, 0, name_bytes, true, false, ctx,
                  "object_list", bucket + "/" + prefix);
    return keys;
}

// ---------------------------------------------------------------------------
// World

World::World(LatencyModel latency) : latency_(latency) {}

KvStore& World::make_kv(SubstrateClass cls, int owner) {
    std::lock_guard lock(mu_);
    kvs_.push_back(std::make_unique<KvStore>(*this, cls, owner));
    return *kvs_.back();
}

MessageQueue& World::make_queue(std::string name) {
    std::lock_guard lock(mu_);
    queues_.push_back(std::make_unique<MessageQueue>(*this, std::move(name)));
    return *queues_.back();
}

ObjectStore& World::make_object_store() {
    std::lock_guard lock(mu_);
    stores_.push_back(std::make_unique<ObjectStore>(*this));
    return *stores_.back();
}

TrafficCounters World::traffic_snapshot() const {
    std::lock_guard lock(mu_);
    return counters_;
}

double World::charge_latency(SimClock& clock, SubstrateClass cls, std::uint64_t bytes) const {
    const double elapsed =
        latency_.fixed(cls) + static_cast<double>(bytes) / latency_.bw(cls);
    clock.now += elapsed;
    return elapsed;
}

void World::enable_op_log(std::size_t max_events) {
    std::lock_guard lock(mu_);
    log_enabled_ = max_events > 0;
    log_cap_ = max_events;
    log_.clear();
}

std::vector<OpEvent> World::op_log() const {
    std::lock_guard lock(mu_);
    return log_;
}

std::string World::op_log_jsonl() const {
    std::ostringstream out;
    for (const auto& e : op_log()) {
        out << "{\"seq\":" << e.seq << ",\"actor\":" << e.actor << ",\"class\":\""
            << substrate_class_name(e.cls) << "\",\"op\":\"" << e.op << "\",\"key\":\"" << e.key
            << "\",\"payload_bytes\":" << e.payload_bytes
            << ",\"envelope_bytes\":" << e.envelope_bytes << ",\"dir\":\""
            << (e.is_read ? "read" : "write") << "\"}\n";
    }
    return out.str();
}

void World::record(SubstrateClass cls, bool is_read, std::uint64_t payload, std::uint64_t envelope,
                   bool count_op, bool peer_read, const ActorCtx& ctx, const char* op,
                   const std::string& key) {
    if (ctx.clock) charge_latency(*ctx.clock, cls, payload + envelope);
    std::lock_guard lock(mu_);
    auto& c = counters_[cls];
    if (is_read) {
        c.bytes_read += payload;
        c.envelope_bytes_read += envelope;
        if (peer_read) c.peer_bytes_read += payload;
    } else {
        c.bytes_written += payload;
        c.envelope_bytes_written += envelope;
    }
    if (count_op) ++c.op_count;
    if (log_enabled_ && log_.size() < log_cap_) {
        log_.push_back(OpEvent{seq_, ctx.actor, cls, op, key, payload, envelope, is_read});
    }
    ++seq_;
}

} // namespace gradmesh

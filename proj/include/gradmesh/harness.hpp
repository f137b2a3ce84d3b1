#pragma once

#include "gradmesh/cost.hpp"
#include "gradmesh/sgd.hpp"
#include "gradmesh/strategies.hpp"
#include "gradmesh/substrate.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gradmesh {

struct ExperimentConfig {
    StrategyKind strategy = StrategyKind::AllReduce;
    int workers = 4;
    int batches_per_worker = 8;
    Eigen::Index batch_size = 16;
    int epochs = 5;
    double lr = 0.5;
    double tau = 0.01;             // MLLess significance threshold
    int minibatches_per_round = 1; // SPIRT m
    int classes = 3;
    int features = 16;
    Eigen::Index dataset_n = 2048;
    double separation = 5.0;
    PricingConfig pricing;
    LatencyModel latency;
    double ram_mb_assumed = 2048.0;
    std::uint64_t seed = 0;
    SchedulerMode scheduler = SchedulerMode::Deterministic;
    Deployment deployment = Deployment::Serverless;
    double compute_rate = 5e7;
    bool parallel_invocations = false;
    int poll_budget = 10000;
    bool early_stop = true;
    int early_stop_patience = 3;
    double early_stop_min_delta = 0.001;

    void validate() const; // throws ConfigError
};

struct EpochMetrics {
    int epoch = 0;
    double train_accuracy = 0.0;
    double mean_loss = 0.0;
    double sim_time_total_s = 0.0;          // slowest worker's epoch time
    double sim_time_per_invocation_s = 0.0; // mean over workers and batches
    double sync_wait_total_s = 0.0;         // summed over workers
    TrafficCounters traffic_delta;
    CostRecord cost;
};

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<EpochMetrics> epochs;
    std::string final_params_digest;
    double oracle_divergence = 0.0; // relative param distance vs the sequential oracle
    bool early_stopped = false;
    double final_accuracy = 0.0;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Single-node reference: each step applies the equal-weight mean over
// workers of their per-round mean gradients. Ignores the strategy field.
ModelParams oracle_sequential_run(const ExperimentConfig& cfg);
ModelParams oracle_sequential_run(const ExperimentConfig& cfg, int epochs);

// True once accuracy has failed to improve by min_delta for `patience`
// consecutive epochs.
bool early_stop_check(const std::vector<double>& history, int patience, double min_delta);

// Compute term plus accumulated latency charges.
double invocation_duration(Eigen::Index param_dim, Eigen::Index batch_size, double compute_rate,
                           double latency_charges_s);

// FNV-1a over the little-endian bytes of the flat parameter vector.
std::string params_digest(const ModelParams& params);

// Relative euclidean distance between two parameter vectors.
double param_distance(const ModelParams& a, const ModelParams& b);

} // namespace gradmesh

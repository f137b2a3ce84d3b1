#pragma once

#include <string>
#include <vector>

namespace gradmesh {

struct PricingConfig {
    double lambda_gb_second_usd = 0.0000166667; // AWS Lambda x86 GB-second rate
    double gpu_hourly_usd = 0.526;              // g4dn.xlarge on-demand
    double mb_per_gb = 1000.0; // the published cost table divides MB by 1000, not 1024
};

enum class Deployment { Serverless, Gpu };

// Per-invocation and per-epoch monetary cost. The chained fields satisfy
// cost_per_worker = invocations x per_invocation and
// total = workers x cost_per_worker to 1e-12 relative.
struct CostRecord {
    double per_invocation_usd = 0.0;
    int invocations_per_worker = 0;
    double cost_per_worker_usd = 0.0;
    int workers = 0;
    double total_usd = 0.0;
    double duration_s = 0.0;
    double ram_mb = 0.0;
};

// duration x (ram / mb_per_gb) x rate.
double lambda_invocation_cost(double duration_s, double ram_mb, const PricingConfig& pricing);

double worker_epoch_cost(double per_invocation_usd, int invocations);
double total_cost(double per_worker_usd, int workers);

// instances x duration / 3600 x hourly rate.
double gpu_cost(double duration_s, int instances, const PricingConfig& pricing);

CostRecord build_cost_report(double invocation_duration_s, double ram_mb,
                             int invocations_per_worker, int workers,
                             const PricingConfig& pricing, Deployment deployment);

// One cell of the published cost table checked against the pricing
// formula applied to that cell's printed inputs.
struct CostCheckCell {
    std::string framework;
    std::string model;
    std::string cell; // per_invocation | per_worker | total
    double formula_value = 0.0;
    double published_value = 0.0;
    double rel_error = 0.0;
    bool consistent = false;          // rel_error <= 0.5%
    bool expected_consistent = true;  // documented verdict for this cell
};

// Re-derives every cost cell of the published comparison table. Three
// per-invocation cells are known not to follow the stated formula
// (billed RAM likely differed from peak RAM); those are expected
// inconsistent and must differ by more than 1%.
std::vector<CostCheckCell> run_cost_regression(const PricingConfig& pricing);

// True when every cell's verdict matches its documented expectation.
bool cost_regression_ok(const std::vector<CostCheckCell>& cells);

} // namespace gradmesh

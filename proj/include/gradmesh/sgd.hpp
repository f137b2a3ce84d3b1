#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace gradmesh {

// Softmax-regression parameters. One weight row per class plus a bias
// vector; the flat layout (weights row-major by class, then biases) is
// shared with GradientVector so chunking stays deterministic.
struct ModelParams {
    Eigen::MatrixXd weights; // classes x features
    Eigen::VectorXd bias;    // classes

    int classes() const { return static_cast<int>(weights.rows()); }
    int features() const { return static_cast<int>(weights.cols()); }
    Eigen::Index dim() const { return weights.size() + bias.size(); }

    Eigen::VectorXd flat() const;
    static ModelParams from_flat(const Eigen::VectorXd& flat, int classes, int features);
};

// Flat model-update direction: classes*(features+1) entries, weights
// first (row-major by class) then biases.
struct GradientVector {
    Eigen::VectorXd values;
    int classes = 0;
    int features = 0;

    Eigen::Index dim() const { return values.size(); }
};

struct Minibatch {
    Eigen::MatrixXd examples; // size x features
    std::vector<int> labels;  // class indices

    Eigen::Index size() const { return examples.rows(); }
};

struct Dataset {
    Eigen::MatrixXd examples; // n x features
    std::vector<int> labels;
    std::uint64_t seed = 0;
    int classes = 0;
    int features = 0;

    Eigen::Index size() const { return examples.rows(); }
};

// One worker's epoch schedule: batches_per_worker disjoint minibatches.
using MinibatchSchedule = std::vector<Minibatch>;

ModelParams init_model(int classes, int features, std::uint64_t seed);

// Mean-reduced gradient of softmax cross-entropy over the batch. Mean
// (not sum) reduction makes averaging worker gradients equal the
// full-batch gradient.
GradientVector compute_gradient(const ModelParams& params, const Minibatch& batch);

// Mean softmax cross-entropy over the batch.
double compute_loss(const ModelParams& params, const Minibatch& batch);

// params - lr * grad, elementwise.
ModelParams apply_update(const ModelParams& params, const GradientVector& grad, double lr);

// Central-difference gradient of compute_loss, coordinate by coordinate.
// Verification oracle: shares no code with compute_gradient.
GradientVector finite_diff_gradient(const ModelParams& params, const Minibatch& batch,
                                    double eps = 1e-5);

// Gaussian clusters, one per class, class centers scaled so the minimum
// pairwise center distance equals `separation`. Labels are assigned
// round-robin, then example order is shuffled by the seed.
Dataset generate_synthetic_dataset(Eigen::Index n, int classes, int features,
                                   double separation, std::uint64_t seed);

// Disjoint per-worker schedules drawn without replacement from a seeded
// permutation of the dataset.
std::vector<MinibatchSchedule> partition_dataset(const Dataset& ds, int workers,
                                                 int batches_per_worker,
                                                 Eigen::Index batch_size);

// Fraction of examples whose argmax logit matches the label.
double evaluate_accuracy(const ModelParams& params, const Dataset& ds);
double evaluate_loss(const ModelParams& params, const Dataset& ds);

// Arithmetic mean with a pinned accumulation order (ascending index).
// Every aggregation path in the strategies runs through this so that
// equal inputs give bitwise-equal aggregates.
Eigen::VectorXd ordered_mean(const std::vector<Eigen::VectorXd>& values);

} // namespace gradmesh

#include "gradmesh/sgd.hpp"

#include "gradmesh/errors.hpp"
#include "gradmesh/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace gradmesh {

namespace {

void check_batch_dims(const ModelParams& params, const Minibatch& batch) {
    if (batch.size() < 1) throw ContractError("minibatch is empty");
    if (batch.examples.cols() != params.features())
        throw ContractError("minibatch feature width " + std::to_string(batch.examples.cols()) +
                            " does not match model features " +
                            std::to_string(params.features()));
    if (static_cast<Eigen::Index>(batch.labels.size()) != batch.size())
        throw ContractError("label count does not match example count");
    for (int label : batch.labels)
        if (label < 0 || label >= params.classes())
            throw ContractError("label " + std::to_string(label) + " outside class range");
}

// Row-wise softmax probabilities plus the mean cross-entropy, computed
// with the usual max-shift for stability.
Eigen::MatrixXd softmax_probs(const ModelParams& params, const Minibatch& batch,
                              double* mean_loss) {
    Eigen::MatrixXd logits = batch.examples * params.weights.transpose();
    logits.rowwise() += params.bias.transpose();

    const Eigen::VectorXd shift = logits.rowwise().maxCoeff();
    logits.colwise() -= shift;
    Eigen::MatrixXd probs = logits.array().exp();
    const Eigen::VectorXd norm = probs.rowwise().sum();

    if (mean_loss) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < batch.size(); ++i)
            total += std::log(norm(i)) - logits(i, batch.labels[static_cast<std::size_t>(i)]);
        *mean_loss = total / static_cast<double>(batch.size());
    }

    probs.array().colwise() /= norm.array();
    return probs;
}

} // namespace

Eigen::VectorXd ModelParams::flat() const {
    Eigen::VectorXd out(dim());
    const int k = classes();
    const int f = features();
    for (int c = 0; c < k; ++c) out.segment(static_cast<Eigen::Index>(c) * f, f) = weights.row(c);
    out.tail(k) = bias;
    return out;
}

ModelParams ModelParams::from_flat(const Eigen::VectorXd& flat, int classes, int features) {
    if (flat.size() != static_cast<Eigen::Index>(classes) * (features + 1))
        throw ContractError("flat parameter vector has wrong length");
    ModelParams p;
    p.weights.resize(classes, features);
    for (int c = 0; c < classes; ++c)
        p.weights.row(c) = flat.segment(static_cast<Eigen::Index>(c) * features, features);
    p.bias = flat.tail(classes);
    return p;
}

ModelParams init_model(int classes, int features, std::uint64_t seed) {
    if (classes < 2) throw ConfigError("model needs at least 2 classes");
    if (features < 1) throw ConfigError("model needs at least 1 feature");

    DetRng rng(mix_seed(seed, 0x10de1));
    ModelParams p;
    p.weights.resize(classes, features);
    p.bias.resize(classes);
    constexpr double kInitRange = 0.05;
    for (int c = 0; c < classes; ++c)
        for (int j = 0; j < features; ++j) p.weights(c, j) = rng.symmetric(kInitRange);
    for (int c = 0; c < classes; ++c) p.bias(c) = rng.symmetric(kInitRange);
    return p;
}

GradientVector compute_gradient(const ModelParams& params, const Minibatch& batch) {
    check_batch_dims(params, batch);

    Eigen::MatrixXd probs = softmax_probs(params, batch, nullptr);
    for (Eigen::Index i = 0; i < batch.size(); ++i)
        probs(i, batch.labels[static_cast<std::size_t>(i)]) -= 1.0;

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    const Eigen::MatrixXd grad_w = (probs.transpose() * batch.examples) * inv_n;
    const Eigen::VectorXd grad_b = probs.colwise().sum() * inv_n;

    GradientVector g;
    g.classes = params.classes();
    g.features = params.features();
    g.values.resize(params.dim());
    for (int c = 0; c < g.classes; ++c)
        g.values.segment(static_cast<Eigen::Index>(c) * g.features, g.features) = grad_w.row(c);
    g.values.tail(g.classes) = grad_b;
    return g;
}

double compute_loss(const ModelParams& params, const Minibatch& batch) {
    check_batch_dims(params, batch);
    double loss = 0.0;
    softmax_probs(params, batch, &loss);
    return loss;
}

ModelParams apply_update(const ModelParams& params, const GradientVector& grad, double lr) {
    if (lr <= 0.0) throw ConfigError("learning rate must be positive");
    if (grad.dim() != params.dim())
        throw ContractError("gradient length does not match parameter count");
    return ModelParams::from_flat(params.flat() - lr * grad.values, params.classes(),
                                  params.features());
}

GradientVector finite_diff_gradient(const ModelParams& params, const Minibatch& batch,
                                    double eps) {
    if (eps <= 0.0) throw ContractError("finite-difference step must be positive");
    check_batch_dims(params, batch);

    const Eigen::VectorXd base = params.flat();
    GradientVector g;
    g.classes = params.classes();
    g.features = params.features();
    g.values.resize(base.size());

    for (Eigen::Index i = 0; i < base.size(); ++i) {
        Eigen::VectorXd plus = base;
        Eigen::VectorXd minus = base;
        plus(i) += eps;
        minus(i) -= eps;
        const double lp =
            compute_loss(ModelParams::from_flat(plus, g.classes, g.features), batch);
        const double lm =
            compute_loss(ModelParams::from_flat(minus, g.classes, g.features), batch);
        g.values(i) = (lp - lm) / (2.0 * eps);
    }
    return g;
}

Dataset generate_synthetic_dataset(Eigen::Index n, int classes, int features,
                                   double separation, std::uint64_t seed) {
    if (classes < 1 || features < 1) throw ConfigError("dataset needs classes >= 1, features >= 1");
    if (n < classes) throw ConfigError("dataset size must be at least the class count");
    if (separation < 0.0) throw ConfigError("separation must be non-negative");

    DetRng rng(mix_seed(seed, 0xda7a));

    Eigen::MatrixXd centers(classes, features);
    for (int c = 0; c < classes; ++c)
        for (int j = 0; j < features; ++j) centers(c, j) = rng.gaussian();

    if (classes >= 2) {
        // Rescale so the minimum pairwise center distance equals `separation`.
        double min_dist = std::numeric_limits<double>::infinity();
        for (int a = 0; a < classes; ++a)
            for (int b = a + 1; b < classes; ++b)
                min_dist = std::min(min_dist, (centers.row(a) - centers.row(b)).norm());
        centers *= separation / min_dist;
    }

    Dataset ds;
    ds.seed = seed;
    ds.classes = classes;
    ds.features = features;
    ds.examples.resize(n, features);
    ds.labels.resize(static_cast<std::size_t>(n));

    for (Eigen::Index i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % classes);
        ds.labels[static_cast<std::size_t>(i)] = label;
        for (int j = 0; j < features; ++j) ds.examples(i, j) = centers(label, j) + rng.gaussian();
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    Dataset shuffled = ds;
    for (Eigen::Index i = 0; i < n; ++i) {
        shuffled.examples.row(i) = ds.examples.row(order[static_cast<std::size_t>(i)]);
        shuffled.labels[static_cast<std::size_t>(i)] =
            ds.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    }
    return shuffled;
}

std::vector<MinibatchSchedule> partition_dataset(const Dataset& ds, int workers,
                                                 int batches_per_worker,
                                                 Eigen::Index batch_size) {
    if (workers < 1 || batches_per_worker < 1 || batch_size < 1)
        throw ConfigError("partition needs workers, batches and batch size >= 1");
    const Eigen::Index needed =
        static_cast<Eigen::Index>(workers) * batches_per_worker * batch_size;
    if (needed > ds.size())
        throw ConfigError("partition needs " + std::to_string(needed) + " examples but dataset has " +
                          std::to_string(ds.size()));

    std::vector<Eigen::Index> perm(static_cast<std::size_t>(ds.size()));
    std::iota(perm.begin(), perm.end(), 0);
    DetRng rng(mix_seed(ds.seed, 0x9a27));
    rng.shuffle(perm);

    std::vector<MinibatchSchedule> schedules(static_cast<std::size_t>(workers));
    Eigen::Index cursor = 0;
    for (int w = 0; w < workers; ++w) {
        auto& schedule = schedules[static_cast<std::size_t>(w)];
        schedule.reserve(static_cast<std::size_t>(batches_per_worker));
        for (int b = 0; b < batches_per_worker; ++b) {
            Minibatch batch;
            batch.examples.resize(batch_size, ds.features);
            batch.labels.resize(static_cast<std::size_t>(batch_size));
            for (Eigen::Index i = 0; i < batch_size; ++i, ++cursor) {
                const Eigen::Index src = perm[static_cast<std::size_t>(cursor)];
                batch.examples.row(i) = ds.examples.row(src);
                batch.labels[static_cast<std::size_t>(i)] =
                    ds.labels[static_cast<std::size_t>(src)];
            }
            schedule.push_back(std::move(batch));
        }
    }
    return schedules;
}

double evaluate_accuracy(const ModelParams& params, const Dataset& ds) {
    Eigen::MatrixXd logits = ds.examples * params.weights.transpose();
    logits.rowwise() += params.bias.transpose();
    Eigen::Index correct = 0;
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        Eigen::Index argmax = 0;
        logits.row(i).maxCoeff(&argmax);
        if (static_cast<int>(argmax) == ds.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

double evaluate_loss(const ModelParams& params, const Dataset& ds) {
    Minibatch all;
    all.examples = ds.examples;
    all.labels = ds.labels;
    return compute_loss(params, all);
}

Eigen::VectorXd ordered_mean(const std::vector<Eigen::VectorXd>& values) {
    if (values.empty()) throw ContractError("mean of zero vectors");
    Eigen::VectorXd sum = values.front();
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i].size() != sum.size())
            throw ContractError("mean over vectors of unequal length");
        sum += values[i];
    }
    return sum / static_cast<double>(values.size());
}

} // namespace gradmesh

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedsim/data.hpp"

namespace fedsim {

// Flat parameter vector. Dimension is fixed per experiment; every blended
// vector shares it.
using ModelVector = std::vector<double>;

enum class LearnerKind { SoftmaxRegression, Mlp };

LearnerKind learner_kind_from_string(const std::string& s);
const char* to_string(LearnerKind kind);

// Layer sizes of the learner. Hidden layers use the rectifier; the output
// layer is linear followed by log-softmax.
struct LearnerSpec {
    LearnerKind kind = LearnerKind::SoftmaxRegression;
    int input_dim = 0;
    std::vector<int> hidden_dims;  // empty for softmax regression
    int class_count = 0;

    // Total parameter count: per layer, weights (out x in) followed by biases.
    std::size_t param_count() const;
    void validate() const;
};

struct SgdConfig {
    double learning_rate = 0.01;
    int batch_size = 5;
    int local_epochs = 1;
};

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

// Kaiming-style uniform init scaled by fan-in, biases zero.
ModelVector init_model(const LearnerSpec& spec, std::uint64_t seed);

// Mean cross-entropy loss over the given examples.
double loss_value(const ModelVector& model, const Dataset& data,
                  std::span<const std::uint32_t> examples, const LearnerSpec& spec);

// Gradient of the mean cross-entropy loss; grad is resized to the model size.
void loss_gradient(const ModelVector& model, const Dataset& data,
                   std::span<const std::uint32_t> examples, const LearnerSpec& spec,
                   ModelVector& grad);

// One SGD step: model - lr * mean gradient over the batch. Pure; the input
// model is not modified.
ModelVector local_sgd_step(const ModelVector& model, const Dataset& data,
                           std::span<const std::uint32_t> batch, double learning_rate,
                           const LearnerSpec& spec);

// cfg.local_epochs epochs of mini-batch SGD over a seeded shuffle of the
// partition. The shuffle seed of epoch e is mix_seed(seed, first_epoch + e),
// so runs compose: epochs [0,E) equal epochs [0,1) then [1,2) and so on.
ModelVector train_local(const ModelVector& model, const Dataset& data,
                        std::span<const std::uint32_t> partition, const SgdConfig& cfg,
                        const LearnerSpec& spec, std::uint64_t seed,
                        std::int64_t first_epoch = 0);

// Elementwise sum of coefficients[m] * models[m]. Coefficients must be
// nonnegative and sum to 1 within 1e-12.
ModelVector weighted_sum(std::span<const ModelVector> models,
                         std::span<const double> coefficients);

// beta * global + (1 - beta) * local, beta in [0, 1].
ModelVector convex_blend(const ModelVector& global_model, const ModelVector& local_model,
                         double beta);

// Mean cross-entropy loss and top-1 accuracy on the full dataset.
EvalResult evaluate(const ModelVector& model, const Dataset& data, const LearnerSpec& spec);

}  // namespace fedsim

#include "fedsim/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

namespace {

struct LayerView {
    std::size_t w_off = 0;
    std::size_t b_off = 0;
    int in = 0;
    int out = 0;
};

std::vector<LayerView> layer_views(const LearnerSpec& spec) {
    std::vector<int> dims;
    dims.push_back(spec.input_dim);
    for (int h : spec.hidden_dims) dims.push_back(h);
    dims.push_back(spec.class_count);

    std::vector<LayerView> layers(dims.size() - 1);
    std::size_t off = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        layers[l].in = dims[l];
        layers[l].out = dims[l + 1];
        layers[l].w_off = off;
        off += static_cast<std::size_t>(layers[l].out) * dims[l];
        layers[l].b_off = off;
        off += static_cast<std::size_t>(layers[l].out);
    }
    return layers;
}

void check_model_dim(const ModelVector& model, const LearnerSpec& spec, const char* where) {
    if (model.size() != spec.param_count()) {
        std::ostringstream msg;
        msg << where << ": model has " << model.size() << " parameters, spec expects "
            << spec.param_count();
        throw ConfigError(msg.str());
    }
}

void check_data_dim(const Dataset& data, const LearnerSpec& spec, const char* where) {
    if (data.feature_dim != spec.input_dim) {
        std::ostringstream msg;
        msg << where << ": dataset feature dim " << data.feature_dim
            << " does not match learner input dim " << spec.input_dim;
        throw ConfigError(msg.str());
    }
}

// Activations of every layer for one example; acts.back() holds the logits.
void forward(const ModelVector& model, const std::vector<LayerView>& layers,
             const double* x, std::vector<std::vector<double>>& acts) {
    acts.resize(layers.size());
    const double* input = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const LayerView& lv = layers[l];
        acts[l].assign(static_cast<std::size_t>(lv.out), 0.0);
        for (int k = 0; k < lv.out; ++k) {
            const double* wk = model.data() + lv.w_off + static_cast<std::size_t>(k) * lv.in;
            double z = model[lv.b_off + k];
            for (int j = 0; j < lv.in; ++j) z += wk[j] * input[j];
            // rectifier on hidden layers, identity on the output layer
            if (l + 1 < layers.size() && z < 0.0) z = 0.0;
            acts[l][k] = z;
        }
        input = acts[l].data();
    }
}

double log_sum_exp(const std::vector<double>& logits) {
    double zmax = -std::numeric_limits<double>::infinity();
    for (double z : logits) zmax = std::max(zmax, z);
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - zmax);
    return zmax + std::log(sum);
}

// Adds this example's cross-entropy gradient into grad (not yet divided by
// the batch size).
void accumulate_gradient(const ModelVector& model, const std::vector<LayerView>& layers,
                         const double* x, int label,
                         std::vector<std::vector<double>>& acts,
                         std::vector<std::vector<double>>& deltas, ModelVector& grad) {
    forward(model, layers, x, acts);

    deltas.resize(layers.size());
    const std::vector<double>& logits = acts.back();
    const double lse = log_sum_exp(logits);
    std::vector<double>& dlast = deltas.back();
    dlast.resize(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) {
        dlast[k] = std::exp(logits[k] - lse);
    }
    dlast[static_cast<std::size_t>(label)] -= 1.0;

    for (std::size_t l = layers.size(); l-- > 0;) {
        const LayerView& lv = layers[l];
        const double* input = (l == 0) ? x : acts[l - 1].data();
        const std::vector<double>& d = deltas[l];
        for (int k = 0; k < lv.out; ++k) {
            const double dk = d[static_cast<std::size_t>(k)];
            grad[lv.b_off + k] += dk;
            double* gw = grad.data() + lv.w_off + static_cast<std::size_t>(k) * lv.in;
            for (int j = 0; j < lv.in; ++j) gw[j] += dk * input[j];
        }
        if (l == 0) break;
        // delta through the rectifier: zero where the pre-activation was clipped
        std::vector<double>& dprev = deltas[l - 1];
        dprev.assign(static_cast<std::size_t>(lv.in), 0.0);
        for (int j = 0; j < lv.in; ++j) {
            if (acts[l - 1][static_cast<std::size_t>(j)] <= 0.0) continue;
            double s = 0.0;
            for (int k = 0; k < lv.out; ++k) {
                s += model[lv.w_off + static_cast<std::size_t>(k) * lv.in + j] *
                     d[static_cast<std::size_t>(k)];
            }
            dprev[static_cast<std::size_t>(j)] = s;
        }
    }
}

}  // namespace

LearnerKind learner_kind_from_string(const std::string& s) {
    if (s == "softmax") return LearnerKind::SoftmaxRegression;
    if (s == "mlp") return LearnerKind::Mlp;
    throw ConfigError("unknown learner kind '" + s + "' (expected softmax or mlp)");
}

const char* to_string(LearnerKind kind) {
    return kind == LearnerKind::SoftmaxRegression ? "softmax" : "mlp";
}

std::size_t LearnerSpec::param_count() const {
    std::size_t n = 0;
    int in = input_dim;
    for (int h : hidden_dims) {
        n += static_cast<std::size_t>(h) * in + h;
        in = h;
    }
    n += static_cast<std::size_t>(class_count) * in + class_count;
    return n;
}

void LearnerSpec::validate() const {
    if (input_dim < 1) throw ConfigError("learner input_dim must be >= 1");
    if (class_count < 2) throw ConfigError("learner class_count must be >= 2");
    for (int h : hidden_dims) {
        if (h < 1) throw ConfigError("learner hidden dims must be >= 1");
    }
    if (kind == LearnerKind::SoftmaxRegression && !hidden_dims.empty()) {
        throw ConfigError("softmax learner takes no hidden dims");
    }
}

ModelVector init_model(const LearnerSpec& spec, std::uint64_t seed) {
    spec.validate();
    ModelVector model(spec.param_count(), 0.0);
    Rng rng(seed);
    for (const LayerView& lv : layer_views(spec)) {
        const double bound = std::sqrt(6.0 / lv.in);
        const std::size_t count = static_cast<std::size_t>(lv.out) * lv.in;
        for (std::size_t i = 0; i < count; ++i) {
            model[lv.w_off + i] = (2.0 * rng.next_double() - 1.0) * bound;
        }
        // biases stay zero
    }
    return model;
}

double loss_value(const ModelVector& model, const Dataset& data,
                  std::span<const std::uint32_t> examples, const LearnerSpec& spec) {
    if (examples.empty()) throw ConfigError("loss_value: empty example set");
    check_model_dim(model, spec, "loss_value");
    check_data_dim(data, spec, "loss_value");
    const auto layers = layer_views(spec);
    std::vector<std::vector<double>> acts;
    double total = 0.0;
    for (std::uint32_t idx : examples) {
        forward(model, layers, data.example(idx), acts);
        const std::vector<double>& logits = acts.back();
        total += log_sum_exp(logits) - logits[static_cast<std::size_t>(data.labels[idx])];
    }
    return total / static_cast<double>(examples.size());
}

void loss_gradient(const ModelVector& model, const Dataset& data,
                   std::span<const std::uint32_t> examples, const LearnerSpec& spec,
                   ModelVector& grad) {
    if (examples.empty()) throw ConfigError("loss_gradient: empty example set");
    check_model_dim(model, spec, "loss_gradient");
    check_data_dim(data, spec, "loss_gradient");
    const auto layers = layer_views(spec);
    grad.assign(model.size(), 0.0);
    std::vector<std::vector<double>> acts;
    std::vector<std::vector<double>> deltas;
    for (std::uint32_t idx : examples) {
        accumulate_gradient(model, layers, data.example(idx), data.labels[idx], acts, deltas,
                            grad);
    }
    const double inv = 1.0 / static_cast<double>(examples.size());
    for (double& g : grad) g *= inv;
}

ModelVector local_sgd_step(const ModelVector& model, const Dataset& data,
                           std::span<const std::uint32_t> batch, double learning_rate,
                           const LearnerSpec& spec) {
    if (batch.empty()) throw ConfigError("local_sgd_step: empty batch");
    ModelVector grad;
    loss_gradient(model, data, batch, spec, grad);
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!std::isfinite(grad[i])) {
            std::ostringstream msg;
            msg << "local_sgd_step: non-finite gradient entry " << i << " (" << grad[i] << ")";
            throw NumericError(msg.str());
        }
    }
    ModelVector next = model;
    for (std::size_t i = 0; i < next.size(); ++i) next[i] -= learning_rate * grad[i];
    return next;
}

ModelVector train_local(const ModelVector& model, const Dataset& data,
                        std::span<const std::uint32_t> partition, const SgdConfig& cfg,
                        const LearnerSpec& spec, std::uint64_t seed, std::int64_t first_epoch) {
    if (partition.empty()) throw ConfigError("train_local: empty partition");
    if (cfg.batch_size < 1) throw ConfigError("train_local: batch_size must be >= 1");
    if (cfg.local_epochs < 1) throw ConfigError("train_local: local_epochs must be >= 1");

    ModelVector w = model;
    std::vector<std::uint32_t> order(partition.begin(), partition.end());
    const std::size_t n = order.size();
    const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
    for (int e = 0; e < cfg.local_epochs; ++e) {
        // the epoch order depends only on (partition, epoch seed), so that
        // E epochs equal E separate single-epoch calls
        order.assign(partition.begin(), partition.end());
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(first_epoch + e)));
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t len = std::min(batch, n - start);
            w = local_sgd_step(w, data, std::span<const std::uint32_t>(order).subspan(start, len),
                               cfg.learning_rate, spec);
        }
    }
    return w;
}

ModelVector weighted_sum(std::span<const ModelVector> models,
                         std::span<const double> coefficients) {
    if (models.empty()) throw AggregationError("weighted_sum: no models");
    if (models.size() != coefficients.size()) {
        throw AggregationError("weighted_sum: model and coefficient counts differ");
    }
    double sum = 0.0;
    for (double c : coefficients) {
        if (c < 0.0) {
            std::ostringstream msg;
            msg << "weighted_sum: negative coefficient " << c;
            throw AggregationError(msg.str());
        }
        sum += c;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "weighted_sum: coefficients sum to " << sum << ", expected 1";
        throw AggregationError(msg.str());
    }
    const std::size_t dim = models[0].size();
    ModelVector out(dim, 0.0);
    for (std::size_t m = 0; m < models.size(); ++m) {
        if (models[m].size() != dim) {
            throw AggregationError("weighted_sum: model dimension mismatch");
        }
        const double c = coefficients[m];
        for (std::size_t i = 0; i < dim; ++i) out[i] += c * models[m][i];
    }
    return out;
}

ModelVector convex_blend(const ModelVector& global_model, const ModelVector& local_model,
                         double beta) {
    if (!(beta >= 0.0 && beta <= 1.0)) {
        std::ostringstream msg;
        msg << "convex_blend: beta " << beta << " outside [0, 1]";
        throw AggregationError(msg.str());
    }
    if (global_model.size() != local_model.size()) {
        throw AggregationError("convex_blend: model dimension mismatch");
    }
    ModelVector out(global_model.size());
    const double one_minus = 1.0 - beta;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = beta * global_model[i] + one_minus * local_model[i];
    }
    return out;
}

EvalResult evaluate(const ModelVector& model, const Dataset& data, const LearnerSpec& spec) {
    if (data.size() == 0) throw ConfigError("evaluate: empty dataset");
    check_model_dim(model, spec, "evaluate");
    check_data_dim(data, spec, "evaluate");
    const auto layers = layer_views(spec);
    std::vector<std::vector<double>> acts;
    double total_loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        forward(model, layers, data.example(i), acts);
        const std::vector<double>& logits = acts.back();
        const int label = data.labels[i];
        total_loss += log_sum_exp(logits) - logits[static_cast<std::size_t>(label)];
        std::size_t argmax = 0;
        for (std::size_t k = 1; k < logits.size(); ++k) {
            if (logits[k] > logits[argmax]) argmax = k;
        }
        if (static_cast<int>(argmax) == label) ++correct;
    }
    EvalResult r;
    r.loss = total_loss / static_cast<double>(data.size());
    r.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    return r;
}

}  // namespace fedsim

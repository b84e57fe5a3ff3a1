#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fedsim/errors.hpp"
#include "fedsim/model.hpp"
#include "fedsim/rng.hpp"
#include "support/test_support.hpp"

using namespace fedsim;
namespace ft = fedsim::test;

namespace {

LearnerSpec softmax_spec(int dim, int classes) {
    LearnerSpec spec;
    spec.kind = LearnerKind::SoftmaxRegression;
    spec.input_dim = dim;
    spec.class_count = classes;
    return spec;
}

LearnerSpec mlp_spec(int dim, std::vector<int> hidden, int classes) {
    LearnerSpec spec;
    spec.kind = LearnerKind::Mlp;
    spec.input_dim = dim;
    spec.hidden_dims = std::move(hidden);
    spec.class_count = classes;
    return spec;
}

Dataset random_dataset(int n, int dim, int classes, std::uint64_t seed) {
    Dataset ds;
    ds.feature_dim = dim;
    ds.class_count = classes;
    ds.features.resize(static_cast<std::size_t>(n) * dim);
    ds.labels.resize(static_cast<std::size_t>(n));
    Rng rng(seed);
    for (double& x : ds.features) x = rng.next_normal();
    for (int& y : ds.labels) y = static_cast<int>(rng.next_index(static_cast<std::size_t>(classes)));
    return ds;
}

std::vector<std::uint32_t> all_indices(const Dataset& ds) {
    std::vector<std::uint32_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0u);
    return idx;
}

}  // namespace

TEST_CASE("parameter counts follow the layer layout") {
    CHECK(softmax_spec(4, 3).param_count() == 15);       // 4*3 weights + 3 biases
    CHECK(mlp_spec(4, {5}, 3).param_count() == 43);      // (20+5) + (15+3)
    CHECK(mlp_spec(6, {8, 4}, 2).param_count() == 102);  // (48+8) + (32+4) + (8+2)
}

TEST_CASE("initialization is fan-in bounded with zero biases") {
    const LearnerSpec spec = mlp_spec(4, {5}, 3);
    const ModelVector model = init_model(spec, 3);
    CHECK(init_model(spec, 3) == model);
    CHECK(init_model(spec, 4) != model);
    const double bound0 = std::sqrt(6.0 / 4.0);
    const double bound1 = std::sqrt(6.0 / 5.0);
    for (std::size_t i = 0; i < 20; ++i) CHECK(std::abs(model[i]) <= bound0);
    for (std::size_t i = 20; i < 25; ++i) CHECK(model[i] == 0.0);  // hidden biases
    for (std::size_t i = 25; i < 40; ++i) CHECK(std::abs(model[i]) <= bound1);
    for (std::size_t i = 40; i < 43; ++i) CHECK(model[i] == 0.0);  // output biases
}

TEST_CASE("the all-zero model is the uniform predictor") {
    const LearnerSpec spec = softmax_spec(3, 4);
    const ModelVector zero(spec.param_count(), 0.0);
    const Dataset ds = random_dataset(8, 3, 4, 21);
    const auto idx = all_indices(ds);
    CHECK(ft::close_rel(loss_value(zero, ds, idx, spec), std::log(4.0), 1e-15));
}

TEST_CASE("zero learning rate leaves the model untouched") {
    const LearnerSpec spec = softmax_spec(5, 3);
    const Dataset ds = random_dataset(6, 5, 3, 2);
    const ModelVector model = init_model(spec, 1);
    CHECK(local_sgd_step(model, ds, all_indices(ds), 0.0, spec) == model);
}

TEST_CASE("the step rule never mutates its input") {
    const LearnerSpec spec = softmax_spec(4, 2);
    const Dataset ds = random_dataset(5, 4, 2, 3);
    const ModelVector model = init_model(spec, 2);
    const ModelVector copy = model;
    (void)local_sgd_step(model, ds, all_indices(ds), 0.1, spec);
    CHECK(model == copy);
}

TEST_CASE("analytic gradients match central differences for the linear learner") {
    const LearnerSpec spec = softmax_spec(6, 4);
    const Dataset ds = random_dataset(10, 6, 4, 5);
    // single example first, then a batch
    for (const std::vector<std::uint32_t>& idx :
         {std::vector<std::uint32_t>{3}, all_indices(ds)}) {
        const ModelVector model = init_model(spec, 7);
        ModelVector analytic;
        loss_gradient(model, ds, idx, spec, analytic);
        const ModelVector numeric = ft::numeric_gradient(model, ds, idx, spec);
        CHECK(ft::max_rel_gap(analytic, numeric, 1e-3) <= 1e-4);
    }
}

TEST_CASE("analytic gradients match central differences for the layered learner") {
    const LearnerSpec spec = mlp_spec(5, {7, 6}, 3);
    const Dataset ds = random_dataset(9, 5, 3, 6);
    const auto idx = all_indices(ds);
    const ModelVector model = init_model(spec, 8);
    ModelVector analytic;
    loss_gradient(model, ds, idx, spec, analytic);
    const ModelVector numeric = ft::numeric_gradient(model, ds, idx, spec);
    CHECK(ft::max_rel_gap(analytic, numeric, 1e-3) <= 1e-4);
}

TEST_CASE("duplicating every batch example does not change the step") {
    const LearnerSpec spec = softmax_spec(4, 3);
    const Dataset ds = random_dataset(6, 4, 3, 9);
    const ModelVector model = init_model(spec, 10);
    const auto idx = all_indices(ds);
    std::vector<std::uint32_t> doubled = idx;
    doubled.insert(doubled.end(), idx.begin(), idx.end());
    const ModelVector once = local_sgd_step(model, ds, idx, 0.05, spec);
    const ModelVector twice = local_sgd_step(model, ds, doubled, 0.05, spec);
    CHECK(ft::max_rel_gap(once, twice) <= 1e-13);
}

TEST_CASE("local training is bit-deterministic by seed") {
    const LearnerSpec spec = softmax_spec(4, 3);
    const Dataset ds = random_dataset(17, 4, 3, 11);
    const auto idx = all_indices(ds);
    SgdConfig cfg;
    cfg.local_epochs = 3;
    const ModelVector model = init_model(spec, 12);
    CHECK(train_local(model, ds, idx, cfg, spec, 5) == train_local(model, ds, idx, cfg, spec, 5));
    CHECK(train_local(model, ds, idx, cfg, spec, 5) != train_local(model, ds, idx, cfg, spec, 6));
}

TEST_CASE("a full-partition batch equals one step over the epoch shuffle") {
    const LearnerSpec spec = softmax_spec(4, 3);
    const Dataset ds = random_dataset(11, 4, 3, 13);
    const auto idx = all_indices(ds);
    SgdConfig cfg;
    cfg.batch_size = static_cast<int>(idx.size());
    const ModelVector model = init_model(spec, 14);
    const ModelVector trained = train_local(model, ds, idx, cfg, spec, 77);

    std::vector<std::uint32_t> order = idx;
    Rng rng(mix_seed(77, 0));
    rng.shuffle(order);
    CHECK(trained == local_sgd_step(model, ds, order, cfg.learning_rate, spec));
}

TEST_CASE("training walks the shuffled order in batches with a short tail") {
    const LearnerSpec spec = softmax_spec(3, 2);
    const Dataset ds = random_dataset(5, 3, 2, 15);
    const auto idx = all_indices(ds);
    SgdConfig cfg;
    cfg.batch_size = 2;
    const ModelVector model = init_model(spec, 16);
    const ModelVector trained = train_local(model, ds, idx, cfg, spec, 4);

    std::vector<std::uint32_t> order = idx;
    Rng rng(mix_seed(4, 0));
    rng.shuffle(order);
    ModelVector w = model;
    w = local_sgd_step(w, ds, std::span<const std::uint32_t>(order).subspan(0, 2), 0.01, spec);
    w = local_sgd_step(w, ds, std::span<const std::uint32_t>(order).subspan(2, 2), 0.01, spec);
    w = local_sgd_step(w, ds, std::span<const std::uint32_t>(order).subspan(4, 1), 0.01, spec);
    CHECK(trained == w);
}

TEST_CASE("two epochs equal two chained single-epoch calls") {
    const LearnerSpec spec = softmax_spec(4, 3);
    const Dataset ds = random_dataset(13, 4, 3, 17);
    const auto idx = all_indices(ds);
    SgdConfig two;
    two.local_epochs = 2;
    SgdConfig one;
    one.local_epochs = 1;
    const ModelVector model = init_model(spec, 18);
    const ModelVector direct = train_local(model, ds, idx, two, spec, 9);
    const ModelVector chained =
        train_local(train_local(model, ds, idx, one, spec, 9, 0), ds, idx, one, spec, 9, 1);
    CHECK(direct == chained);
}

TEST_CASE("empty inputs are configuration errors") {
    const LearnerSpec spec = softmax_spec(3, 2);
    const Dataset ds = random_dataset(4, 3, 2, 19);
    const ModelVector model = init_model(spec, 20);
    const std::vector<std::uint32_t> none;
    CHECK_THROWS_AS(local_sgd_step(model, ds, none, 0.1, spec), ConfigError);
    CHECK_THROWS_AS(train_local(model, ds, none, SgdConfig{}, spec, 0), ConfigError);
}

TEST_CASE("dimension mismatches are configuration errors") {
    const LearnerSpec spec = softmax_spec(3, 2);
    const Dataset wrong = random_dataset(4, 5, 2, 21);
    const ModelVector model = init_model(spec, 22);
    CHECK_THROWS_AS(local_sgd_step(model, wrong, all_indices(wrong), 0.1, spec), ConfigError);
    ModelVector short_model(spec.param_count() - 1, 0.0);
    const Dataset ds = random_dataset(4, 3, 2, 23);
    CHECK_THROWS_AS(loss_value(short_model, ds, all_indices(ds), spec), ConfigError);
}

TEST_CASE("a non-finite gradient names the offending entry") {
    const LearnerSpec spec = softmax_spec(3, 2);
    const Dataset ds = random_dataset(4, 3, 2, 24);
    ModelVector model(spec.param_count(), 0.0);
    model[0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_WITH_AS(local_sgd_step(model, ds, all_indices(ds), 0.1, spec),
                         doctest::Contains("gradient entry"), NumericError);
}

TEST_CASE("the linear learner rejects hidden layers") {
    LearnerSpec spec = softmax_spec(3, 2);
    spec.hidden_dims = {4};
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("weighted sum reproduces hand arithmetic") {
    const std::vector<ModelVector> models = {{1.0, 2.0}, {3.0, 6.0}};
    const std::vector<double> alpha = {0.25, 0.75};
    CHECK(weighted_sum(models, alpha) == ModelVector{2.5, 5.0});
}

TEST_CASE("weighted sum with a unit coefficient returns that model exactly") {
    const std::vector<ModelVector> models = {{0.1, -2.5, 3.75}, {9.0, 8.0, 7.0}};
    CHECK(weighted_sum(models, std::vector<double>{1.0, 0.0}) == models[0]);
}

TEST_CASE("weighted sum of identical models is that model") {
    const ModelVector w = {0.5, -1.25, 2.0, 0.125};
    const std::vector<ModelVector> models = {w, w, w};
    const ModelVector out = weighted_sum(models, std::vector<double>{0.2, 0.5, 0.3});
    CHECK(ft::max_rel_gap(out, w) <= 1e-15);
}

TEST_CASE("weighted sum is invariant to permuting models with their coefficients") {
    std::vector<ModelVector> models;
    Rng rng(25);
    for (int m = 0; m < 4; ++m) {
        ModelVector w(20);
        for (double& x : w) x = rng.next_normal();
        models.push_back(std::move(w));
    }
    const std::vector<double> alpha = {0.1, 0.2, 0.3, 0.4};
    const ModelVector base = weighted_sum(models, alpha);
    const std::vector<ModelVector> permuted = {models[2], models[0], models[3], models[1]};
    const std::vector<double> alpha_permuted = {0.3, 0.1, 0.4, 0.2};
    CHECK(ft::max_rel_gap(base, weighted_sum(permuted, alpha_permuted)) <= 1e-15);
}

TEST_CASE("weighted sum validates coefficients and dimensions") {
    const std::vector<ModelVector> models = {{1.0}, {2.0}};
    CHECK_THROWS_AS(weighted_sum(models, std::vector<double>{1.0}), AggregationError);
    CHECK_THROWS_WITH_AS(weighted_sum(models, std::vector<double>{0.4, 0.5}),
                         doctest::Contains("0.9"), AggregationError);
    CHECK_THROWS_AS(weighted_sum(models, std::vector<double>{-0.5, 1.5}), AggregationError);
    const std::vector<ModelVector> ragged = {{1.0}, {2.0, 3.0}};
    CHECK_THROWS_AS(weighted_sum(ragged, std::vector<double>{0.5, 0.5}), AggregationError);
}

TEST_CASE("convex blending matches hand arithmetic and boundary cases") {
    CHECK(convex_blend({0.0, 0.0}, {2.0, 4.0}, 0.5) == ModelVector{1.0, 2.0});
    const ModelVector g = {1.5, -2.5, 0.25};
    const ModelVector l = {0.5, 0.5, 0.5};
    CHECK(convex_blend(g, l, 1.0) == g);
    CHECK(convex_blend(g, l, 0.0) == l);
    CHECK_THROWS_AS(convex_blend(g, l, -0.1), AggregationError);
    CHECK_THROWS_AS(convex_blend(g, l, 1.1), AggregationError);
    CHECK_THROWS_AS(convex_blend(g, {0.5, 0.5}, 0.5), AggregationError);
}

TEST_CASE("convex blending agrees with the two-model weighted sum") {
    Rng rng(26);
    ModelVector g(30);
    ModelVector l(30);
    for (double& x : g) x = rng.next_normal();
    for (double& x : l) x = rng.next_normal();
    for (const double beta : {0.125, 0.4, 0.9}) {
        const ModelVector blended = convex_blend(g, l, beta);
        const std::vector<ModelVector> pair = {g, l};
        const ModelVector summed = weighted_sum(pair, std::vector<double>{beta, 1.0 - beta});
        CHECK(ft::max_rel_gap(blended, summed) <= 1e-15);
        for (std::size_t i = 0; i < g.size(); ++i) {
            CHECK(blended[i] >= std::min(g[i], l[i]) - 1e-12);
            CHECK(blended[i] <= std::max(g[i], l[i]) + 1e-12);
        }
    }
}

TEST_CASE("evaluation reports chance accuracy for the uniform predictor") {
    // balanced 10-class data; ties resolve to the lowest class index
    const LearnerSpec spec = softmax_spec(4, 10);
    Dataset ds = random_dataset(100, 4, 10, 27);
    for (std::size_t i = 0; i < ds.size(); ++i) ds.labels[i] = static_cast<int>(i / 10);
    const ModelVector zero(spec.param_count(), 0.0);
    const EvalResult r = evaluate(zero, ds, spec);
    CHECK(r.accuracy == 0.1);
    CHECK(ft::close_rel(r.loss, std::log(10.0), 1e-14));
}

TEST_CASE("a single correctly classified example scores perfect accuracy") {
    const LearnerSpec spec = softmax_spec(2, 2);
    Dataset ds;
    ds.feature_dim = 2;
    ds.class_count = 2;
    ds.features = {1.0, 0.0};
    ds.labels = {0};
    // weights route feature 0 to class 0
    ModelVector model(spec.param_count(), 0.0);
    model[0] = 5.0;
    CHECK(evaluate(model, ds, spec).accuracy == 1.0);
    ds.labels = {1};
    CHECK(evaluate(model, ds, spec).accuracy == 0.0);
}

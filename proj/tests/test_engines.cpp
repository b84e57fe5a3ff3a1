#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

#include "fedsim/afl_baseline.hpp"
#include "fedsim/csmaafl.hpp"
#include "fedsim/model.hpp"
#include "fedsim/rng.hpp"
#include "fedsim/simulation.hpp"
#include "support/test_support.hpp"

using namespace fedsim;
using namespace fedsim::test;

namespace {

// A dataset of identical examples: any equal-size partition holds the same
// content, so local updates coincide regardless of which indices a client got.
Dataset constant_dataset(int count, int dim, int class_count, int label) {
    Dataset d;
    d.feature_dim = dim;
    d.class_count = class_count;
    d.labels.assign(static_cast<std::size_t>(count), label);
    d.features.resize(static_cast<std::size_t>(count) * dim);
    for (int i = 0; i < count; ++i)
        for (int k = 0; k < dim; ++k)
            d.features[static_cast<std::size_t>(i) * dim + k] = 0.1 * (k + 1) - 0.2;
    return d;
}

void check_grants_sequential(const std::vector<GrantRecord>& grants, Tick duration) {
    for (std::size_t i = 0; i < grants.size(); ++i) {
        CHECK(grants[i].end - grants[i].start == duration);
        if (i > 0) CHECK(grants[i].start >= grants[i - 1].end);
    }
}

}  // namespace

TEST_CASE("synchronous rounds advance the clock by one slot each") {
    SimSetup setup = blob_setup(3, 3, 5, 10, 2, 0.3, {4, 4, 4}, 1, 1, 7);
    setup.budget_slots = 3.0;
    setup.eval_cadence_slots = 1.0;
    const Tick slot = setup.slot_ticks();
    CHECK(slot == 1 + 4 + 3 * 1);

    RunResult r = run_fedavg(setup);
    REQUIRE(r.records.size() == 3);
    CHECK(r.iterations == 3);
    CHECK(r.final_time == 3 * slot);
    for (std::size_t k = 0; k < r.records.size(); ++k) {
        const MetricsRecord& rec = r.records[k];
        CHECK(rec.sim_time == static_cast<Tick>(k + 1) * slot);
        CHECK(rec.iteration == static_cast<std::int64_t>(k + 1));
        CHECK(rec.relative_time == doctest::Approx(static_cast<double>(k + 1)).epsilon(1e-12));
        CHECK(rec.algorithm == "sfl");
    }
    CHECK(r.aggregations.empty());
}

TEST_CASE("one synchronous round equals the sample weighted average of local updates") {
    SimSetup setup = blob_setup(3, 3, 5, 12, 2, 0.3, {4, 6, 5}, 1, 1, 11);
    setup.budget_slots = 1.0;
    RunResult r = run_fedavg(setup);

    ModelVector w0 = init_model(setup.learner, model_init_seed(setup.seed));
    std::vector<ModelVector> locals;
    for (int m = 0; m < setup.clients(); ++m)
        locals.push_back(train_local(w0, setup.train, setup.plan.assignments[m], setup.sgd,
                                     setup.learner, client_train_seed(setup.seed, m), 0));
    ModelVector expected = weighted_sum(locals, setup.plan.coefficients());

    REQUIRE(r.final_model.size() == expected.size());
    CHECK(r.final_model == expected);
}

TEST_CASE("a single client round reduces to plain local training") {
    SimSetup setup = blob_setup(1, 3, 5, 8, 2, 0.3, {4}, 1, 1, 13);
    setup.budget_slots = 1.0;
    RunResult r = run_fedavg(setup);

    ModelVector w0 = init_model(setup.learner, model_init_seed(setup.seed));
    ModelVector expected = train_local(w0, setup.train, setup.plan.assignments[0], setup.sgd,
                                       setup.learner, client_train_seed(setup.seed, 0), 0);
    CHECK(r.final_model == expected);
}

TEST_CASE("aggregating identical local updates is a fixed point") {
    SimSetup setup = blob_setup(3, 3, 4, 4, 2, 0.3, {4, 4, 4}, 1, 1, 17);
    setup.train = constant_dataset(12, 4, 3, 1);
    setup.test = constant_dataset(3, 4, 3, 1);
    setup.plan = partition_iid(setup.train, 3, 99);
    setup.sgd = SgdConfig{0.1, 12, 1};
    setup.budget_slots = 1.0;
    setup.validate();

    RunResult r = run_fedavg(setup);
    ModelVector w0 = init_model(setup.learner, model_init_seed(setup.seed));
    ModelVector local = train_local(w0, setup.train, setup.plan.assignments[0], setup.sgd,
                                    setup.learner, client_train_seed(setup.seed, 0), 0);
    CHECK(max_rel_gap(r.final_model, local) <= 1e-12);
}

TEST_CASE("baseline async trunk reproduces the synchronous aggregate") {
    SimSetup setup = blob_setup(4, 3, 5, 10, 2, 0.3, {3, 5, 9, 2}, 1, 1, 19);

    SimSetup sync = setup;
    sync.budget_slots = 1.0;
    RunResult fedavg = run_fedavg(sync);

    SimSetup async = setup;
    async.max_trunks = 1;
    RunResult baseline = run_baseline_afl(async);

    REQUIRE(baseline.final_model.size() == fedavg.final_model.size());
    CHECK(max_rel_gap(baseline.final_model, fedavg.final_model) <= 1e-9);
    CHECK(baseline.aggregations.size() == 4);
}

TEST_CASE("baseline trunk timing matches the homogeneous closed form") {
    SimSetup setup = blob_setup(3, 3, 5, 10, 2, 0.3, {5, 5, 5}, 2, 1, 23);
    setup.max_trunks = 1;
    RunResult r = run_baseline_afl(setup);

    // Serialized uploads after the shared compute finish, then serialized
    // downloads: 3 * (2 + 1) + 5.
    REQUIRE(r.trunk_ends.size() == 1);
    CHECK(r.trunk_ends[0] == 14);
    CHECK(r.final_time == 14);

    REQUIRE(r.aggregations.size() == 3);
    const Tick expected_times[] = {7, 9, 11};
    const double expected_weights[] = {1.0, 0.5, 1.0 / 3.0};
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(r.aggregations[k].time == expected_times[k]);
        CHECK(r.aggregations[k].client_id == static_cast<int>(k));
        CHECK(r.aggregations[k].gap == static_cast<std::int64_t>(k + 1));
        CHECK(r.aggregations[k].local_weight ==
              doctest::Approx(expected_weights[k]).epsilon(1e-12));
    }
}

TEST_CASE("baseline heterogeneous trunk time stays within the analytic bounds") {
    SimSetup setup = blob_setup(3, 3, 5, 10, 2, 0.3, {2, 5, 9}, 2, 1, 29);
    setup.max_trunks = 1;
    RunResult r = run_baseline_afl(setup);

    auto [lo, hi] = afl_trunk_time_bounds(3, 2, 9, 2, 1);
    REQUIRE(r.trunk_ends.size() == 1);
    CHECK(r.trunk_ends[0] >= lo);
    CHECK(r.trunk_ends[0] <= hi);
}

TEST_CASE("baseline default order is fastest client first") {
    SimSetup setup = blob_setup(4, 3, 5, 10, 2, 0.3, {7, 2, 9, 4}, 1, 1, 31);
    setup.max_trunks = 2;
    RunResult r = run_baseline_afl(setup);

    REQUIRE(r.aggregations.size() == 8);
    const int expected_order[] = {1, 3, 0, 2};
    for (std::size_t k = 0; k < r.aggregations.size(); ++k)
        CHECK(r.aggregations[k].client_id == expected_order[k % 4]);
    CHECK(r.trunk_ends.size() == 2);
}

TEST_CASE("baseline honors an explicit upload schedule") {
    SimSetup setup = blob_setup(3, 3, 5, 10, 2, 0.3, {5, 5, 5}, 1, 1, 37);
    setup.max_trunks = 1;
    const std::vector<std::uint32_t> schedule = {2, 0, 1};
    RunResult r = run_baseline_afl(setup, schedule);

    REQUIRE(r.aggregations.size() == 3);
    for (std::size_t k = 0; k < 3; ++k)
        CHECK(r.aggregations[k].client_id == static_cast<int>(schedule[k]));
}

TEST_CASE("asynchronous runs are deterministic") {
    SimSetup setup = blob_setup(4, 3, 5, 10, 2, 0.35, {3, 7, 5, 4}, 1, 1, 41);
    setup.budget_slots = 4.0;

    SUBCASE("baseline") {
        RunResult a = run_baseline_afl(setup);
        RunResult b = run_baseline_afl(setup);
        CHECK(a.records == b.records);
        CHECK(a.final_model == b.final_model);
        REQUIRE(a.aggregations.size() == b.aggregations.size());
        for (std::size_t k = 0; k < a.aggregations.size(); ++k) {
            CHECK(a.aggregations[k].time == b.aggregations[k].time);
            CHECK(a.aggregations[k].client_id == b.aggregations[k].client_id);
            CHECK(a.aggregations[k].local_weight == b.aggregations[k].local_weight);
        }
    }
    SUBCASE("slot scheduler") {
        RunResult a = run_csmaafl(setup);
        RunResult b = run_csmaafl(setup);
        CHECK(a.records == b.records);
        CHECK(a.final_model == b.final_model);
        CHECK(a.final_time == b.final_time);
        REQUIRE(a.aggregations.size() == b.aggregations.size());
        for (std::size_t k = 0; k < a.aggregations.size(); ++k) {
            CHECK(a.aggregations[k].time == b.aggregations[k].time);
            CHECK(a.aggregations[k].client_id == b.aggregations[k].client_id);
            CHECK(a.aggregations[k].gap == b.aggregations[k].gap);
            CHECK(a.aggregations[k].local_weight == b.aggregations[k].local_weight);
        }
    }
    SUBCASE("randomized trunk scheduler") {
        SimSetup trunk = setup;
        trunk.scheduler = SchedulerMode::RandomizedTrunk;
        trunk.max_trunks = 3;
        RunResult a = run_csmaafl(trunk);
        RunResult b = run_csmaafl(trunk);
        CHECK(a.final_model == b.final_model);
        REQUIRE(a.aggregations.size() == b.aggregations.size());
        for (std::size_t k = 0; k < a.aggregations.size(); ++k)
            CHECK(a.aggregations[k].client_id == b.aggregations[k].client_id);
    }
}

TEST_CASE("slot scheduling aggregates at the transfer cadence once saturated") {
    SimSetup setup = blob_setup(4, 3, 5, 10, 2, 0.3, {6, 6, 6, 6}, 2, 1, 43);
    setup.adapt_epochs = false;
    setup.budget_slots = 2.0;
    RunResult r = run_csmaafl(setup);

    // tau <= (M - 1)(u + d), so a finished download always has the next
    // upload waiting: aggregations tick every u + d.
    REQUIRE(r.aggregations.size() >= 4);
    for (std::size_t k = 1; k < r.aggregations.size(); ++k)
        CHECK(r.aggregations[k].time - r.aggregations[k - 1].time == 3);
    check_grants_sequential(r.grants, 3);
}

TEST_CASE("homogeneous slot scheduling follows the hand-traced gap sequence") {
    SimSetup setup = blob_setup(3, 3, 5, 10, 2, 0.3, {4, 4, 4}, 1, 1, 47);
    setup.adapt_epochs = false;
    setup.gamma = 0.5;
    setup.budget_slots = 3.0;
    RunResult r = run_csmaafl(setup);

    // First pass round-robin: client k uploads at 4 + 2(k + 1); afterwards
    // every model is exactly one full rotation stale.
    REQUIRE(r.aggregations.size() == 10);
    for (std::size_t k = 0; k < r.aggregations.size(); ++k) {
        const AggregationEvent& a = r.aggregations[k];
        CHECK(a.time == static_cast<Tick>(5 + 2 * k));
        CHECK(a.iteration == static_cast<std::int64_t>(k + 1));
        CHECK(a.client_id == static_cast<int>(k % 3));
        CHECK(a.gap == static_cast<std::int64_t>(k < 2 ? k + 1 : 3));
    }
    CHECK(r.final_time == setup.budget_ticks());
}

TEST_CASE("aggregation weights follow the decayed staleness average") {
    SimSetup setup = blob_setup(4, 3, 5, 10, 2, 0.35, {3, 7, 5, 4}, 1, 1, 53);
    setup.gamma = 0.3;
    setup.budget_slots = 5.0;
    RunResult r = run_csmaafl(setup);
    REQUIRE(!r.aggregations.empty());

    StalenessAverage mu(static_cast<double>(setup.clients()), setup.rho);
    std::map<int, std::int64_t> last_basis;
    for (const AggregationEvent& a : r.aggregations) {
        CHECK(a.gap >= 1);
        const std::int64_t basis = a.iteration - a.gap;
        // The weight is taken before the average absorbs the new gap.
        CHECK(a.local_weight == staleness_weight(a.iteration, basis, mu.value(), setup.gamma));
        mu.observe(a.gap);

        CHECK(a.local_weight > 0.0);
        CHECK(a.local_weight <= 1.0);
        auto it = last_basis.find(a.client_id);
        if (it != last_basis.end()) CHECK(basis > it->second);
        last_basis[a.client_id] = basis;
    }
}

TEST_CASE("a single async client always has unit staleness") {
    SimSetup setup = blob_setup(1, 3, 5, 10, 2, 0.3, {5}, 1, 1, 59);
    setup.adapt_epochs = false;
    setup.budget_slots = 4.0;
    RunResult r = run_csmaafl(setup);

    REQUIRE(r.aggregations.size() == 4);
    for (const AggregationEvent& a : r.aggregations) CHECK(a.gap == 1);
}

TEST_CASE("randomized trunk order uploads every client once per trunk") {
    SimSetup setup = blob_setup(5, 3, 5, 10, 2, 0.35, {3, 8, 5, 4, 6}, 1, 1, 61);
    setup.scheduler = SchedulerMode::RandomizedTrunk;
    setup.max_trunks = 3;
    RunResult r = run_csmaafl(setup);

    REQUIRE(r.aggregations.size() == 15);
    CHECK(r.trunk_ends.size() == 3);
    for (int t = 0; t < 3; ++t) {
        std::vector<int> seen;
        for (int k = 0; k < 5; ++k) seen.push_back(r.aggregations[t * 5 + k].client_id);
        std::sort(seen.begin(), seen.end());
        CHECK(seen == std::vector<int>{0, 1, 2, 3, 4});
    }
    CHECK(r.final_time == r.trunk_ends.back());
    check_grants_sequential(r.grants, 2);
}

TEST_CASE("fair channel access bounds the wait between uploads") {
    SimSetup setup = blob_setup(4, 3, 5, 10, 2, 0.3, {2, 9, 4, 3}, 1, 1, 67);
    setup.budget_slots = 8.0;
    RunResult r = run_csmaafl(setup);
    REQUIRE(!r.aggregations.empty());

    std::vector<int> epochs = adapt_local_iterations(setup.profiles, setup.sgd.local_epochs,
                                                     setup.e_max);
    Tick min_cycle = 0, max_cycle = 0;
    for (int m = 0; m < setup.clients(); ++m) {
        const Tick cycle = epochs[m] * setup.profiles[m].compute_ticks +
                           setup.profiles[m].upload_ticks + setup.profiles[m].download_ticks;
        min_cycle = (m == 0) ? cycle : std::min(min_cycle, cycle);
        max_cycle = std::max(max_cycle, cycle);
    }
    const std::int64_t bound =
        ((max_cycle + min_cycle - 1) / min_cycle) * setup.clients();

    std::map<int, std::int64_t> last_upload;
    for (const AggregationEvent& a : r.aggregations) {
        auto it = last_upload.find(a.client_id);
        if (it == last_upload.end()) {
            CHECK(a.iteration <= bound);
        } else {
            CHECK(a.iteration - it->second <= bound);
        }
        last_upload[a.client_id] = a.iteration;
    }
    CHECK(last_upload.size() == static_cast<std::size_t>(setup.clients()));
}

TEST_CASE("event traces stay within the budget and in causal order") {
    SimSetup setup = blob_setup(3, 3, 5, 10, 2, 0.3, {4, 7, 5}, 1, 1, 71);
    setup.budget_slots = 3.0;
    RunResult r = run_csmaafl(setup);

    REQUIRE(!r.event_trace.empty());
    const Tick budget = setup.budget_ticks();
    for (std::size_t i = 0; i < r.event_trace.size(); ++i) {
        CHECK(r.event_trace[i].time >= 0);
        CHECK(r.event_trace[i].time <= budget);
        if (i > 0) CHECK(!event_after(r.event_trace[i - 1], r.event_trace[i]));
    }
    for (std::size_t i = 0; i < r.aggregations.size(); ++i) {
        CHECK(r.aggregations[i].time <= budget);
        CHECK(r.aggregations[i].iteration == static_cast<std::int64_t>(i + 1));
    }
    for (std::size_t i = 1; i < r.records.size(); ++i)
        CHECK(r.records[i].sim_time > r.records[i - 1].sim_time);
}

TEST_CASE("metric rows land on the evaluation cadence") {
    SimSetup setup = blob_setup(3, 3, 5, 10, 2, 0.3, {4, 4, 4}, 1, 1, 73);
    setup.adapt_epochs = false;
    setup.budget_slots = 7.5;
    const Tick slot = setup.slot_ticks();

    SUBCASE("whole slot cadence") {
        setup.eval_cadence_slots = 1.0;
        RunResult r = run_csmaafl(setup);
        REQUIRE(r.records.size() == 7);
        for (std::size_t k = 0; k < r.records.size(); ++k)
            CHECK(r.records[k].sim_time == static_cast<Tick>(k + 1) * slot);
    }
    SUBCASE("half slot cadence") {
        setup.eval_cadence_slots = 0.5;
        RunResult r = run_csmaafl(setup);
        REQUIRE(r.records.size() == 15);
        for (std::size_t k = 0; k < r.records.size(); ++k)
            CHECK(2 * r.records[k].sim_time == static_cast<Tick>(k + 1) * slot);
    }
}

TEST_CASE("csmaafl metric rows carry the algorithm label and gamma") {
    SimSetup setup = blob_setup(3, 3, 5, 10, 2, 0.3, {4, 5, 6}, 1, 1, 79);
    setup.gamma = 0.4;
    setup.budget_slots = 2.0;
    RunResult r = run_csmaafl(setup);
    REQUIRE(!r.records.empty());
    for (const MetricsRecord& rec : r.records) {
        CHECK(rec.algorithm == "csmaafl");
        CHECK(rec.gamma == 0.4);
    }
}

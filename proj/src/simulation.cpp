#include "fedsim/simulation.hpp"

#include <algorithm>
#include <cassert>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fedsim/afl_baseline.hpp"
#include "fedsim/csmaafl.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

namespace {

constexpr std::uint64_t kInitTag = 0x696e6974;    // model initialization stream
constexpr std::uint64_t kTrainTag = 0x747261696e; // per-client training streams
constexpr std::uint64_t kTrunkTag = 0x7472756e6b; // randomized trunk orders

// Evaluates the global model at every cadence boundary. Boundaries strictly
// before the next event time see the state left by all earlier events;
// events at exactly a boundary are applied first.
class MetricsEmitter {
public:
    MetricsEmitter(const SimSetup& setup, std::string algorithm, double gamma,
                   std::vector<MetricsRecord>& out)
        : setup_(setup),
          algorithm_(std::move(algorithm)),
          gamma_(gamma),
          out_(out),
          slot_(setup.slot_ticks()),
          budget_(setup.budget_ticks()) {}

    void advance_to(Tick event_time, const ModelVector& w, std::int64_t iteration) {
        while (true) {
            const Tick b = next_boundary();
            if (b >= event_time || b > budget_) break;
            emit(b, w, iteration);
        }
    }

    void finish(const ModelVector& w, std::int64_t iteration) {
        while (true) {
            const Tick b = next_boundary();
            if (b > budget_) break;
            emit(b, w, iteration);
        }
    }

private:
    Tick next_boundary() const {
        const double b = static_cast<double>(k_ + 1) * setup_.eval_cadence_slots *
                         static_cast<double>(slot_);
        return static_cast<Tick>(std::llround(b));
    }

    void emit(Tick b, const ModelVector& w, std::int64_t iteration) {
        const EvalResult ev = evaluate(w, setup_.test, setup_.learner);
        MetricsRecord r;
        r.sim_time = b;
        r.relative_time = static_cast<double>(b) / static_cast<double>(slot_);
        r.iteration = iteration;
        r.loss = ev.loss;
        r.accuracy = ev.accuracy;
        r.algorithm = algorithm_;
        r.gamma = gamma_;
        out_.push_back(std::move(r));
        ++k_;
    }

    const SimSetup& setup_;
    std::string algorithm_;
    double gamma_;
    std::vector<MetricsRecord>& out_;
    Tick slot_;
    Tick budget_;
    std::int64_t k_ = 0;
};

std::vector<std::uint32_t> fastest_first_schedule(const SimSetup& setup) {
    std::vector<std::uint32_t> order(setup.profiles.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&setup](std::uint32_t a, std::uint32_t b) {
        return setup.profiles[a].compute_ticks < setup.profiles[b].compute_ticks;
    });
    return order;
}

std::span<const std::uint32_t> client_partition(const SimSetup& setup, int client) {
    return setup.plan.assignments[static_cast<std::size_t>(client)];
}

}  // namespace

SchedulerMode scheduler_mode_from_string(const std::string& s) {
    if (s == "slot") return SchedulerMode::Slot;
    if (s == "randomized-trunk") return SchedulerMode::RandomizedTrunk;
    throw ConfigError("unknown scheduler '" + s + "' (expected slot or randomized-trunk)");
}

const char* to_string(SchedulerMode mode) {
    return mode == SchedulerMode::Slot ? "slot" : "randomized-trunk";
}

Tick SimSetup::slowest_compute() const {
    Tick slowest = 0;
    for (const ClientProfile& p : profiles) slowest = std::max(slowest, p.compute_ticks);
    return slowest;
}

Tick SimSetup::slot_ticks() const {
    return sfl_round_time(clients(),
                          static_cast<Tick>(sgd.local_epochs) * slowest_compute(),
                          profiles.front().upload_ticks, profiles.front().download_ticks);
}

Tick SimSetup::budget_ticks() const {
    return static_cast<Tick>(
        std::llround(budget_slots * static_cast<double>(slot_ticks())));
}

void SimSetup::validate() const {
    if (profiles.empty()) throw ConfigError("simulation needs at least one client");
    if (plan.assignments.size() != profiles.size()) {
        throw ConfigError("partition plan does not cover every client");
    }
    for (std::size_t m = 0; m < profiles.size(); ++m) {
        const ClientProfile& p = profiles[m];
        if (p.client_id != static_cast<int>(m)) {
            throw ConfigError("client profiles must be ordered by id");
        }
        if (p.compute_ticks < 1 || p.upload_ticks < 1 || p.download_ticks < 1) {
            throw ConfigError("client times must be positive ticks");
        }
        // transfer-time variation is out of scope; the channel arithmetic
        // assumes one tau^u and one tau^d
        if (p.upload_ticks != profiles.front().upload_ticks ||
            p.download_ticks != profiles.front().download_ticks) {
            throw ConfigError("upload/download times must be identical across clients");
        }
        if (plan.assignments[m].empty()) {
            std::ostringstream msg;
            msg << "client " << m << " has an empty partition";
            throw ConfigError(msg.str());
        }
    }
    learner.validate();
    if (!(sgd.learning_rate >= 0.0)) throw ConfigError("learning rate must be nonnegative");
    if (sgd.batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (sgd.local_epochs < 1) throw ConfigError("local epochs must be >= 1");
    if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
    if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must be in (0, 1)");
    if (e_max < 1) throw ConfigError("e_max must be >= 1");
    if (!(budget_slots > 0.0)) throw ConfigError("time budget must be positive");
    if (!(eval_cadence_slots > 0.0)) throw ConfigError("evaluation cadence must be positive");
    if (static_cast<double>(slot_ticks()) * eval_cadence_slots < 1.0) {
        throw ConfigError("evaluation cadence is finer than one tick");
    }
    if (test.size() == 0) throw ConfigError("empty test set");
}

std::uint64_t model_init_seed(std::uint64_t master_seed) {
    return mix_seed(master_seed, kInitTag);
}

std::uint64_t client_train_seed(std::uint64_t master_seed, int client_id) {
    return mix_seed(master_seed, kTrainTag, static_cast<std::uint64_t>(client_id));
}

void write_event_trace(const std::filesystem::path& path, std::span<const SimEvent> events) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write event trace " + path.string());
    for (const SimEvent& e : events) {
        out << e.time << "\t" << to_string(e.kind) << "\t" << e.client_id << "\n";
    }
}

RunResult run_fedavg(const SimSetup& setup) {
    setup.validate();
    const int clients = setup.clients();
    const Tick upload = setup.profiles.front().upload_ticks;
    const Tick download = setup.profiles.front().download_ticks;
    const Tick round_ticks = setup.slot_ticks();
    const Tick budget = setup.budget_ticks();
    const std::vector<double> alpha = setup.plan.coefficients();

    RunResult result;
    MetricsEmitter emitter(setup, "sfl", 0.0, result.records);

    ModelVector w = init_model(setup.learner, model_init_seed(setup.seed));
    std::vector<ModelVector> locals(static_cast<std::size_t>(clients));

    Tick t = 0;
    std::int64_t round = 0;
    while (t + round_ticks <= budget) {
        const Tick round_end = t + round_ticks;
        const Tick compute_start = t + download;
        Tick slowest_done = compute_start;
        for (int m = 0; m < clients; ++m) {
            const ClientProfile& p = setup.profiles[static_cast<std::size_t>(m)];
            const Tick done =
                compute_start + static_cast<Tick>(setup.sgd.local_epochs) * p.compute_ticks;
            slowest_done = std::max(slowest_done, done);
            result.event_trace.push_back({compute_start, EventKind::DownloadDone, m});
            result.event_trace.push_back({done, EventKind::ComputeDone, m});
            locals[static_cast<std::size_t>(m)] =
                train_local(w, setup.train, client_partition(setup, m), setup.sgd,
                            setup.learner, client_train_seed(setup.seed, m),
                            round * setup.sgd.local_epochs);
        }
        // uploads start after the slowest client finishes, serialized in id order
        for (int m = 0; m < clients; ++m) {
            result.event_trace.push_back(
                {slowest_done + static_cast<Tick>(m + 1) * upload, EventKind::UploadDone, m});
        }

        emitter.advance_to(round_end, w, round);
        w = weighted_sum(locals, alpha);
        ++round;
        t = round_end;
    }
    emitter.finish(w, round);

    result.final_model = std::move(w);
    result.final_time = t;
    result.iterations = round;
    return result;
}

RunResult run_baseline_afl(const SimSetup& setup) {
    const auto schedule = fastest_first_schedule(setup);
    return run_baseline_afl(setup, schedule);
}

RunResult run_baseline_afl(const SimSetup& setup, std::span<const std::uint32_t> schedule) {
    setup.validate();
    const int clients = setup.clients();
    const Tick upload = setup.profiles.front().upload_ticks;
    const Tick download = setup.profiles.front().download_ticks;
    const Tick budget = setup.budget_ticks();
    const bool trunk_limited = setup.max_trunks >= 0;

    const std::vector<double> alpha = setup.plan.coefficients();
    const BetaSchedule betas = solve_betas(alpha, schedule);

    RunResult result;
    MetricsEmitter emitter(setup, "afl-baseline", 0.0, result.records);

    ModelVector w = init_model(setup.learner, model_init_seed(setup.seed));
    std::vector<ModelVector> locals(static_cast<std::size_t>(clients));

    Tick t = 0;
    std::int64_t trunk = 0;
    std::int64_t iteration = 0;
    bool cut = false;
    while (!cut && (trunk_limited ? trunk < setup.max_trunks : t < budget)) {
        // all clients train in parallel from the trunk-start broadcast;
        // mid-trunk aggregates are never incorporated
        std::vector<Tick> compute_done(static_cast<std::size_t>(clients));
        for (int m = 0; m < clients; ++m) {
            const ClientProfile& p = setup.profiles[static_cast<std::size_t>(m)];
            compute_done[static_cast<std::size_t>(m)] =
                t + static_cast<Tick>(setup.sgd.local_epochs) * p.compute_ticks;
            locals[static_cast<std::size_t>(m)] =
                train_local(w, setup.train, client_partition(setup, m), setup.sgd,
                            setup.learner, client_train_seed(setup.seed, m),
                            trunk * setup.sgd.local_epochs);
            result.event_trace.push_back(
                {compute_done[static_cast<std::size_t>(m)], EventKind::ComputeDone, m});
        }

        Tick channel_free = t;
        for (std::size_t k = 0; k < schedule.size(); ++k) {
            const std::uint32_t m = schedule[k];
            const Tick start = std::max(compute_done[m], channel_free);
            const Tick done = start + upload;
            if (!trunk_limited && done > budget) {
                cut = true;
                break;
            }
            emitter.advance_to(done, w, iteration);
            w = convex_blend(w, locals[m], betas.betas[k]);
            ++iteration;
            result.aggregations.push_back({done, iteration, static_cast<int>(m),
                                           static_cast<std::int64_t>(k) + 1,
                                           1.0 - betas.betas[k]});
            result.grants.push_back({static_cast<int>(m), start, done});
            result.event_trace.push_back({done, EventKind::UploadDone, static_cast<int>(m)});
            channel_free = done;
            t = done;
        }
        if (cut) break;

        // trunk-end broadcast: the aggregate goes out to every client over
        // the shared channel
        const Tick trunk_end = channel_free + static_cast<Tick>(clients) * download;
        if (!trunk_limited && trunk_end > budget) {
            t = channel_free;
            break;
        }
        for (int m = 0; m < clients; ++m) {
            const Tick done = channel_free + static_cast<Tick>(m + 1) * download;
            result.grants.push_back({m, channel_free + static_cast<Tick>(m) * download, done});
            result.event_trace.push_back({done, EventKind::DownloadDone, m});
        }
        t = trunk_end;
        result.trunk_ends.push_back(trunk_end);
        ++trunk;
    }
    emitter.finish(w, iteration);

    result.final_model = std::move(w);
    result.final_time = trunk_limited ? t : budget;
    result.iterations = iteration;
    return result;
}

namespace {

enum class ClientStatus { Computing, AwaitingSlot, Uploading, Downloading };

struct ClientState {
    ModelVector basis;            // model the next local pass starts from
    std::int64_t basis_iter = 0;  // global iteration of that model
    std::int64_t last_upload_iter = 0;
    std::int64_t epochs_done = 0;
    int epochs_per_pass = 1;
    ModelVector trained;
    ModelVector incoming;
    std::int64_t incoming_iter = 0;
    ClientStatus status = ClientStatus::Computing;
};

}  // namespace

RunResult run_csmaafl(const SimSetup& setup) {
    setup.validate();
    const int clients = setup.clients();
    const Tick upload = setup.profiles.front().upload_ticks;
    const Tick download = setup.profiles.front().download_ticks;
    const Tick budget = setup.budget_ticks();
    const bool trunk_mode = setup.scheduler == SchedulerMode::RandomizedTrunk;
    const bool trunk_limited = trunk_mode && setup.max_trunks >= 0;

    RunResult result;
    MetricsEmitter emitter(setup, "csmaafl", setup.gamma, result.records);

    std::vector<int> epochs(static_cast<std::size_t>(clients), setup.sgd.local_epochs);
    if (setup.adapt_epochs) {
        epochs = adapt_local_iterations(setup.profiles, setup.sgd.local_epochs, setup.e_max);
    }

    ModelVector w = init_model(setup.learner, model_init_seed(setup.seed));
    StalenessAverage mu(static_cast<double>(clients), setup.rho);
    std::int64_t iteration = 0;

    EventQueue queue;
    std::vector<ClientState> state(static_cast<std::size_t>(clients));
    for (int m = 0; m < clients; ++m) {
        ClientState& c = state[static_cast<std::size_t>(m)];
        c.basis = w;
        c.epochs_per_pass = epochs[static_cast<std::size_t>(m)];
        queue.push({static_cast<Tick>(c.epochs_per_pass) *
                        setup.profiles[static_cast<std::size_t>(m)].compute_ticks,
                    EventKind::ComputeDone, m});
    }

    // slot protocol state
    TdmaChannel channel;
    // randomized-trunk state
    std::int64_t trunk = 0;
    std::size_t trunk_pos = 0;
    std::vector<std::uint32_t> trunk_order;
    std::vector<bool> ready(static_cast<std::size_t>(clients), false);
    Tick busy_until = 0;
    std::int64_t downloads_done = 0;
    if (trunk_mode) {
        trunk_order = randomized_trunk_schedule(clients, 0, mix_seed(setup.seed, kTrunkTag));
    }

    const auto train_client = [&](int m) {
        ClientState& c = state[static_cast<std::size_t>(m)];
        SgdConfig cfg = setup.sgd;
        cfg.local_epochs = c.epochs_per_pass;
        c.trained = train_local(c.basis, setup.train, client_partition(setup, m), cfg,
                                setup.learner, client_train_seed(setup.seed, m),
                                c.epochs_done);
        c.epochs_done += c.epochs_per_pass;
    };

    const auto start_upload = [&](int m, Tick now) {
        state[static_cast<std::size_t>(m)].status = ClientStatus::Uploading;
        queue.push({now + upload, EventKind::UploadDone, m});
    };

    const auto try_grant = [&](Tick now) {
        if (trunk_mode) {
            if (trunk_limited && trunk >= setup.max_trunks) return;
            while (busy_until <= now && ready[trunk_order[trunk_pos]]) {
                const int m = static_cast<int>(trunk_order[trunk_pos]);
                ready[static_cast<std::size_t>(m)] = false;
                busy_until = now + upload + download;
                result.grants.push_back({m, now, busy_until});
                start_upload(m, now);
                ++trunk_pos;
                if (trunk_pos == trunk_order.size()) {
                    trunk_pos = 0;
                    ++trunk;
                    if (trunk_limited && trunk >= setup.max_trunks) return;
                    trunk_order = randomized_trunk_schedule(
                        clients, trunk, mix_seed(setup.seed, kTrunkTag));
                }
                break;  // channel now busy; the while form only re-checks state
            }
        } else {
            if (auto granted = channel.grant_next(now, upload + download)) {
                start_upload(*granted, now);
            }
        }
    };

    Tick t = 0;
    while (!queue.empty()) {
        t = queue.peek().time;
        if (!trunk_limited && t > budget) {
            t = budget;
            break;
        }
        emitter.advance_to(t, w, iteration);
        while (!queue.empty() && queue.peek().time == t) {
            const SimEvent e = *queue.try_pop();
            result.event_trace.push_back(e);
            ClientState& c = state[static_cast<std::size_t>(e.client_id)];
            switch (e.kind) {
                case EventKind::ComputeDone: {
                    assert(c.status == ClientStatus::Computing);
                    train_client(e.client_id);
                    c.status = ClientStatus::AwaitingSlot;
                    if (trunk_mode) {
                        ready[static_cast<std::size_t>(e.client_id)] = true;
                    } else {
                        channel.request(e.client_id, t, c.last_upload_iter);
                    }
                    break;
                }
                case EventKind::UploadDone: {
                    assert(c.status == ClientStatus::Uploading);
                    const std::int64_t j = iteration + 1;
                    const std::int64_t gap = j - c.basis_iter;
                    const double local_weight =
                        staleness_weight(j, c.basis_iter, mu.value(), setup.gamma);
                    w = convex_blend(w, c.trained, 1.0 - local_weight);
                    mu.observe(gap);
                    iteration = j;
                    c.last_upload_iter = j;
                    result.aggregations.push_back({t, j, e.client_id, gap, local_weight});
                    // the fresh aggregate goes back to the uploader only
                    c.incoming = w;
                    c.incoming_iter = j;
                    c.status = ClientStatus::Downloading;
                    queue.push({t + download, EventKind::DownloadDone, e.client_id});
                    break;
                }
                case EventKind::DownloadDone: {
                    assert(c.status == ClientStatus::Downloading);
                    c.basis = std::move(c.incoming);
                    c.basis_iter = c.incoming_iter;
                    c.status = ClientStatus::Computing;
                    queue.push({t + static_cast<Tick>(c.epochs_per_pass) *
                                        setup.profiles[static_cast<std::size_t>(e.client_id)]
                                            .compute_ticks,
                                EventKind::ComputeDone, e.client_id});
                    ++downloads_done;
                    if (downloads_done % clients == 0) result.trunk_ends.push_back(t);
                    break;
                }
            }
        }
        try_grant(t);
        // a completed final trunk ends the run before the idle compute tail
        if (trunk_limited && downloads_done == setup.max_trunks * clients) break;
    }
    emitter.finish(w, iteration);

    if (!trunk_mode) result.grants = channel.grants();
    result.final_model = std::move(w);
    result.final_time = trunk_limited ? t : budget;
    result.iterations = iteration;
    return result;
}

}  // namespace fedsim

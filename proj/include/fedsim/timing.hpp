#pragma once

#include <cstdint>
#include <optional>
#include <queue>
#include <utility>
#include <vector>

namespace fedsim {

// Simulated time in exact integer ticks; no floating point drift.
using Tick = std::int64_t;

// Values fix the tie order at equal timestamps.
enum class EventKind : int { UploadDone = 0, DownloadDone = 1, ComputeDone = 2 };

const char* to_string(EventKind kind);

struct SimEvent {
    Tick time = 0;
    EventKind kind = EventKind::ComputeDone;
    int client_id = 0;
};

inline bool event_after(const SimEvent& a, const SimEvent& b) {
    if (a.time != b.time) return a.time > b.time;
    if (a.kind != b.kind) return static_cast<int>(a.kind) > static_cast<int>(b.kind);
    return a.client_id > b.client_id;
}

// Min-queue over (time, kind, client_id); pops never go back in time.
class EventQueue {
public:
    void push(const SimEvent& e) { heap_.push(e); }
    bool empty() const { return heap_.empty(); }
    std::size_t size() const { return heap_.size(); }
    const SimEvent& peek() const { return heap_.top(); }

    // Earliest event, or nullopt once the simulation has drained.
    std::optional<SimEvent> try_pop();

private:
    struct After {
        bool operator()(const SimEvent& a, const SimEvent& b) const { return event_after(a, b); }
    };
    std::priority_queue<SimEvent, std::vector<SimEvent>, After> heap_;
    Tick last_popped_ = 0;
};

// Static timing facts per client. compute_ticks is the duration of one local
// pass; a client running E local epochs computes for E * compute_ticks.
struct ClientProfile {
    int client_id = 0;
    Tick compute_ticks = 1;   // tau_m = a_m * tau_base
    Tick upload_ticks = 1;    // tau^u
    Tick download_ticks = 1;  // tau^d
    int local_epochs = 1;     // E_m
};

// One synchronous round: broadcast, slowest compute, M serialized uploads.
Tick sfl_round_time(int clients, Tick slowest_compute, Tick upload, Tick download);

// Completion-time bounds for one asynchronous trunk. Equal bounds when the
// fastest and slowest compute times coincide.
std::pair<Tick, Tick> afl_trunk_time_bounds(int clients, Tick fastest_compute,
                                            Tick slowest_compute, Tick upload, Tick download);

struct PendingRequest {
    int client_id = 0;
    Tick request_time = 0;
    std::int64_t last_upload_slot = 0;
};

struct GrantRecord {
    int client_id = 0;
    Tick start = 0;
    Tick end = 0;
};

// Single shared TDMA channel: at most one transfer in flight. Grant order is
// earliest request first; among simultaneous requests the staler client
// (smaller last upload slot) wins; remaining ties go to the lower client id.
class TdmaChannel {
public:
    // Throws SchedulerError if the client already has a pending request.
    void request(int client_id, Tick now, std::int64_t last_upload_slot);

    bool busy(Tick now) const { return busy_until_ > now; }
    bool has_pending() const { return !pending_.empty(); }
    std::size_t pending_count() const { return pending_.size(); }

    // Grants the channel to the best pending request for [now, now+duration),
    // or returns nullopt while busy or idle-empty.
    std::optional<int> grant_next(Tick now, Tick duration);

    const std::vector<GrantRecord>& grants() const { return grants_; }

private:
    Tick busy_until_ = 0;
    std::vector<PendingRequest> pending_;
    std::vector<GrantRecord> grants_;
};

}  // namespace fedsim

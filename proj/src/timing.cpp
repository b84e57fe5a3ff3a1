#include "fedsim/timing.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

#include "fedsim/errors.hpp"

namespace fedsim {

const char* to_string(EventKind kind) {
    switch (kind) {
        case EventKind::UploadDone: return "UploadDone";
        case EventKind::DownloadDone: return "DownloadDone";
        case EventKind::ComputeDone: return "ComputeDone";
    }
    return "?";
}

std::optional<SimEvent> EventQueue::try_pop() {
    if (heap_.empty()) return std::nullopt;
    SimEvent e = heap_.top();
    heap_.pop();
    assert(e.time >= last_popped_);
    last_popped_ = e.time;
    return e;
}

Tick sfl_round_time(int clients, Tick slowest_compute, Tick upload, Tick download) {
    return download + slowest_compute + static_cast<Tick>(clients) * upload;
}

std::pair<Tick, Tick> afl_trunk_time_bounds(int clients, Tick fastest_compute,
                                            Tick slowest_compute, Tick upload, Tick download) {
    const Tick channel = static_cast<Tick>(clients) * (upload + download);
    return {channel + fastest_compute, channel + slowest_compute};
}

void TdmaChannel::request(int client_id, Tick now, std::int64_t last_upload_slot) {
    for (const PendingRequest& p : pending_) {
        if (p.client_id == client_id) {
            std::ostringstream msg;
            msg << "client " << client_id << " already has a pending slot request";
            throw SchedulerError(msg.str());
        }
    }
    pending_.push_back({client_id, now, last_upload_slot});
}

std::optional<int> TdmaChannel::grant_next(Tick now, Tick duration) {
    if (pending_.empty() || busy(now)) return std::nullopt;
    auto best = std::min_element(pending_.begin(), pending_.end(),
                                 [](const PendingRequest& a, const PendingRequest& b) {
                                     if (a.request_time != b.request_time)
                                         return a.request_time < b.request_time;
                                     if (a.last_upload_slot != b.last_upload_slot)
                                         return a.last_upload_slot < b.last_upload_slot;
                                     return a.client_id < b.client_id;
                                 });
    const int client = best->client_id;
    pending_.erase(best);
    busy_until_ = now + duration;
    grants_.push_back({client, now, busy_until_});
    return client;
}

}  // namespace fedsim

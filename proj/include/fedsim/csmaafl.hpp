#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedsim/timing.hpp"

namespace fedsim {

// Local-model coefficient min(1, mu / (gamma * j * (j - i))) for the
// aggregation at global iteration j of a model trained from iteration i.
// The blend weight on the previous global model is 1 minus this value.
double staleness_weight(std::int64_t j, std::int64_t i, double mu, double gamma);

// Exponential moving average of the observed staleness gap j - i.
class StalenessAverage {
public:
    StalenessAverage(double initial, double ema_factor);

    double value() const { return mu_; }
    // mu <- rho * mu + (1 - rho) * gap; call after the current weight is taken.
    void observe(std::int64_t gap);

private:
    double mu_;
    double rho_;
};

// Per-client local-iteration counts: E_m = clamp(round(tau_med / tau_m *
// e_base), 1, e_max), so faster clients run more epochs per upload.
std::vector<int> adapt_local_iterations(std::span<const ClientProfile> profiles, int e_base,
                                        int e_max);

// Seeded upload order for one trunk of the randomized-selection emulation.
std::vector<std::uint32_t> randomized_trunk_schedule(int clients, std::int64_t trunk_index,
                                                     std::uint64_t seed);

}  // namespace fedsim

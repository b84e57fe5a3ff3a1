#include "fedsim/csmaafl.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

double staleness_weight(std::int64_t j, std::int64_t i, double mu, double gamma) {
    if (j == i) {
        std::ostringstream msg;
        msg << "staleness_weight: zero gap at iteration " << j
            << " (client basis equals current iteration)";
        throw AggregationError(msg.str());
    }
    if (j < 1 || i < 0 || i > j) {
        std::ostringstream msg;
        msg << "staleness_weight: invalid iteration pair j=" << j << " i=" << i;
        throw AggregationError(msg.str());
    }
    if (!(gamma > 0.0)) throw AggregationError("staleness_weight: gamma must be positive");
    if (!(mu > 0.0)) throw AggregationError("staleness_weight: mu must be positive");

    const double denom =
        (gamma * static_cast<double>(j)) * static_cast<double>(j - i);
    return std::min(1.0, mu / denom);
}

StalenessAverage::StalenessAverage(double initial, double ema_factor)
    : mu_(initial), rho_(ema_factor) {
    if (!(initial > 0.0)) throw AggregationError("staleness average must start positive");
    if (!(ema_factor > 0.0 && ema_factor < 1.0)) {
        throw AggregationError("staleness EMA factor must be in (0, 1)");
    }
}

void StalenessAverage::observe(std::int64_t gap) {
    if (gap < 1) throw AggregationError("staleness gap must be >= 1");
    mu_ = rho_ * mu_ + (1.0 - rho_) * static_cast<double>(gap);
}

std::vector<int> adapt_local_iterations(std::span<const ClientProfile> profiles, int e_base,
                                        int e_max) {
    if (profiles.empty()) throw ConfigError("adapt_local_iterations: no profiles");
    if (e_base < 1 || e_max < e_base) {
        throw ConfigError("adapt_local_iterations: need 1 <= e_base <= e_max");
    }

    std::vector<double> taus;
    taus.reserve(profiles.size());
    for (const ClientProfile& p : profiles) {
        if (p.compute_ticks < 1) throw ConfigError("adapt_local_iterations: compute time < 1");
        taus.push_back(static_cast<double>(p.compute_ticks));
    }
    std::sort(taus.begin(), taus.end());
    const std::size_t n = taus.size();
    const double median =
        (n % 2 == 1) ? taus[n / 2] : 0.5 * (taus[n / 2 - 1] + taus[n / 2]);

    std::vector<int> epochs(profiles.size());
    for (std::size_t m = 0; m < profiles.size(); ++m) {
        const double scaled =
            median / static_cast<double>(profiles[m].compute_ticks) * e_base;
        const long long rounded = std::llround(scaled);
        epochs[m] = static_cast<int>(
            std::clamp<long long>(rounded, 1, static_cast<long long>(e_max)));
    }
    return epochs;
}

std::vector<std::uint32_t> randomized_trunk_schedule(int clients, std::int64_t trunk_index,
                                                     std::uint64_t seed) {
    if (clients < 1) throw ConfigError("randomized_trunk_schedule: need at least one client");
    return random_permutation(static_cast<std::size_t>(clients),
                              mix_seed(seed, static_cast<std::uint64_t>(trunk_index)));
}

}  // namespace fedsim

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace fedsim {

// Per-iteration blend weights solved so that one trunk of incremental
// asynchronous aggregation reproduces the synchronous weighted average.
// schedule[k] is the client uploading in iteration k+1 (0-based ids).
struct BetaSchedule {
    std::vector<std::uint32_t> schedule;
    std::vector<double> betas;  // each in [0, 1); betas.front() == 0 when the
                                // coefficients sum to 1
};

// Backward recursion: beta_M = 1 - alpha_sched(M), then
// beta_k = 1 - alpha_sched(k) / prod_{l>k} beta_l. Validates that the solved
// betas reconstruct the input coefficients to 1e-10.
BetaSchedule solve_betas(std::span<const double> alphas,
                         std::span<const std::uint32_t> schedule);

// What each client is actually worth after one trunk when the synchronous
// coefficients are reused as-is in asynchronous blending: client sched(k)
// keeps alpha_sched(k) * prod_{l>k} (1 - alpha_sched(l)). initial_weight
// is the surviving weight of the starting global model.
struct EffectiveCoefficients {
    std::vector<double> per_client;  // indexed by client id
    double initial_weight = 0.0;
};

EffectiveCoefficients effective_coefficients(std::span<const double> alphas,
                                             std::span<const std::uint32_t> schedule);

}  // namespace fedsim

#include "fedsim/afl_baseline.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include "fedsim/errors.hpp"

namespace fedsim {

namespace {

void check_inputs(std::span<const double> alphas, std::span<const std::uint32_t> schedule) {
    const std::size_t m = alphas.size();
    if (m == 0) throw SolverError("solve_betas: no coefficients");
    if (schedule.size() != m) {
        throw SolverError("solve_betas: schedule length does not match coefficient count");
    }
    double sum = 0.0;
    for (double a : alphas) sum += a;
    if (std::abs(sum - 1.0) > 1e-12) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "solve_betas: coefficients sum to " << sum << ", expected 1";
        throw SolverError(msg.str());
    }
    // M = 1 is the degenerate single-client case with alpha = 1; otherwise
    // every coefficient must be strictly inside (0, 1)
    if (m > 1) {
        for (std::size_t i = 0; i < m; ++i) {
            if (!(alphas[i] > 0.0 && alphas[i] < 1.0)) {
                std::ostringstream msg;
                msg << "solve_betas: coefficient " << i << " = " << alphas[i]
                    << " outside (0, 1)";
                throw SolverError(msg.str());
            }
        }
    }
    std::vector<bool> seen(m, false);
    for (std::uint32_t c : schedule) {
        if (c >= m || seen[c]) {
            throw SolverError("solve_betas: schedule is not a permutation of the client ids");
        }
        seen[c] = true;
    }
}

}  // namespace

BetaSchedule solve_betas(std::span<const double> alphas,
                         std::span<const std::uint32_t> schedule) {
    check_inputs(alphas, schedule);
    const std::size_t m = alphas.size();

    BetaSchedule out;
    out.schedule.assign(schedule.begin(), schedule.end());
    out.betas.assign(m, 0.0);

    double product = 1.0;  // prod of betas already solved (iterations > k)
    for (std::size_t k = m; k-- > 0;) {
        double beta;
        if (k + 1 == m) {
            beta = 1.0 - alphas[schedule[k]];
        } else {
            if (product == 0.0) {
                throw SolverError("solve_betas: running beta product reached zero");
            }
            beta = 1.0 - alphas[schedule[k]] / product;
        }
        // a mathematically zero beta lands on either side of zero by roundoff
        if (beta < -1e-12) {
            std::ostringstream msg;
            msg.precision(17);
            msg << "solve_betas: beta_" << k + 1 << " = " << beta << " outside [0, 1)";
            throw SolverError(msg.str());
        }
        if (std::abs(beta) <= 1e-12) beta = 0.0;
        if (beta >= 1.0) {
            std::ostringstream msg;
            msg.precision(17);
            msg << "solve_betas: beta_" << k + 1 << " = " << beta << " outside [0, 1)";
            throw SolverError(msg.str());
        }
        out.betas[k] = beta;
        product *= beta;
    }

    // reconstruct the coefficients from the solved betas
    double tail = 1.0;
    for (std::size_t k = m; k-- > 0;) {
        const double reconstructed = (1.0 - out.betas[k]) * tail;
        const double alpha = alphas[schedule[k]];
        if (std::abs(reconstructed - alpha) > 1e-10 * std::max(1.0, std::abs(alpha))) {
            std::ostringstream msg;
            msg.precision(17);
            msg << "solve_betas: numeric instability, iteration " << k + 1 << " reconstructs "
                << reconstructed << " for coefficient " << alpha;
            throw SolverError(msg.str());
        }
        tail *= out.betas[k];
    }
    return out;
}

EffectiveCoefficients effective_coefficients(std::span<const double> alphas,
                                             std::span<const std::uint32_t> schedule) {
    check_inputs(alphas, schedule);
    const std::size_t m = alphas.size();

    EffectiveCoefficients out;
    out.per_client.assign(m, 0.0);
    double survival = 1.0;  // prod over later iterations of (1 - alpha)
    for (std::size_t k = m; k-- > 0;) {
        const std::uint32_t client = schedule[k];
        out.per_client[client] = alphas[client] * survival;
        survival *= 1.0 - alphas[client];
    }
    out.initial_weight = survival;
    return out;
}

}  // namespace fedsim

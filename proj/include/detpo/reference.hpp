#pragma once

#include "detpo/env.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

namespace detpo {

// Cost-damping factor of the LQR solution, omega = f_c(sqrt(lambda/Gamma)).
// The two algebraically equal closed forms are 2/(1+sqrt(1+4/x^2)) and
// (x/2)(sqrt(x^2+4)-x); the first is evaluated here, the second is kept as
// an independent cross-check for tests.
inline double f_c(double x) {
    if (!(x > 0.0)) throw std::invalid_argument("f_c requires x > 0");
    return 2.0 / (1.0 + std::sqrt(1.0 + 4.0 / (x * x)));
}

// (x/2)(sqrt(x^2+4)-x), evaluated through the conjugate 2x/(sqrt(x^2+4)+x)
// to avoid cancellation for large x.
inline double f_c_alt(double x) {
    if (!(x > 0.0)) throw std::invalid_argument("f_c requires x > 0");
    return 2.0 * x / (std::sqrt(x * x + 4.0) + x);
}

struct LqrSolution {
    double omega = 1.0;            // EMA weight, in (0,1]
    double psi = 1.0;              // damping factor, in (0,1]
    double markowitz_scale = 0.0;  // 1/(2*lambda)
};

// Optimal policy pi' = (1-omega)*pi + omega*psi*p/(2*lambda) for the
// quadratic-cost quadratic-risk environment. Gamma = 0 degenerates to the
// pure Markowitz allocation (omega = psi = 1).
inline LqrSolution solve_lqr(double gamma_cost, double lambda_risk, double rho) {
    if (gamma_cost < 0.0) throw std::invalid_argument("gamma_cost must be >= 0");
    if (!(lambda_risk > 0.0)) throw std::invalid_argument("lambda_risk must be > 0");
    if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("rho must be in (0,1)");
    LqrSolution sol;
    sol.markowitz_scale = 1.0 / (2.0 * lambda_risk);
    if (gamma_cost == 0.0) {
        sol.omega = 1.0;
        sol.psi = 1.0;
        return sol;
    }
    sol.omega = f_c(std::sqrt(lambda_risk / gamma_cost));
    sol.psi = sol.omega / (1.0 - (1.0 - sol.omega) * rho);
    return sol;
}

inline double lqr_policy(const EnvState& s, const LqrSolution& sol) {
    return -sol.omega * s.position + sol.omega * sol.psi * sol.markowitz_scale * s.predictor;
}

struct BandSolution {
    double half_width = 0.0;       // b >= 0
    double markowitz_scale = 0.0;  // 1/(2*lambda)
};

// No-trade band of half-width b around the rescaled predictor m = p/(2*lambda):
// trade to the nearest band edge when outside, hold otherwise.
inline double band_policy(const EnvState& s, const BandSolution& sol) {
    const double m = sol.markowitz_scale * s.predictor;
    if (s.position > m + sol.half_width) return (m + sol.half_width) - s.position;
    if (s.position < m - sol.half_width) return (m - sol.half_width) - s.position;
    return 0.0;
}

struct ThresholdSolution {
    double threshold = 0.0;  // q >= 0
    double maxpos = 0.0;     // M
};

// Bang-bang controller: trade to +/-M when the predictor overcomes +/-q.
inline double threshold_policy(const EnvState& s, const ThresholdSolution& sol) {
    if (s.predictor > sol.threshold) return sol.maxpos - s.position;
    if (s.predictor < -sol.threshold) return -sol.maxpos - s.position;
    return 0.0;
}

struct GridSpec {
    double lo = 0.0;
    double hi = 1.0;
    int n_points = 2;
};

struct GridPoint {
    double param = 0.0;
    double mean_reward = 0.0;
    double mean_pnl = 0.0;
};

struct GridSearchResult {
    double best_param = 0.0;
    double best_value = 0.0;
    std::vector<GridPoint> evaluations;  // coarse pass then refine pass, in order
};

// Maximizes objective(param) over an even grid. The objective is expected to
// use common random numbers (identical noise streams per point); ties break
// toward the smaller parameter.
template <typename Objective>
GridSearchResult grid_search_scalar(Objective&& objective, const GridSpec& grid) {
    if (!(grid.lo < grid.hi)) throw std::invalid_argument("grid: lo must be < hi");
    if (grid.n_points < 2) throw std::invalid_argument("grid: need at least 2 points");
    GridSearchResult res;
    res.best_value = -std::numeric_limits<double>::infinity();
    const double step = (grid.hi - grid.lo) / (grid.n_points - 1);
    for (int i = 0; i < grid.n_points; ++i) {
        const double param = grid.lo + step * i;
        const auto [reward, pnl] = objective(param);
        res.evaluations.push_back({param, reward, pnl});
        if (reward > res.best_value) {
            res.best_value = reward;
            res.best_param = param;
        }
    }
    return res;
}

struct MonteCarloBudget {
    int episodes = 20;
    long horizon = 5000;
    std::uint64_t seed = 0;
};

// Mean reward/pnl of a policy over `episodes` independent rollouts; the
// stream for episode k depends only on (seed, k), which makes the estimate a
// common-random-numbers objective when reused across parameter values.
template <typename Policy>
std::pair<double, double> mc_objective(const EnvParams& params, const MonteCarloBudget& budget,
                                       Policy&& policy) {
    double reward = 0.0, pnl = 0.0;
    for (int ep = 0; ep < budget.episodes; ++ep) {
        EnvParams p = params;
        p.seed = mix_seed(budget.seed, static_cast<std::uint64_t>(ep));
        const Trajectory traj = rollout(p, budget.horizon, policy);
        reward += traj.mean_reward();
        pnl += traj.mean_pnl();
    }
    return {reward / budget.episodes, pnl / budget.episodes};
}

namespace detail {

// Reference solutions are noise-independent and assessed without the barrier.
inline EnvParams reference_env(const EnvParams& p) {
    return without_barrier(perfect_information(p));
}

// Coarse pass over `grid`, then one 10x finer local pass around the argmax.
template <typename MakeObjective>
GridSearchResult refined_grid_search(MakeObjective&& make, const GridSpec& grid) {
    GridSearchResult coarse = grid_search_scalar(make(), grid);
    const double step = (grid.hi - grid.lo) / (grid.n_points - 1);
    const double lo = std::max(grid.lo, coarse.best_param - step);
    const double hi = std::min(grid.hi, coarse.best_param + step);
    GridSearchResult fine = grid_search_scalar(make(), GridSpec{lo, hi, 21});
    GridSearchResult out = std::move(coarse);
    if (fine.best_value > out.best_value) {
        out.best_value = fine.best_value;
        out.best_param = fine.best_param;
    }
    out.evaluations.insert(out.evaluations.end(), fine.evaluations.begin(),
                           fine.evaluations.end());
    return out;
}

}  // namespace detail

// Grid search for the band half-width b (reward-optimal, CRN across points).
inline GridSearchResult solve_band(const EnvParams& params, const MonteCarloBudget& budget,
                                   const GridSpec& grid = {0.0, 2.0, 81}) {
    if (params.kind != EnvKind::lin_cost_quad_risk)
        throw std::invalid_argument("solve_band requires the band environment");
    const EnvParams env = detail::reference_env(params);
    const double scale = 1.0 / (2.0 * env.lambda_risk);
    auto make = [&]() {
        return [&env, &budget, scale](double b) {
            BandSolution sol{b, scale};
            return mc_objective(env, budget,
                                [&sol](const EnvState& s) { return band_policy(s, sol); });
        };
    };
    return detail::refined_grid_search(make, grid);
}

// Grid search for the maxpos threshold q.
inline GridSearchResult solve_threshold(const EnvParams& params, const MonteCarloBudget& budget,
                                        const GridSpec& grid = {0.0, 1.0, 101}) {
    if (params.kind != EnvKind::lin_cost_maxpos)
        throw std::invalid_argument("solve_threshold requires the maxpos environment");
    const EnvParams env = detail::reference_env(params);
    auto make = [&]() {
        return [&env, &budget](double q) {
            ThresholdSolution sol{q, env.maxpos};
            return mc_objective(env, budget,
                                [&sol](const EnvState& s) { return threshold_policy(s, sol); });
        };
    };
    return detail::refined_grid_search(make, grid);
}

}  // namespace detpo

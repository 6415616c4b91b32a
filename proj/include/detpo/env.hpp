#pragma once

#include "detpo/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace detpo {

enum class EnvKind {
    quad_cost_quad_risk,  // pi'*g - Gamma*a^2    - lambda*pi'^2
    lin_cost_quad_risk,   // pi'*g - Gamma*|a|    - lambda*pi'^2
    lin_cost_maxpos,      // pi'*g - Gamma*|a|    - barrier, |pi| clipped to [-M, M]
};

inline std::string to_string(EnvKind k) {
    switch (k) {
        case EnvKind::quad_cost_quad_risk: return "lqr";
        case EnvKind::lin_cost_quad_risk: return "band";
        case EnvKind::lin_cost_maxpos: return "maxpos";
    }
    throw std::logic_error("bad EnvKind");
}

inline EnvKind env_kind_from_string(const std::string& s) {
    if (s == "lqr") return EnvKind::quad_cost_quad_risk;
    if (s == "band") return EnvKind::lin_cost_quad_risk;
    if (s == "maxpos") return EnvKind::lin_cost_maxpos;
    throw std::invalid_argument("unknown env kind: " + s + " (expected lqr|band|maxpos)");
}

// Smooth penalty for positions pushed past the maxpos bound:
//   beta * (tanh(alpha*(|pi + a| - (1+margin)*M)) + 1)
// evaluated on the pre-clip magnitude so the gradient survives clipping.
struct BarrierParams {
    double beta = 10.0;
    double alpha = 10.0;
    double margin = 0.25;
};

struct EnvParams {
    EnvKind kind = EnvKind::quad_cost_quad_risk;
    double rho = 0.9;          // predictor autocorrelation, in (0,1)
    double gamma_cost = 1.0;   // cost coefficient, >= 0
    double lambda_risk = 0.0;  // quadratic-risk kinds only, >= 0
    double maxpos = 0.0;       // maxpos kind only, > 0
    bool noisy_rewards = false;
    double sigma_r = 0.0;      // return-noise scale, noisy mode only
    bool barrier_enabled = false;  // maxpos kind only
    BarrierParams barrier;
    std::uint64_t seed = 0;

    bool quadratic_risk() const { return kind != EnvKind::lin_cost_maxpos; }

    void validate() const {
        if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("rho must be in (0,1)");
        if (gamma_cost < 0.0) throw std::invalid_argument("gamma_cost must be >= 0");
        if (quadratic_risk()) {
            if (lambda_risk < 0.0) throw std::invalid_argument("lambda_risk must be >= 0");
            if (maxpos != 0.0) throw std::invalid_argument("maxpos only applies to the maxpos kind");
            if (barrier_enabled) throw std::invalid_argument("barrier only applies to the maxpos kind");
        } else {
            if (!(maxpos > 0.0)) throw std::invalid_argument("maxpos must be > 0");
            if (lambda_risk != 0.0) throw std::invalid_argument("lambda_risk only applies to quadratic-risk kinds");
            if (barrier_enabled &&
                !(barrier.beta > 0.0 && barrier.alpha > 0.0 && barrier.margin > 0.0))
                throw std::invalid_argument("barrier parameters must be strictly positive");
        }
        if (noisy_rewards) {
            if (sigma_r < 0.0) throw std::invalid_argument("sigma_r must be >= 0");
        } else if (sigma_r != 0.0) {
            throw std::invalid_argument("sigma_r must be 0 when noisy_rewards is false");
        }
    }
};

struct EnvState {
    double position = 0.0;   // portfolio weight pi_t
    double predictor = 0.0;  // p_t, unit stationary variance
    long step_index = 0;
    long horizon = 0;
};

struct StepResult {
    double reward = 0.0;
    double pnl = 0.0;       // gain - cost (risk/barrier excluded); noisy gain in noisy mode
    double pnl_true = 0.0;  // same with the perfect-information gain pi'*p
    EnvState next_state;
    bool done = false;
    double executed_action = 0.0;  // post-clip trade actually applied to the position
};

struct Transition {
    EnvState state;
    double action = 0.0;  // raw action as submitted (exploration noise included)
    double reward = 0.0;
    EnvState next_state;
    bool terminal = false;  // horizon-cut marker; the critic bootstraps through it unless set
};

// The tanh barrier is a training-time shaping term; reward assessment (reference
// solving, out-of-sample evaluation) runs on the plain constrained environment,
// where reward == pnl for the maxpos kind.
inline EnvParams without_barrier(EnvParams p) {
    p.barrier_enabled = false;
    return p;
}

inline EnvParams perfect_information(EnvParams p) {
    p.noisy_rewards = false;
    p.sigma_r = 0.0;
    return p;
}

// One AR(1) predictor update: rho*p + sqrt(1-rho^2)*z for a standard normal z,
// so the stationary variance of the chain is exactly 1.
inline double predictor_step(double p, double rho, double z) {
    return rho * p + std::sqrt(1.0 - rho * rho) * z;
}

inline double predictor_step(double p, double rho, GaussianRng& rng) {
    return predictor_step(p, rho, rng.standard_normal());
}

// One environment instance owns its RNG; advance from one thread at a time.
class Environment {
public:
    Environment(const EnvParams& params, long horizon)
        : params_(params), horizon_(horizon), rng_(params.seed) {
        params_.validate();
        if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
    }

    const EnvParams& params() const { return params_; }
    long horizon() const { return horizon_; }
    const EnvState& state() const { return state_; }

    // pi_0 = 0; p_0 drawn from the stationary N(0,1)
    const EnvState& reset() {
        state_.position = 0.0;
        state_.predictor = rng_.standard_normal();
        state_.step_index = 0;
        state_.horizon = horizon_;
        return state_;
    }

    StepResult step(double action) {
        if (state_.step_index >= horizon_)
            throw std::logic_error("step() called on a finished episode");

        const double p = state_.predictor;
        const double pre_clip = state_.position + action;
        double new_position = pre_clip;
        if (params_.kind == EnvKind::lin_cost_maxpos) {
            const double m = params_.maxpos;
            new_position = std::min(std::max(pre_clip, -m), m);
        }

        const double gain_true = new_position * p;
        double gain = gain_true;
        if (params_.noisy_rewards)
            gain = new_position * (p + params_.sigma_r * rng_.standard_normal());

        double cost = 0.0, penalty = 0.0;
        switch (params_.kind) {
            case EnvKind::quad_cost_quad_risk:
                cost = params_.gamma_cost * action * action;
                penalty = params_.lambda_risk * new_position * new_position;
                break;
            case EnvKind::lin_cost_quad_risk:
                cost = params_.gamma_cost * std::abs(action);
                penalty = params_.lambda_risk * new_position * new_position;
                break;
            case EnvKind::lin_cost_maxpos:
                cost = params_.gamma_cost * std::abs(action);
                if (params_.barrier_enabled) {
                    const BarrierParams& b = params_.barrier;
                    const double arg =
                        b.alpha * (std::abs(pre_clip) - (1.0 + b.margin) * params_.maxpos);
                    penalty = b.beta * (std::tanh(arg) + 1.0);
                }
                break;
        }

        StepResult r;
        r.pnl = gain - cost;
        r.pnl_true = gain_true - cost;
        r.reward = r.pnl - penalty;
        r.executed_action = new_position - state_.position;

        state_.position = new_position;
        state_.predictor = predictor_step(p, params_.rho, rng_);
        state_.step_index += 1;
        r.next_state = state_;
        r.done = state_.step_index >= horizon_;
        return r;
    }

private:
    EnvParams params_;
    long horizon_;
    GaussianRng rng_;
    EnvState state_;
};

struct Trajectory {
    std::vector<Transition> transitions;
    std::vector<double> pnls;
    std::vector<double> pnls_true;

    double mean_reward() const {
        double s = 0.0;
        for (const auto& t : transitions) s += t.reward;
        return transitions.empty() ? 0.0 : s / static_cast<double>(transitions.size());
    }
    double mean_pnl() const {
        double s = 0.0;
        for (double v : pnls) s += v;
        return pnls.empty() ? 0.0 : s / static_cast<double>(pnls.size());
    }
    double mean_pnl_true() const {
        double s = 0.0;
        for (double v : pnls_true) s += v;
        return pnls_true.empty() ? 0.0 : s / static_cast<double>(pnls_true.size());
    }
};

// Runs one full episode under the given state->action policy.
template <typename Policy>
Trajectory rollout(const EnvParams& params, long horizon, Policy&& policy) {
    Environment env(params, horizon);
    Trajectory traj;
    traj.transitions.reserve(static_cast<std::size_t>(horizon));
    traj.pnls.reserve(static_cast<std::size_t>(horizon));
    traj.pnls_true.reserve(static_cast<std::size_t>(horizon));
    EnvState s = env.reset();
    for (long t = 0; t < horizon; ++t) {
        const double a = policy(s);
        const StepResult r = env.step(a);
        traj.transitions.push_back({s, a, r.reward, r.next_state, r.done});
        traj.pnls.push_back(r.pnl);
        traj.pnls_true.push_back(r.pnl_true);
        s = r.next_state;
    }
    return traj;
}

}  // namespace detpo

#pragma once

#include "detpo/csv.hpp"
#include "detpo/env.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace detpo {

struct EvalReport {
    double mean_reward = 0.0;
    double mean_pnl = 0.0;       // realized pnl (noisy returns in noisy mode)
    double mean_pnl_true = 0.0;  // perfect-information pnl
    double diff_l1 = 0.0;        // mean per-step |pi_agent - pi_reference|
    int n_episodes = 0;
    long horizon = 0;
};

// Runs `policy` and `reference` on identical noise streams (common random
// numbers, one coupled environment pair per episode) and reports per-step
// means for the policy plus the position Diff against the reference.
// The tanh barrier, a training-time shaping term, is always excluded here.
// mean_reward is assessed with the perfect-information gain even in noisy
// mode (the realized-noise pnl is still reported as mean_pnl).
template <typename Policy, typename Reference>
EvalReport evaluate(Policy&& policy, Reference&& reference, const EnvParams& env_params,
                    int n_episodes, long horizon, std::uint64_t seed) {
    if (n_episodes < 1) throw std::invalid_argument("evaluate: n_episodes must be >= 1");
    const EnvParams base = without_barrier(env_params);
    EvalReport rep;
    rep.n_episodes = n_episodes;
    rep.horizon = horizon;
    double reward = 0.0, pnl = 0.0, pnl_true = 0.0, diff = 0.0;
    for (int ep = 0; ep < n_episodes; ++ep) {
        EnvParams p = base;
        p.seed = mix_seed(seed, static_cast<std::uint64_t>(ep));
        Environment env_a(p, horizon);
        Environment env_b(p, horizon);
        EnvState sa = env_a.reset();
        EnvState sb = env_b.reset();
        for (long t = 0; t < horizon; ++t) {
            const StepResult ra = env_a.step(policy(sa));
            const StepResult rb = env_b.step(reference(sb));
            reward += ra.reward - ra.pnl + ra.pnl_true;  // perfect-information reward
            pnl += ra.pnl;
            pnl_true += ra.pnl_true;
            diff += std::abs(ra.next_state.position - rb.next_state.position);
            sa = ra.next_state;
            sb = rb.next_state;
        }
    }
    const double steps = static_cast<double>(n_episodes) * static_cast<double>(horizon);
    rep.mean_reward = reward / steps;
    rep.mean_pnl = pnl / steps;
    rep.mean_pnl_true = pnl_true / steps;
    rep.diff_l1 = diff / steps;
    return rep;
}

struct PolicySlice {
    std::vector<double> positions;  // fixed pi values, one curve each
    std::vector<double> predictor_grid;
    std::vector<std::vector<double>> actions;  // actions[pos][grid point]
};

// Deterministic policy evaluation on {positions} x {predictor grid}; no noise.
template <typename Policy>
PolicySlice policy_slice(Policy&& policy, std::vector<double> positions, double p_lo, double p_hi,
                         int n_points) {
    if (n_points < 2) throw std::invalid_argument("policy_slice: need at least 2 grid points");
    if (!(p_lo < p_hi)) throw std::invalid_argument("policy_slice: p_lo must be < p_hi");
    PolicySlice slice;
    slice.positions = std::move(positions);
    slice.predictor_grid.resize(n_points);
    const double step = (p_hi - p_lo) / (n_points - 1);
    for (int i = 0; i < n_points; ++i) slice.predictor_grid[i] = p_lo + step * i;
    slice.actions.resize(slice.positions.size());
    for (std::size_t k = 0; k < slice.positions.size(); ++k) {
        slice.actions[k].resize(n_points);
        for (int i = 0; i < n_points; ++i) {
            EnvState s;
            s.position = slice.positions[k];
            s.predictor = slice.predictor_grid[i];
            slice.actions[k][i] = policy(s);
        }
    }
    return slice;
}

template <typename Policy>
PolicySlice policy_slice(Policy&& policy) {
    return policy_slice(std::forward<Policy>(policy), {-1.0, 0.0, 1.0}, -4.0, 4.0, 201);
}

struct PolicyGrid {
    std::vector<double> pi_grid;
    std::vector<double> p_grid;
    std::vector<std::vector<double>> actions;  // actions[pi][p], raw values
    double display_clip = 5.0;                 // |a| cap applied on export only
};

template <typename Policy>
PolicyGrid policy_grid(Policy&& policy, double pi_lo, double pi_hi, double p_lo, double p_hi,
                       int resolution) {
    if (resolution < 2) throw std::invalid_argument("policy_grid: resolution must be >= 2");
    PolicyGrid grid;
    grid.pi_grid.resize(resolution);
    grid.p_grid.resize(resolution);
    for (int i = 0; i < resolution; ++i) {
        grid.pi_grid[i] = pi_lo + (pi_hi - pi_lo) * i / (resolution - 1);
        grid.p_grid[i] = p_lo + (p_hi - p_lo) * i / (resolution - 1);
    }
    grid.actions.resize(resolution);
    for (int i = 0; i < resolution; ++i) {
        grid.actions[i].resize(resolution);
        for (int j = 0; j < resolution; ++j) {
            EnvState s;
            s.position = grid.pi_grid[i];
            s.predictor = grid.p_grid[j];
            grid.actions[i][j] = policy(s);
        }
    }
    return grid;
}

template <typename Policy>
PolicyGrid policy_grid(Policy&& policy) {
    return policy_grid(std::forward<Policy>(policy), -3.0, 3.0, -3.0, 3.0, 121);
}

struct SeedReport {
    std::uint64_t seed = 0;
    EvalReport report;
    bool diverged = false;
};

struct SummaryRow {
    std::string label;
    std::optional<double> reward, pnl, diff;
};

struct SummaryTable {
    std::vector<SummaryRow> rows;  // best / mean / worst / 75% / 50% / 25%
    int n_seeds = 0;
    int n_diverged = 0;
};

// Rank-based quantiles over converged seeds, matching the paper's convention:
// for 16 seeds the 75%-tile is the 4th best, the 50%-tile the 8th best, the
// 25%-tile the 12th best. Reward/pnl rank descending (higher is better), diff
// ranks ascending (lower is better). Diverged seeds are excluded and counted.
inline SummaryTable multi_seed_summary(const std::vector<SeedReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("multi_seed_summary: need >= 1 report");
    SummaryTable table;
    table.n_seeds = static_cast<int>(reports.size());
    std::vector<double> rewards, pnls, diffs;
    for (const auto& r : reports) {
        if (r.diverged) {
            ++table.n_diverged;
            continue;
        }
        rewards.push_back(r.report.mean_reward);
        pnls.push_back(r.report.mean_pnl);
        diffs.push_back(r.report.diff_l1);
    }
    const int n = static_cast<int>(rewards.size());
    std::sort(rewards.begin(), rewards.end(), std::greater<>());  // best first
    std::sort(pnls.begin(), pnls.end(), std::greater<>());
    std::sort(diffs.begin(), diffs.end());  // smaller diff is better

    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    auto rank_index = [n](double q) {
        const int k = std::max(1, static_cast<int>(std::lround((1.0 - q) * n)));
        return std::min(k, n) - 1;
    };
    auto row = [&](const std::string& label, auto pick) {
        SummaryRow r;
        r.label = label;
        if (n > 0) {
            r.reward = pick(rewards);
            r.pnl = pick(pnls);
            r.diff = pick(diffs);
        }
        return r;
    };

    table.rows.push_back(row("best", [](const std::vector<double>& v) { return v.front(); }));
    table.rows.push_back(row("mean", mean));
    table.rows.push_back(row("worst", [](const std::vector<double>& v) { return v.back(); }));
    for (double q : {0.75, 0.50, 0.25}) {
        const std::string label = std::to_string(static_cast<int>(q * 100)) + "%-tile";
        table.rows.push_back(
            row(label, [&](const std::vector<double>& v) { return v[rank_index(q)]; }));
    }
    return table;
}

inline std::string format_summary(const SummaryTable& table) {
    std::string out;
    out += "              Reward        PnL          Diff\n";
    char buf[160];
    for (const auto& r : table.rows) {
        auto cell = [](const std::optional<double>& v) {
            if (!v) return std::string("-");
            char b[32];
            std::snprintf(b, sizeof(b), "%.3f", *v);
            return std::string(b);
        };
        std::snprintf(buf, sizeof(buf), "%-12s  %-12s %-12s %-12s\n", r.label.c_str(),
                      cell(r.reward).c_str(), cell(r.pnl).c_str(), cell(r.diff).c_str());
        out += buf;
    }
    if (table.n_diverged > 0)
        out += "diverged seeds: " + std::to_string(table.n_diverged) + " of " +
               std::to_string(table.n_seeds) + "\n";
    return out;
}

// ---- CSV export (documented header rows) ----

inline void write_report_csv(const std::string& path, const std::vector<SeedReport>& reports) {
    CsvWriter csv(path, {"seed", "mean_reward", "mean_pnl", "mean_pnl_true", "diff_l1",
                         "n_episodes", "horizon", "diverged"});
    for (const auto& r : reports) {
        csv.raw_row({std::to_string(r.seed), format_double(r.report.mean_reward),
                     format_double(r.report.mean_pnl), format_double(r.report.mean_pnl_true),
                     format_double(r.report.diff_l1), std::to_string(r.report.n_episodes),
                     std::to_string(r.report.horizon), r.diverged ? "1" : "0"});
    }
}

// long format: one row per (position, predictor) pair
inline void write_slice_csv(const std::string& path, const PolicySlice& slice) {
    CsvWriter csv(path, {"position", "p", "action"});
    for (std::size_t k = 0; k < slice.positions.size(); ++k)
        for (std::size_t i = 0; i < slice.predictor_grid.size(); ++i)
            csv.row({slice.positions[k], slice.predictor_grid[i], slice.actions[k][i]});
}

// long format: one row per (pi, p) pair; raw action plus the display-clipped one
inline void write_grid_csv(const std::string& path, const PolicyGrid& grid) {
    CsvWriter csv(path, {"pi", "p", "action", "action_clipped"});
    for (std::size_t i = 0; i < grid.pi_grid.size(); ++i)
        for (std::size_t j = 0; j < grid.p_grid.size(); ++j) {
            const double a = grid.actions[i][j];
            const double c = std::clamp(a, -grid.display_clip, grid.display_clip);
            csv.row({grid.pi_grid[i], grid.p_grid[j], a, c});
        }
}

// trajectory export with the canonical column set; `pi` is the post-trade
// position that earns the step's reward
inline void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
    CsvWriter csv(path, {"t", "pi", "p", "action", "reward", "pnl"});
    for (std::size_t t = 0; t < traj.transitions.size(); ++t) {
        const Transition& tr = traj.transitions[t];
        csv.row({static_cast<double>(t), tr.next_state.position, tr.state.predictor, tr.action,
                 tr.reward, traj.pnls[t]});
    }
}

}  // namespace detpo

// Acceptance suite: one pass/fail line per criterion. Training criteria run
// the full configured budget, so the whole binary takes on the order of an
// hour on two cores. `--only k[,k2...]` restricts the run while debugging.

#include "detpo/agent.hpp"
#include "detpo/csv.hpp"
#include "detpo/env.hpp"
#include "detpo/harness.hpp"
#include "detpo/nn.hpp"
#include "detpo/reference.hpp"
#include "detpo/replay.hpp"
#include "detpo/run_config.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace detpo;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

std::string fmt_sci(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3e", v);
    return buf;
}

std::function<double(const EnvState&)> net_policy(const MlpNet& net) {
    auto tape = std::make_shared<ForwardTape>();
    auto input = std::make_shared<std::vector<double>>(2, 0.0);
    auto owned = std::make_shared<MlpNet>(net);
    return [owned, tape, input](const EnvState& s) {
        (*input)[0] = s.position;
        (*input)[1] = s.predictor;
        owned->forward(*input, *tape);
        return tape->acts.back()[0];
    };
}

// Trains the given seeds in parallel (two workers) and returns the agents.
std::vector<TrainedAgent> train_seeds(const RunConfig& rc, const std::vector<std::uint64_t>& seeds) {
    std::vector<TrainedAgent> agents(seeds.size());
    std::size_t next = 0;
    std::mutex m;
    auto worker = [&]() {
        for (;;) {
            std::size_t i;
            {
                std::lock_guard<std::mutex> lock(m);
                if (next >= seeds.size()) return;
                i = next++;
            }
            RunConfig run = rc;
            run.agent.seed = mix_seed(seeds[i], 0xa6e57ULL);
            run.env.seed = mix_seed(seeds[i], 0xe57ULL);
            agents[i] = train(run.env, run.agent);
        }
    };
    std::thread t1(worker), t2(worker);
    t1.join();
    t2.join();
    return agents;
}

// ---------------------------------------------------------------- criterion 1
// Reference LQR closed form on 10 x 5000 at the pinned eval seed:
// mean reward 0.681 +- 0.02, mean pnl 1.298 +- 0.06.
Outcome criterion_1() {
    const RunConfig rc = preset_config("lqr-paper");
    const LqrSolution sol = solve_lqr(rc.env.gamma_cost, rc.env.lambda_risk, rc.env.rho);
    auto policy = [&](const EnvState& s) { return lqr_policy(s, sol); };
    const EvalReport rep =
        evaluate(policy, policy, rc.env, rc.eval.n_episodes, rc.eval.horizon, rc.eval.seed);
    const bool pass =
        std::abs(rep.mean_reward - 0.681) <= 0.02 && std::abs(rep.mean_pnl - 1.298) <= 0.06;
    return {pass, "reward " + fmt(rep.mean_reward) + " (target 0.681 +- 0.02), pnl " +
                      fmt(rep.mean_pnl) + " (target 1.298 +- 0.06)"};
}

// ---------------------------------------------------------------- criterion 2
// Band reference after the b grid search: reward 0.254 +- 0.015, pnl 0.492 +- 0.03.
Outcome criterion_2() {
    const RunConfig rc = preset_config("band-paper");
    const MonteCarloBudget budget{20, 5000, mix_seed(rc.eval.seed, 0x6e1dULL)};
    const GridSearchResult res = solve_band(rc.env, budget);
    const BandSolution sol{res.best_param, 1.0 / (2.0 * rc.env.lambda_risk)};
    auto policy = [&](const EnvState& s) { return band_policy(s, sol); };
    const EvalReport rep =
        evaluate(policy, policy, rc.env, rc.eval.n_episodes, rc.eval.horizon, rc.eval.seed);
    const bool pass =
        std::abs(rep.mean_reward - 0.254) <= 0.015 && std::abs(rep.mean_pnl - 0.492) <= 0.03;
    return {pass, "b* " + fmt(res.best_param, 3) + ", reward " + fmt(rep.mean_reward) +
                      " (target 0.254 +- 0.015), pnl " + fmt(rep.mean_pnl) +
                      " (target 0.492 +- 0.03)"};
}

// ---------------------------------------------------------------- criterion 3
// Maxpos reference after the q grid search: reward 0.901 +- 0.03 and
// reward == pnl per step exactly.
Outcome criterion_3() {
    const RunConfig rc = preset_config("maxpos-paper");
    const MonteCarloBudget budget{20, 5000, mix_seed(rc.eval.seed, 0x6e1dULL)};
    const GridSearchResult res = solve_threshold(rc.env, budget);
    const ThresholdSolution sol{res.best_param, rc.env.maxpos};
    auto policy = [&](const EnvState& s) { return threshold_policy(s, sol); };

    bool reward_is_pnl = true;
    const Trajectory traj = rollout(without_barrier(rc.env), 5000, policy);
    for (std::size_t t = 0; t < traj.transitions.size(); ++t)
        if (traj.transitions[t].reward != traj.pnls[t]) reward_is_pnl = false;

    const EvalReport rep =
        evaluate(policy, policy, rc.env, rc.eval.n_episodes, rc.eval.horizon, rc.eval.seed);
    const bool pass = std::abs(rep.mean_reward - 0.901) <= 0.03 && reward_is_pnl &&
                      rep.mean_reward == rep.mean_pnl;
    return {pass, "q* " + fmt(res.best_param, 3) + ", reward " + fmt(rep.mean_reward) +
                      " (target 0.901 +- 0.03), reward==pnl per step: " +
                      (reward_is_pnl ? "yes" : "NO")};
}

// ---------------------------------------------------------------- criterion 4
// Brute-force search over linear policies a = -k1*pi + k2*p with common random
// numbers peaks within one grid cell of (omega, omega*psi/(2 lambda)) and
// within 0.5% of the closed-form policy's objective.
Outcome criterion_4() {
    const RunConfig rc = preset_config("lqr-paper");
    const LqrSolution sol = solve_lqr(rc.env.gamma_cost, rc.env.lambda_risk, rc.env.rho);
    const double k1_star = sol.omega;
    const double k2_star = sol.omega * sol.psi * sol.markowitz_scale;

    const MonteCarloBudget budget{6, 25000, 0x0c4ULL};
    const int n1 = 46, n2 = 36;
    const double k1_lo = 0.20, k1_hi = 0.65, k2_lo = 0.45, k2_hi = 0.80;
    const double cell1 = (k1_hi - k1_lo) / (n1 - 1);
    const double cell2 = (k2_hi - k2_lo) / (n2 - 1);
    double best = -1e300, best_k1 = 0.0, best_k2 = 0.0;
    for (int i = 0; i < n1; ++i) {
        const double k1 = k1_lo + cell1 * i;
        for (int j = 0; j < n2; ++j) {
            const double k2 = k2_lo + cell2 * j;
            const auto [reward, pnl] = mc_objective(rc.env, budget, [&](const EnvState& s) {
                return -k1 * s.position + k2 * s.predictor;
            });
            if (reward > best) {
                best = reward;
                best_k1 = k1;
                best_k2 = k2;
            }
        }
    }
    const auto [closed_reward, closed_pnl] =
        mc_objective(rc.env, budget, [&](const EnvState& s) { return lqr_policy(s, sol); });
    const bool near = std::abs(best_k1 - k1_star) <= cell1 + 1e-12 &&
                      std::abs(best_k2 - k2_star) <= cell2 + 1e-12;
    const bool close = std::abs(best - closed_reward) <= 0.005 * std::abs(closed_reward);
    return {near && close,
            "argmax (" + fmt(best_k1, 3) + ", " + fmt(best_k2, 3) + ") vs closed form (" +
                fmt(k1_star, 3) + ", " + fmt(k2_star, 3) + "), cell (" + fmt(cell1, 3) + ", " +
                fmt(cell2, 3) + "); objective " + fmt(best) + " vs " + fmt(closed_reward) +
                " (0.5% = " + fmt(0.005 * std::abs(closed_reward)) + ")"};
}

// ---------------------------------------------------------------- criterion 5
// Gradient checks: 100 random small nets, reverse-mode vs central finite
// differences (parameters and inputs), max relative error <= 1e-4.
Outcome criterion_5() {
    GaussianRng rng(0xabcULL);
    double worst = 0.0;
    const double h = 1e-5;
    for (int trial = 0; trial < 100; ++trial) {
        const int in = 1 + static_cast<int>(rng.uniform01() * 4);
        const int hid = 2 + static_cast<int>(rng.uniform01() * 6);
        const int out = 1 + static_cast<int>(rng.uniform01() * 3);
        MlpNet net({in, hid, hid, out},
                   trial % 2 == 0 ? HiddenActivation::relu : HiddenActivation::tanh_,
                   trial % 3 == 0 ? OutputActivation::scaled_tanh : OutputActivation::linear, 2.0);
        net.init_uniform(rng);
        std::vector<double> input(in), og(out);
        for (double& v : input) v = rng.standard_normal();
        for (double& v : og) v = rng.standard_normal();

        auto value = [&]() {
            const std::vector<double> y = net.forward(input);
            double s = 0.0;
            for (std::size_t o = 0; o < y.size(); ++o) s += og[o] * y[o];
            return s;
        };

        ForwardTape tape;
        net.forward(input, tape);
        GradientSet g;
        net.backward(tape, og, g);
        for (int l = 0; l < net.layers(); ++l) {
            auto check = [&](std::vector<double>& arr, const std::vector<double>& grad) {
                for (std::size_t i = 0; i < arr.size(); ++i) {
                    const double saved = arr[i];
                    arr[i] = saved + h;
                    const double up = value();
                    arr[i] = saved - h;
                    const double dn = value();
                    arr[i] = saved;
                    const double fd = (up - dn) / (2 * h);
                    worst = std::max(worst, std::abs(fd - grad[i]) /
                                                std::max({1.0, std::abs(fd), std::abs(grad[i])}));
                }
            };
            check(net.weights()[l], g.dw[l]);
            check(net.biases()[l], g.db[l]);
        }
        for (int i = 0; i < in; ++i) {
            const double saved = input[i];
            input[i] = saved + h;
            const double up = value();
            input[i] = saved - h;
            const double dn = value();
            input[i] = saved;
            const double fd = (up - dn) / (2 * h);
            worst = std::max(worst, std::abs(fd - g.dinput[i]) /
                                        std::max({1.0, std::abs(fd), std::abs(g.dinput[i])}));
        }
    }
    return {worst <= 1e-4, "max relative error " + fmt_sci(worst) + " (limit 1e-4)"};
}

// ---------------------------------------------------------------- criterion 6
// PER statistics: chi-square goodness of fit of empirical sampling frequencies
// vs P(i) over 1e5 draws at significance 0.01, plus the beta = 1 toy-buffer
// unbiasedness check.
Outcome criterion_6() {
    PrioritizedBuffer buf(8, 0.6, 1e-3);
    GaussianRng rng(0x9e5ULL);
    Transition t;
    for (int i = 0; i < 8; ++i)
        buf.insert(t, PrioritizedBuffer::InsertMode::explicit_priority,
                   0.25 * (i + 1) * (i + 1));
    std::vector<double> probs(8);
    for (int i = 0; i < 8; ++i) probs[i] = buf.probability(i);

    std::vector<long> counts(8, 0);
    const long draws = 100000;
    for (long k = 0; k < draws / 8; ++k) {
        const SampledBatch s = buf.sample(8, 0.5, rng);
        for (int i : s.indices) counts[i]++;
    }
    double stat = 0.0;
    for (int i = 0; i < 8; ++i) {
        const double expected = probs[i] * draws;
        stat += (counts[i] - expected) * (counts[i] - expected) / expected;
    }
    const double chi2_crit_7dof_1pct = 18.475;
    const bool chi_ok = stat < chi2_crit_7dof_1pct;

    // beta = 1 unbiasedness on a 3-slot buffer: E_P[w * f] = uniform mean of f
    PrioritizedBuffer toy(3, 1.0, 1e-9);
    toy.insert(t, PrioritizedBuffer::InsertMode::explicit_priority, 1.0 - 1e-9);
    toy.insert(t, PrioritizedBuffer::InsertMode::explicit_priority, 2.0 - 1e-9);
    toy.insert(t, PrioritizedBuffer::InsertMode::explicit_priority, 3.0 - 1e-9);
    const std::vector<double> f{10.0, -4.0, 7.0};
    std::vector<double> P(3);
    for (int i = 0; i < 3; ++i) P[i] = toy.probability(i);
    double acc = 0.0;
    long n = 0;
    for (int k = 0; k < 100000; ++k) {
        const SampledBatch s = toy.sample(3, 1.0, rng);
        double max_raw = 0.0;
        for (int i : s.indices) max_raw = std::max(max_raw, 1.0 / (3.0 * P[i]));
        for (std::size_t j = 0; j < s.indices.size(); ++j) {
            acc += s.is_weights[j] * max_raw * f[s.indices[j]];
            ++n;
        }
    }
    const double uniform_mean = (f[0] + f[1] + f[2]) / 3.0;
    const double err = std::abs(acc / n - uniform_mean);
    const bool unbiased = err < 0.06;  // ~4 sigma of the estimator
    return {chi_ok && unbiased, "chi-square " + fmt(stat, 2) + " (limit 18.475), IS-weight bias " +
                                    fmt(err, 4) + " (limit 0.06)"};
}

// ---------------------------------------------------------------- criterion 7
// DDPG on the noiseless LQR preset, default budget, 4 seeds: at least one
// reaches eval reward >= 0.63 with per-step Diff <= 0.3.
Outcome criterion_7() {
    const RunConfig rc = preset_config("lqr-paper");
    const LqrSolution sol = solve_lqr(rc.env.gamma_cost, rc.env.lambda_risk, rc.env.rho);
    auto reference = [&](const EnvState& s) { return lqr_policy(s, sol); };

    const std::vector<TrainedAgent> agents = train_seeds(rc, {0, 1, 2, 3});
    bool any = false;
    std::string detail;
    for (std::size_t i = 0; i < agents.size(); ++i) {
        if (agents[i].diverged) {
            detail += "seed " + std::to_string(i) + ": diverged; ";
            continue;
        }
        const EvalReport rep = evaluate(net_policy(agents[i].best_actor), reference, rc.env,
                                        rc.eval.n_episodes, rc.eval.horizon, rc.eval.seed);
        const bool ok = rep.mean_reward >= 0.63 && rep.diff_l1 <= 0.3;
        any = any || ok;
        detail += "seed " + std::to_string(i) + ": reward " + fmt(rep.mean_reward) + ", diff " +
                  fmt(rep.diff_l1) + (ok ? " PASS; " : "; ");
    }
    return {any, detail + "(need >= 1 seed with reward >= 0.63 and diff <= 0.3)"};
}

// ---------------------------------------------------------------- criterion 8
// DDPG on the noiseless band preset: at least one of 4 seeds reaches eval
// reward >= 0.22 and its pi = 0 policy slice shows a no-trade band. The flat
// region must be wider than a linear policy's incidental zero crossing, so
// "width > 0" is implemented as: longest run of |a| <= 0.05 spanning >= 0.5
// in p (the reference band spans ~2.1; a linear fit of the trading slopes
// would span ~0.17).
Outcome criterion_8() {
    const RunConfig rc = preset_config("band-paper");
    const MonteCarloBudget budget{20, 5000, mix_seed(rc.eval.seed, 0x6e1dULL)};
    const GridSearchResult res = solve_band(rc.env, budget);
    const BandSolution sol{res.best_param, 1.0 / (2.0 * rc.env.lambda_risk)};
    auto reference = [&](const EnvState& s) { return band_policy(s, sol); };

    const std::vector<TrainedAgent> agents = train_seeds(rc, {0, 1, 2, 3});
    bool any = false;
    std::string detail;
    for (std::size_t i = 0; i < agents.size(); ++i) {
        if (agents[i].diverged) {
            detail += "seed " + std::to_string(i) + ": diverged; ";
            continue;
        }
        const auto policy = net_policy(agents[i].best_actor);
        const EvalReport rep = evaluate(policy, reference, rc.env, rc.eval.n_episodes,
                                        rc.eval.horizon, rc.eval.seed);
        const PolicySlice slice = policy_slice(policy, {0.0}, -4.0, 4.0, 201);
        const double spacing = slice.predictor_grid[1] - slice.predictor_grid[0];
        int run = 0, best_run = 0;
        for (double a : slice.actions[0]) {
            run = std::abs(a) <= 0.05 ? run + 1 : 0;
            best_run = std::max(best_run, run);
        }
        const double width = best_run > 0 ? (best_run - 1) * spacing : 0.0;
        const bool ok = rep.mean_reward >= 0.22 && width >= 0.5;
        any = any || ok;
        detail += "seed " + std::to_string(i) + ": reward " + fmt(rep.mean_reward) + ", band width " +
                  fmt(width, 2) + (ok ? " PASS; " : "; ");
    }
    return {any, detail + "(need >= 1 seed with reward >= 0.22 and a no-trade band)"};
}

// ---------------------------------------------------------------- criterion 9
// Maxpos stability: with the tanh barrier, >= 3 of 4 seeds finish without
// divergence detection; with the barrier disabled, detection fires on >= 1 of
// 4 seeds.
Outcome criterion_9() {
    const RunConfig with_barrier = preset_config("maxpos-paper");
    RunConfig no_barrier = with_barrier;
    no_barrier.env.barrier_enabled = false;

    const std::vector<TrainedAgent> stable = train_seeds(with_barrier, {0, 1, 2, 3});
    const std::vector<TrainedAgent> wild = train_seeds(no_barrier, {0, 1, 2, 3});
    int stable_ok = 0, wild_diverged = 0;
    for (const TrainedAgent& a : stable) stable_ok += a.diverged ? 0 : 1;
    for (const TrainedAgent& a : wild) wild_diverged += a.diverged ? 1 : 0;
    std::string reasons;
    for (const TrainedAgent& a : wild)
        if (a.diverged) reasons += "[ep " + std::to_string(a.diverged_episode) + ": " +
                                   a.divergence_reason + "] ";
    const bool pass = stable_ok >= 3 && wild_diverged >= 1;
    return {pass, "barrier on: " + std::to_string(stable_ok) +
                      "/4 completed (need >= 3); barrier off: " + std::to_string(wild_diverged) +
                      "/4 diverged (need >= 1) " + reasons};
}

// --------------------------------------------------------------- criterion 10
// Determinism: rerunning the same evaluation and export flows with identical
// config and seed produces byte-identical CSV files.
Outcome criterion_10() {
    const RunConfig rc = preset_config("lqr-paper");
    const LqrSolution sol = solve_lqr(rc.env.gamma_cost, rc.env.lambda_risk, rc.env.rho);
    auto policy = [&](const EnvState& s) { return lqr_policy(s, sol); };

    auto run_once = [&](const std::string& tag) {
        const EvalReport rep =
            evaluate(policy, policy, rc.env, rc.eval.n_episodes, rc.eval.horizon, rc.eval.seed);
        SeedReport sr;
        sr.seed = 0;
        sr.report = rep;
        write_report_csv("acc10_report_" + tag + ".csv", {sr});
        EnvParams p = rc.env;
        p.seed = rc.eval.seed;
        write_trajectory_csv("acc10_traj_" + tag + ".csv",
                             rollout(p, 2000, policy));
        write_grid_csv("acc10_grid_" + tag + ".csv", policy_grid(policy));
    };
    run_once("a");
    run_once("b");
    auto slurp = [](const std::string& path) {
        std::ifstream in(path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    bool same = true;
    for (const std::string name : {"report", "traj", "grid"}) {
        const std::string a = slurp("acc10_" + name + "_a.csv");
        const std::string b = slurp("acc10_" + name + "_b.csv");
        same = same && !a.empty() && a == b;
        std::remove(("acc10_" + name + "_a.csv").c_str());
        std::remove(("acc10_" + name + "_b.csv").c_str());
    }
    return {same, same ? "report/trajectory/grid CSVs byte-identical across reruns"
                       : "CSV outputs differ between reruns"};
}

// --------------------------------------------------------------- criterion 11
// Coupled-evaluation identity: evaluate(reference, reference) has diff_l1 = 0
// exactly in all three environments.
Outcome criterion_11() {
    bool pass = true;
    std::string detail;
    {
        const RunConfig rc = preset_config("lqr-paper");
        const LqrSolution s = solve_lqr(rc.env.gamma_cost, rc.env.lambda_risk, rc.env.rho);
        auto p = [&](const EnvState& st) { return lqr_policy(st, s); };
        const double d = evaluate(p, p, rc.env, 5, 5000, rc.eval.seed).diff_l1;
        pass = pass && d == 0.0;
        detail += "lqr diff " + fmt(d, 1) + "; ";
    }
    {
        const RunConfig rc = preset_config("band-paper");
        const BandSolution s{1.0, 1.0 / 0.6};
        auto p = [&](const EnvState& st) { return band_policy(st, s); };
        const double d = evaluate(p, p, rc.env, 5, 5000, rc.eval.seed).diff_l1;
        pass = pass && d == 0.0;
        detail += "band diff " + fmt(d, 1) + "; ";
    }
    {
        const RunConfig rc = preset_config("maxpos-paper");
        const ThresholdSolution s{0.85, rc.env.maxpos};
        auto p = [&](const EnvState& st) { return threshold_policy(st, s); };
        const double d = evaluate(p, p, rc.env, 5, 5000, rc.eval.seed).diff_l1;
        pass = pass && d == 0.0;
        detail += "maxpos diff " + fmt(d, 1);
    }
    return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--only" && i + 1 < argc) {
            std::istringstream in(argv[++i]);
            std::string tok;
            while (std::getline(in, tok, ',')) only.insert(std::stoi(tok));
        }
    }

    struct Criterion {
        int id;
        const char* name;
        Outcome (*run)();
    };
    const std::vector<Criterion> criteria = {
        {1, "reference LQR closed form", criterion_1},
        {2, "reference band grid search", criterion_2},
        {3, "reference maxpos grid search", criterion_3},
        {4, "LQR closed-form vs brute-force oracle", criterion_4},
        {5, "gradient checks vs finite differences", criterion_5},
        {6, "PER sampling statistics", criterion_6},
        {7, "DDPG learning, LQR preset", criterion_7},
        {8, "DDPG learning, band preset", criterion_8},
        {9, "maxpos stability with/without barrier", criterion_9},
        {10, "determinism of CSV outputs", criterion_10},
        {11, "coupled-evaluation identity", criterion_11},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        if (!out.pass) ++failures;
        std::printf("CRITERION %2d [%s]: %s — %s\n", c.id, out.pass ? "PASS" : "FAIL", c.name,
                    out.detail.c_str());
        std::fflush(stdout);
    }
    if (failures > 0) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}

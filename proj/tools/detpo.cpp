// detpo: reference solutions, DDPG training, evaluation and figure-data
// export for the three trading environments.

#include "detpo/agent.hpp"
#include "detpo/config.hpp"
#include "detpo/csv.hpp"
#include "detpo/env.hpp"
#include "detpo/harness.hpp"
#include "detpo/reference.hpp"
#include "detpo/run_config.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace detpo;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitAllDiverged = 4;

struct CommonOpts {
    std::string config_path;
    std::string preset;
    std::string out_dir;
    std::string seed_list;
    int jobs = 1;
};

RunConfig load_run_config(const CommonOpts& opts) {
    RunConfig rc;
    if (!opts.preset.empty() && !opts.config_path.empty())
        throw config_error("pass either --preset or --config, not both");
    if (!opts.preset.empty())
        rc = preset_config(opts.preset);
    else if (!opts.config_path.empty())
        rc = run_config_from_key_values(KeyValueConfig::parse_file(opts.config_path));
    else
        throw config_error("one of --preset or --config is required");
    if (!opts.out_dir.empty()) rc.output_dir = opts.out_dir;
    if (!opts.seed_list.empty()) {
        KeyValueConfig kv;
        kv.set("s", opts.seed_list);
        rc.seeds = kv.get_u64_list("s");
        if (rc.seeds.empty()) throw config_error("--seed-list is empty");
    }
    rc.validate();
    return rc;
}

void echo_config(const RunConfig& rc, const fs::path& dir) {
    fs::create_directories(dir);
    to_key_values(rc).save((dir / "config.txt").string());
}

// The reference policy for the configured environment; band/maxpos run their
// grid search (common random numbers, coarse pass + one 10x refinement).
struct ReferenceSolution {
    std::function<double(const EnvState&)> policy;
    KeyValueConfig description;
    std::vector<GridPoint> grid;  // empty for the closed-form kind
};

ReferenceSolution solve_reference(const RunConfig& rc) {
    ReferenceSolution out;
    const MonteCarloBudget budget{20, 5000, mix_seed(rc.eval.seed, 0x6e1dULL)};
    switch (rc.env.kind) {
        case EnvKind::quad_cost_quad_risk: {
            const LqrSolution sol =
                solve_lqr(rc.env.gamma_cost, rc.env.lambda_risk, rc.env.rho);
            out.policy = [sol](const EnvState& s) { return lqr_policy(s, sol); };
            out.description.set("solution.kind", "lqr");
            out.description.set_double("solution.omega", sol.omega);
            out.description.set_double("solution.psi", sol.psi);
            out.description.set_double("solution.markowitz_scale", sol.markowitz_scale);
            break;
        }
        case EnvKind::lin_cost_quad_risk: {
            const GridSearchResult res = solve_band(rc.env, budget);
            const BandSolution sol{res.best_param, 1.0 / (2.0 * rc.env.lambda_risk)};
            out.policy = [sol](const EnvState& s) { return band_policy(s, sol); };
            out.description.set("solution.kind", "band");
            out.description.set_double("solution.half_width", sol.half_width);
            out.description.set_double("solution.markowitz_scale", sol.markowitz_scale);
            out.description.set_double("solution.search_reward", res.best_value);
            out.grid = res.evaluations;
            break;
        }
        case EnvKind::lin_cost_maxpos: {
            const GridSearchResult res = solve_threshold(rc.env, budget);
            const ThresholdSolution sol{res.best_param, rc.env.maxpos};
            out.policy = [sol](const EnvState& s) { return threshold_policy(s, sol); };
            out.description.set("solution.kind", "maxpos");
            out.description.set_double("solution.threshold", sol.threshold);
            out.description.set_double("solution.maxpos", sol.maxpos);
            out.description.set_double("solution.search_reward", res.best_value);
            out.grid = res.evaluations;
            break;
        }
    }
    return out;
}

void write_grid_points_csv(const fs::path& path, const std::vector<GridPoint>& grid) {
    CsvWriter csv(path.string(), {"param", "mean_reward", "mean_pnl"});
    for (const GridPoint& g : grid) csv.row({g.param, g.mean_reward, g.mean_pnl});
}

std::function<double(const EnvState&)> policy_from_net(const MlpNet& net) {
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

int cmd_reference(const CommonOpts& opts) {
    const RunConfig rc = load_run_config(opts);
    const fs::path dir = rc.output_dir;
    echo_config(rc, dir);

    const ReferenceSolution ref = solve_reference(rc);
    ref.description.save((dir / "solution.txt").string());
    if (!ref.grid.empty()) write_grid_points_csv(dir / "grid_search.csv", ref.grid);

    const EvalReport rep =
        evaluate(ref.policy, ref.policy, rc.env, rc.eval.n_episodes, rc.eval.horizon, rc.eval.seed);
    SeedReport sr;
    sr.seed = 0;
    sr.report = rep;
    write_report_csv((dir / "reference_report.csv").string(), {sr});

    for (const auto& [k, v] : ref.description.items()) std::cout << k << " = " << v << "\n";
    std::cout << "mean_reward = " << format_double(rep.mean_reward) << "\n";
    std::cout << "mean_pnl = " << format_double(rep.mean_pnl) << "\n";
    std::cout << "wrote " << (dir / "solution.txt").string() << ", reference_report.csv";
    if (!ref.grid.empty()) std::cout << ", grid_search.csv";
    std::cout << "\n";
    return kExitOk;
}

struct SeedOutcome {
    std::uint64_t seed = 0;
    bool diverged = false;
    int diverged_episode = -1;
    std::string reason;
    double best_eval_reward = 0.0;
};

SeedOutcome run_one_seed(const RunConfig& rc, std::uint64_t seed) {
    RunConfig run = rc;
    run.agent.seed = mix_seed(seed, 0xa6e57ULL);
    run.env.seed = mix_seed(seed, 0xe57ULL);
    const fs::path dir = fs::path(rc.output_dir) / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    to_key_values(run).save((dir / "config.txt").string());

    const TrainedAgent agent = train(run.env, run.agent);

    save_net(agent.actor, (dir / "actor.txt").string());
    save_net(agent.critic, (dir / "critic.txt").string());
    save_net(agent.target_actor, (dir / "target_actor.txt").string());
    save_net(agent.target_critic, (dir / "target_critic.txt").string());
    save_net(agent.best_actor, (dir / "best_actor.txt").string());
    {
        CsvWriter csv((dir / "history.csv").string(), {"episode", "eval_reward", "eval_pnl"});
        for (const EpisodeStats& e : agent.history)
            csv.row({static_cast<double>(e.episode), e.eval_reward, e.eval_pnl});
    }
    KeyValueConfig result;
    result.set_bool("result.diverged", agent.diverged);
    result.set_long("result.diverged_episode", agent.diverged_episode);
    result.set("result.divergence_reason", agent.divergence_reason);
    result.set_double("result.best_eval_reward", agent.best_eval_reward);
    result.save((dir / "result.txt").string());

    return {seed, agent.diverged, agent.diverged_episode, agent.divergence_reason,
            agent.best_eval_reward};
}

int cmd_train(const CommonOpts& opts) {
    const RunConfig rc = load_run_config(opts);
    echo_config(rc, rc.output_dir);

    std::vector<SeedOutcome> outcomes(rc.seeds.size());
    std::mutex io_mutex;
    std::size_t next = 0;
    std::mutex next_mutex;
    auto worker = [&]() {
        for (;;) {
            std::size_t i;
            {
                std::lock_guard<std::mutex> lock(next_mutex);
                if (next >= rc.seeds.size()) return;
                i = next++;
            }
            const SeedOutcome oc = run_one_seed(rc, rc.seeds[i]);
            outcomes[i] = oc;
            std::lock_guard<std::mutex> lock(io_mutex);
            std::cout << "seed " << oc.seed << ": "
                      << (oc.diverged ? "DIVERGED at episode " + std::to_string(oc.diverged_episode) +
                                            " (" + oc.reason + ")"
                                      : "best validation reward " + format_double(oc.best_eval_reward))
                      << "\n";
        }
    };
    const int jobs = std::max(1, opts.jobs);
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    int diverged = 0;
    for (const SeedOutcome& oc : outcomes) diverged += oc.diverged ? 1 : 0;
    std::cout << diverged << " of " << outcomes.size() << " seeds diverged\n";
    return diverged == static_cast<int>(outcomes.size()) ? kExitAllDiverged : kExitOk;
}

MlpNet load_actor_checked(const std::string& path) {
    MlpNet net = load_net(path);
    if (net.input_size() != 2 || net.output_size() != 1)
        throw config_error("checkpoint/config mismatch: expected a 2-input 1-output actor in " +
                           path);
    return net;
}

int cmd_eval(const CommonOpts& opts, const std::vector<std::string>& checkpoints,
             const std::string& run_dir) {
    const RunConfig rc = load_run_config(opts);
    const fs::path dir = rc.output_dir;
    echo_config(rc, dir);
    const ReferenceSolution ref = solve_reference(rc);

    struct Entry {
        std::uint64_t seed;
        std::string path;
        bool diverged = false;
    };
    std::vector<Entry> entries;
    if (!checkpoints.empty()) {
        for (std::size_t i = 0; i < checkpoints.size(); ++i)
            entries.push_back({i, checkpoints[i], false});
    } else {
        const fs::path scan = run_dir.empty() ? fs::path(rc.output_dir) : fs::path(run_dir);
        for (std::uint64_t seed : rc.seeds) {
            Entry e;
            e.seed = seed;
            const fs::path seed_dir = scan / ("seed_" + std::to_string(seed));
            e.path = (seed_dir / "best_actor.txt").string();
            const fs::path result = seed_dir / "result.txt";
            if (fs::exists(result))
                e.diverged = KeyValueConfig::parse_file(result.string()).get_bool("result.diverged");
            entries.push_back(e);
        }
    }
    if (entries.empty()) throw config_error("no checkpoints to evaluate");

    std::vector<SeedReport> reports;
    for (const Entry& e : entries) {
        SeedReport sr;
        sr.seed = e.seed;
        sr.diverged = e.diverged;
        if (!e.diverged) {
            const MlpNet actor = load_actor_checked(e.path);
            sr.report = evaluate(policy_from_net(actor), ref.policy, rc.env, rc.eval.n_episodes,
                                 rc.eval.horizon, rc.eval.seed);
        }
        reports.push_back(sr);
    }
    write_report_csv((dir / "eval_report.csv").string(), reports);
    const SummaryTable table = multi_seed_summary(reports);
    std::cout << format_summary(table);
    std::ofstream summary(dir / "summary.txt");
    summary << format_summary(table);
    std::cout << "wrote " << (dir / "eval_report.csv").string() << ", summary.txt\n";
    return kExitOk;
}

int cmd_policy_export(const CommonOpts& opts, const std::string& checkpoint) {
    const RunConfig rc = load_run_config(opts);
    const fs::path dir = rc.output_dir;
    echo_config(rc, dir);
    const ReferenceSolution ref = solve_reference(rc);

    write_slice_csv((dir / "reference_slice.csv").string(), policy_slice(ref.policy));
    write_grid_csv((dir / "reference_grid.csv").string(), policy_grid(ref.policy));
    EnvParams traj_params = without_barrier(rc.env);
    traj_params.seed = rc.eval.seed;
    write_trajectory_csv((dir / "reference_trajectory.csv").string(),
                         rollout(traj_params, rc.eval.horizon, ref.policy));
    std::cout << "wrote reference_slice.csv, reference_grid.csv, reference_trajectory.csv";
    if (!checkpoint.empty()) {
        const MlpNet actor = load_actor_checked(checkpoint);
        const auto policy = policy_from_net(actor);
        write_slice_csv((dir / "agent_slice.csv").string(), policy_slice(policy));
        write_grid_csv((dir / "agent_grid.csv").string(), policy_grid(policy));
        write_trajectory_csv((dir / "agent_trajectory.csv").string(),
                             rollout(traj_params, rc.eval.horizon, policy));
        std::cout << ", agent_slice.csv, agent_grid.csv, agent_trajectory.csv";
    }
    std::cout << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"benchmark environments, reference policies and DDPG runs"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::vector<std::string> checkpoints;
    std::string run_dir;
    std::string single_checkpoint;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opts.config_path, "key-value config file");
        cmd->add_option("--preset", opts.preset,
                        "built-in preset (lqr-paper, band-paper, maxpos-paper, *-noisy)");
        cmd->add_option("--out", opts.out_dir, "output directory (overrides run.output_dir)");
        cmd->add_option("--seed-list", opts.seed_list, "comma-separated seeds (overrides run.seeds)");
    };

    CLI::App* reference = app.add_subcommand("reference", "solve and evaluate the reference policy");
    add_common(reference);
    CLI::App* train_cmd = app.add_subcommand("train", "train one DDPG agent per seed");
    add_common(train_cmd);
    train_cmd->add_option("--jobs", opts.jobs, "parallel seed workers");
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate checkpoints against the reference");
    add_common(eval_cmd);
    eval_cmd->add_option("--checkpoint", checkpoints, "actor checkpoint file(s)");
    eval_cmd->add_option("--run-dir", run_dir, "training output directory to scan for seeds");
    CLI::App* export_cmd =
        app.add_subcommand("policy-export", "export policy slice/grid CSVs for plotting");
    add_common(export_cmd);
    export_cmd->add_option("--checkpoint", single_checkpoint, "actor checkpoint file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (reference->parsed()) return cmd_reference(opts);
        if (train_cmd->parsed()) return cmd_train(opts);
        if (eval_cmd->parsed()) return cmd_eval(opts, checkpoints, run_dir);
        if (export_cmd->parsed()) return cmd_policy_export(opts, single_checkpoint);
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitOk;
}

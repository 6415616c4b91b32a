#pragma once

#include "detpo/agent.hpp"
#include "detpo/config.hpp"
#include "detpo/env.hpp"

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

namespace detpo {

struct EvalSettings {
    int n_episodes = 10;
    long horizon = 5000;
    std::uint64_t seed = 123;
};

struct RunConfig {
    EnvParams env;
    AgentConfig agent;
    EvalSettings eval;
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3};
    std::string output_dir = "out";

    void validate() const {
        env.validate();
        agent.validate();
        if (eval.n_episodes < 1) throw config_error("eval.episodes must be >= 1");
        if (eval.horizon < 1) throw config_error("eval.horizon must be >= 1");
        if (seeds.empty()) throw config_error("run.seeds must not be empty");
    }
};

inline KeyValueConfig to_key_values(const RunConfig& rc) {
    KeyValueConfig kv;
    kv.set("env.kind", to_string(rc.env.kind));
    kv.set_double("env.rho", rc.env.rho);
    kv.set_double("env.gamma_cost", rc.env.gamma_cost);
    if (rc.env.quadratic_risk()) kv.set_double("env.lambda_risk", rc.env.lambda_risk);
    if (rc.env.kind == EnvKind::lin_cost_maxpos) {
        kv.set_double("env.maxpos", rc.env.maxpos);
        kv.set_bool("env.barrier.enabled", rc.env.barrier_enabled);
        kv.set_double("env.barrier.beta", rc.env.barrier.beta);
        kv.set_double("env.barrier.alpha", rc.env.barrier.alpha);
        kv.set_double("env.barrier.margin", rc.env.barrier.margin);
    }
    kv.set_bool("env.noisy_rewards", rc.env.noisy_rewards);
    kv.set_double("env.sigma_r", rc.env.sigma_r);
    kv.set_u64("env.seed", rc.env.seed);

    kv.set_double("agent.discount", rc.agent.discount);
    kv.set_long("agent.update_period", rc.agent.update_period);
    kv.set_long("agent.batch_size", rc.agent.batch_size);
    kv.set_double("agent.tau_critic", rc.agent.tau_critic);
    kv.set_double("agent.tau_actor", rc.agent.tau_actor);
    kv.set_long("agent.pretrain_steps", rc.agent.pretrain_steps);
    kv.set_long("agent.pretrain_episode_length", rc.agent.pretrain_episode_length);
    kv.set_long("agent.episodes", rc.agent.episodes);
    kv.set_long("agent.episode_length", rc.agent.episode_length);
    kv.set_double("agent.explore_rho", rc.agent.explore_rho);
    kv.set_double("agent.explore_sigma", rc.agent.explore_sigma);
    kv.set_double("agent.max_trade", rc.agent.max_trade);
    kv.set_bool("agent.bootstrap_terminal", rc.agent.bootstrap_terminal);
    kv.set_double("agent.divergence_pi_bound", rc.agent.divergence_pi_bound);
    kv.set_double("agent.divergence_q_bound", rc.agent.divergence_q_bound);
    kv.set_long("agent.per.capacity", rc.agent.per.capacity);
    kv.set_double("agent.per.alpha", rc.agent.per.alpha);
    kv.set_double("agent.per.beta0", rc.agent.per.beta0);
    kv.set_double("agent.per.epsilon", rc.agent.per.epsilon);
    {
        std::ostringstream hidden;
        for (std::size_t i = 0; i < rc.agent.nn.hidden.size(); ++i) {
            if (i) hidden << ',';
            hidden << rc.agent.nn.hidden[i];
        }
        kv.set("agent.nn.hidden", hidden.str());
    }
    kv.set_double("agent.nn.actor_lr", rc.agent.nn.actor_lr);
    kv.set_double("agent.nn.critic_lr", rc.agent.nn.critic_lr);
    kv.set_double("agent.nn.adam_beta1", rc.agent.nn.adam_beta1);
    kv.set_double("agent.nn.adam_beta2", rc.agent.nn.adam_beta2);
    kv.set_double("agent.nn.adam_epsilon", rc.agent.nn.adam_epsilon);
    kv.set_double("agent.nn.final_actor_scale", rc.agent.nn.final_actor_scale);
    kv.set_double("agent.nn.grad_clip_norm", rc.agent.nn.grad_clip_norm);
    kv.set_double("agent.nn.lr_decay_to", rc.agent.nn.lr_decay_to);
    kv.set_long("agent.snapshot_every", rc.agent.snapshot_every);
    kv.set_long("agent.snapshot_episodes", rc.agent.snapshot_episodes);
    kv.set_long("agent.snapshot_horizon", rc.agent.snapshot_horizon);
    kv.set_u64("agent.snapshot_seed", rc.agent.snapshot_seed);
    kv.set_u64("agent.seed", rc.agent.seed);

    kv.set_long("eval.episodes", rc.eval.n_episodes);
    kv.set_long("eval.horizon", rc.eval.horizon);
    kv.set_u64("eval.seed", rc.eval.seed);

    {
        std::ostringstream seeds;
        for (std::size_t i = 0; i < rc.seeds.size(); ++i) {
            if (i) seeds << ',';
            seeds << rc.seeds[i];
        }
        kv.set("run.seeds", seeds.str());
    }
    kv.set("run.output_dir", rc.output_dir);
    return kv;
}

inline RunConfig run_config_from_key_values(const KeyValueConfig& kv) {
    RunConfig rc;
    rc.env.kind = env_kind_from_string(kv.get_string("env.kind"));
    if (kv.has("env.rho")) rc.env.rho = kv.get_double("env.rho");
    if (kv.has("env.gamma_cost")) rc.env.gamma_cost = kv.get_double("env.gamma_cost");
    rc.env.lambda_risk = 0.0;
    rc.env.maxpos = 0.0;
    if (kv.has("env.lambda_risk")) rc.env.lambda_risk = kv.get_double("env.lambda_risk");
    if (kv.has("env.maxpos")) rc.env.maxpos = kv.get_double("env.maxpos");
    if (kv.has("env.barrier.enabled")) rc.env.barrier_enabled = kv.get_bool("env.barrier.enabled");
    if (kv.has("env.barrier.beta")) rc.env.barrier.beta = kv.get_double("env.barrier.beta");
    if (kv.has("env.barrier.alpha")) rc.env.barrier.alpha = kv.get_double("env.barrier.alpha");
    if (kv.has("env.barrier.margin")) rc.env.barrier.margin = kv.get_double("env.barrier.margin");
    if (kv.has("env.noisy_rewards")) rc.env.noisy_rewards = kv.get_bool("env.noisy_rewards");
    if (kv.has("env.sigma_r")) rc.env.sigma_r = kv.get_double("env.sigma_r");
    if (kv.has("env.seed")) rc.env.seed = kv.get_u64("env.seed");

    AgentConfig& a = rc.agent;
    if (kv.has("agent.discount")) a.discount = kv.get_double("agent.discount");
    if (kv.has("agent.update_period")) a.update_period = static_cast<int>(kv.get_long("agent.update_period"));
    if (kv.has("agent.batch_size")) a.batch_size = static_cast<int>(kv.get_long("agent.batch_size"));
    if (kv.has("agent.tau_critic")) a.tau_critic = kv.get_double("agent.tau_critic");
    if (kv.has("agent.tau_actor")) a.tau_actor = kv.get_double("agent.tau_actor");
    if (kv.has("agent.pretrain_steps")) a.pretrain_steps = kv.get_long("agent.pretrain_steps");
    if (kv.has("agent.pretrain_episode_length"))
        a.pretrain_episode_length = kv.get_long("agent.pretrain_episode_length");
    if (kv.has("agent.episodes")) a.episodes = static_cast<int>(kv.get_long("agent.episodes"));
    if (kv.has("agent.episode_length")) a.episode_length = kv.get_long("agent.episode_length");
    if (kv.has("agent.explore_rho")) a.explore_rho = kv.get_double("agent.explore_rho");
    if (kv.has("agent.explore_sigma")) a.explore_sigma = kv.get_double("agent.explore_sigma");
    if (kv.has("agent.max_trade")) a.max_trade = kv.get_double("agent.max_trade");
    if (kv.has("agent.bootstrap_terminal")) a.bootstrap_terminal = kv.get_bool("agent.bootstrap_terminal");
    if (kv.has("agent.divergence_pi_bound")) a.divergence_pi_bound = kv.get_double("agent.divergence_pi_bound");
    if (kv.has("agent.divergence_q_bound")) a.divergence_q_bound = kv.get_double("agent.divergence_q_bound");
    if (kv.has("agent.per.capacity")) a.per.capacity = static_cast<int>(kv.get_long("agent.per.capacity"));
    if (kv.has("agent.per.alpha")) a.per.alpha = kv.get_double("agent.per.alpha");
    if (kv.has("agent.per.beta0")) a.per.beta0 = kv.get_double("agent.per.beta0");
    if (kv.has("agent.per.epsilon")) a.per.epsilon = kv.get_double("agent.per.epsilon");
    if (kv.has("agent.nn.hidden")) {
        a.nn.hidden.clear();
        std::istringstream in(kv.get_string("agent.nn.hidden"));
        std::string tok;
        while (std::getline(in, tok, ','))
            if (!tok.empty()) a.nn.hidden.push_back(std::stoi(tok));
    }
    if (kv.has("agent.nn.actor_lr")) a.nn.actor_lr = kv.get_double("agent.nn.actor_lr");
    if (kv.has("agent.nn.critic_lr")) a.nn.critic_lr = kv.get_double("agent.nn.critic_lr");
    if (kv.has("agent.nn.adam_beta1")) a.nn.adam_beta1 = kv.get_double("agent.nn.adam_beta1");
    if (kv.has("agent.nn.adam_beta2")) a.nn.adam_beta2 = kv.get_double("agent.nn.adam_beta2");
    if (kv.has("agent.nn.adam_epsilon")) a.nn.adam_epsilon = kv.get_double("agent.nn.adam_epsilon");
    if (kv.has("agent.nn.final_actor_scale")) a.nn.final_actor_scale = kv.get_double("agent.nn.final_actor_scale");
    if (kv.has("agent.nn.grad_clip_norm")) a.nn.grad_clip_norm = kv.get_double("agent.nn.grad_clip_norm");
    if (kv.has("agent.nn.lr_decay_to")) a.nn.lr_decay_to = kv.get_double("agent.nn.lr_decay_to");
    if (kv.has("agent.snapshot_every")) a.snapshot_every = static_cast<int>(kv.get_long("agent.snapshot_every"));
    if (kv.has("agent.snapshot_episodes")) a.snapshot_episodes = static_cast<int>(kv.get_long("agent.snapshot_episodes"));
    if (kv.has("agent.snapshot_horizon")) a.snapshot_horizon = kv.get_long("agent.snapshot_horizon");
    if (kv.has("agent.snapshot_seed")) a.snapshot_seed = kv.get_u64("agent.snapshot_seed");
    if (kv.has("agent.seed")) a.seed = kv.get_u64("agent.seed");

    if (kv.has("eval.episodes")) rc.eval.n_episodes = static_cast<int>(kv.get_long("eval.episodes"));
    if (kv.has("eval.horizon")) rc.eval.horizon = kv.get_long("eval.horizon");
    if (kv.has("eval.seed")) rc.eval.seed = kv.get_u64("eval.seed");

    if (kv.has("run.seeds")) rc.seeds = kv.get_u64_list("run.seeds");
    if (kv.has("run.output_dir")) rc.output_dir = kv.get_string("run.output_dir");

    rc.validate();
    return rc;
}

// Named presets encoding the experiment parameters of the source problems;
// the *-noisy variants add return noise at noise-to-signal ratio 10
// (quadratic-risk kinds) or 4 (maxpos).
inline RunConfig preset_config(const std::string& name) {
    RunConfig rc;
    std::string base = name;
    bool noisy = false;
    const std::string suffix = "-noisy";
    if (base.size() > suffix.size() &&
        base.compare(base.size() - suffix.size(), suffix.size(), suffix) == 0) {
        noisy = true;
        base = base.substr(0, base.size() - suffix.size());
    }
    const std::string paper = "-paper";
    if (base.size() > paper.size() &&
        base.compare(base.size() - paper.size(), paper.size(), paper) == 0) {
        base = base.substr(0, base.size() - paper.size());
    }
    if (base == "lqr") {
        rc.env.kind = EnvKind::quad_cost_quad_risk;
        rc.env.rho = 0.9;
        rc.env.gamma_cost = 1.0;
        rc.env.lambda_risk = 0.3;
    } else if (base == "band") {
        rc.env.kind = EnvKind::lin_cost_quad_risk;
        rc.env.rho = 0.9;
        rc.env.gamma_cost = 4.0;
        rc.env.lambda_risk = 0.3;
    } else if (base == "maxpos") {
        rc.env.kind = EnvKind::lin_cost_maxpos;
        rc.env.rho = 0.9;
        rc.env.gamma_cost = 4.0;
        rc.env.maxpos = 2.0;
        rc.env.barrier_enabled = true;
        rc.env.barrier = BarrierParams{10.0, 10.0, 0.25};
    } else {
        throw config_error("unknown preset: " + name);
    }
    if (noisy) {
        rc.env.noisy_rewards = true;
        rc.env.sigma_r = rc.env.kind == EnvKind::lin_cost_maxpos ? 4.0 : 10.0;
    }
    rc.validate();
    return rc;
}

inline std::vector<std::string> preset_names() {
    return {"lqr-paper", "band-paper", "maxpos-paper",
            "lqr-noisy", "band-noisy", "maxpos-noisy"};
}

}  // namespace detpo

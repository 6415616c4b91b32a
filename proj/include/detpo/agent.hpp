#pragma once

#include "detpo/env.hpp"
#include "detpo/nn.hpp"
#include "detpo/replay.hpp"
#include "detpo/rng.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace detpo {

struct PerConfig {
    int capacity = 100000;
    double alpha = 0.6;
    double beta0 = 0.4;
    double epsilon = 1e-3;
};

struct NetConfig {
    std::vector<int> hidden = {64, 64};
    double actor_lr = 1e-4;
    double critic_lr = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double final_actor_scale = 1e-2;  // near-zero initial policy
    double grad_clip_norm = 10.0;     // global-norm gradient clip per update; 0 disables
    double lr_decay_to = 1.0;         // linear lr decay to this fraction over training
};

struct AgentConfig {
    double discount = 0.99;
    int update_period = 1;  // gradient tick every tau steps
    int batch_size = 64;
    double tau_critic = 5e-3;
    double tau_actor = 5e-3;
    long pretrain_steps = 5000;
    long pretrain_episode_length = 250;  // short fills keep the seeding walk tame
    int episodes = 300;
    long episode_length = 1000;
    double explore_rho = 0.9;
    double explore_sigma = 0.3;
    double max_trade = 8.0;  // actor output bound (scaled tanh)
    bool bootstrap_terminal = true;  // horizon cuts are artificial; keep bootstrapping
    double divergence_pi_bound = 500.0;  // |pi| runaway abort, non-maxpos kinds
    double divergence_q_bound = 1e6;    // critic values beyond any attainable return
    PerConfig per;
    NetConfig nn;
    std::uint64_t seed = 0;
    // deterministic-policy validation snapshots during training
    int snapshot_every = 5;
    int snapshot_episodes = 4;
    long snapshot_horizon = 5000;
    std::uint64_t snapshot_seed = 9001;

    void validate() const {
        if (!(discount > 0.0 && discount < 1.0)) throw std::invalid_argument("discount in (0,1)");
        if (update_period < 1) throw std::invalid_argument("update_period must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
        if (!(tau_critic > 0.0 && tau_critic < 1.0)) throw std::invalid_argument("tau_critic in (0,1)");
        if (!(tau_actor > 0.0 && tau_actor < 1.0)) throw std::invalid_argument("tau_actor in (0,1)");
        if (pretrain_steps < 0) throw std::invalid_argument("pretrain_steps must be >= 0");
        if (pretrain_episode_length < 1)
            throw std::invalid_argument("pretrain_episode_length must be >= 1");
        if (episodes < 0) throw std::invalid_argument("episodes must be >= 0");
        if (episode_length < 1) throw std::invalid_argument("episode_length must be >= 1");
        if (!(explore_rho > 0.0 && explore_rho <= 1.0)) throw std::invalid_argument("explore_rho in (0,1]");
        if (explore_sigma < 0.0) throw std::invalid_argument("explore_sigma must be >= 0");
        if (!(max_trade > 0.0)) throw std::invalid_argument("max_trade must be > 0");
        if (per.capacity < batch_size) throw std::invalid_argument("replay capacity < batch size");
        if (nn.hidden.empty()) throw std::invalid_argument("need at least one hidden layer");
        if (!(nn.lr_decay_to > 0.0 && nn.lr_decay_to <= 1.0))
            throw std::invalid_argument("lr_decay_to must be in (0,1]");
        if (snapshot_every < 1) throw std::invalid_argument("snapshot_every must be >= 1");
        if (snapshot_episodes < 1) throw std::invalid_argument("snapshot_episodes must be >= 1");
        if (snapshot_horizon < 1) throw std::invalid_argument("snapshot_horizon must be >= 1");
    }
};

// Autoregressive exploration noise, eta <- (1-rho_expl)*eta + sigma_expl*N(0,1),
// restarted at 0 every episode.
struct ExplorationNoise {
    double value = 0.0;
    double rho;
    double sigma;

    ExplorationNoise(double rho_expl, double sigma_expl) : rho(rho_expl), sigma(sigma_expl) {}
    void reset() { value = 0.0; }
    double step(GaussianRng& rng) {
        value = (1.0 - rho) * value + sigma * rng.standard_normal();
        return value;
    }
};

struct EpisodeStats {
    int episode = 0;
    double eval_reward = 0.0;
    double eval_pnl = 0.0;
};

struct TrainedAgent {
    MlpNet actor, critic, target_actor, target_critic;
    MlpNet best_actor;  // highest validation reward seen during training
    double best_eval_reward = 0.0;
    std::vector<EpisodeStats> history;
    bool diverged = false;
    int diverged_episode = -1;
    std::string divergence_reason;
};

// Update-tick phases, in the order the trainer must execute them.
enum class TickEvent { critic_step, actor_step, priority_update, soft_update };

// DDPG actor-critic pair with prioritized replay. One instance trains one
// seed sequentially; run seeds in parallel as independent instances.
class DdpgAgent {
public:
    DdpgAgent(const AgentConfig& config, GaussianRng& rng) : cfg_(config) {
        cfg_.validate();
        std::vector<int> actor_sizes{2};
        std::vector<int> critic_sizes{3};
        for (int h : cfg_.nn.hidden) {
            actor_sizes.push_back(h);
            critic_sizes.push_back(h);
        }
        actor_sizes.push_back(1);
        critic_sizes.push_back(1);
        actor_ = MlpNet(actor_sizes, HiddenActivation::relu, OutputActivation::scaled_tanh,
                        cfg_.max_trade);
        critic_ = MlpNet(critic_sizes, HiddenActivation::relu, OutputActivation::linear);
        actor_.init_uniform(rng, cfg_.nn.final_actor_scale);
        critic_.init_uniform(rng);
        target_actor_ = actor_;
        target_critic_ = critic_;
        actor_opt_ = AdamState(actor_, cfg_.nn.actor_lr, cfg_.nn.adam_beta1, cfg_.nn.adam_beta2,
                               cfg_.nn.adam_epsilon);
        critic_opt_ = AdamState(critic_, cfg_.nn.critic_lr, cfg_.nn.adam_beta1,
                                cfg_.nn.adam_beta2, cfg_.nn.adam_epsilon);
    }

    const AgentConfig& config() const { return cfg_; }
    MlpNet& actor() { return actor_; }
    MlpNet& critic() { return critic_; }
    MlpNet& target_actor() { return target_actor_; }
    MlpNet& target_critic() { return target_critic_; }

    // deterministic policy; add exploration noise externally during training
    double act(const EnvState& s) {
        in2_[0] = s.position;
        in2_[1] = s.predictor;
        actor_.forward(in2_, tape_a_);
        return tape_a_.acts.back()[0];
    }

    double max_abs_q_seen() const { return max_abs_q_; }
    double last_critic_loss() const { return last_loss_; }

    // One prioritized TD step on the critic; returns the signed TD errors
    // delta_i = Q(s_i,a_i) - Qtilde_i for the priority update.
    std::vector<double> critic_update(const SampledBatch& batch, double discount) {
        const int b = static_cast<int>(batch.transitions.size());
        std::vector<double> td(b);
        double loss = 0.0;
        for (int i = 0; i < b; ++i) {
            const Transition& tr = batch.transitions[i];
            double target = tr.reward;
            if (!tr.terminal && discount != 0.0) {
                in2_[0] = tr.next_state.position;
                in2_[1] = tr.next_state.predictor;
                target_actor_.forward(in2_, tape_scratch_);
                const double a_next = tape_scratch_.acts.back()[0];
                in3_[0] = tr.next_state.position;
                in3_[1] = tr.next_state.predictor;
                in3_[2] = a_next;
                target_critic_.forward(in3_, tape_scratch_);
                target += discount * tape_scratch_.acts.back()[0];
            }
            in3_[0] = tr.state.position;
            in3_[1] = tr.state.predictor;
            in3_[2] = tr.action;
            critic_.forward(in3_, tape_c_);
            const double q = tape_c_.acts.back()[0];
            if (std::abs(q) > max_abs_q_) max_abs_q_ = std::abs(q);
            const double delta = q - target;
            td[i] = delta;
            const double w = batch.is_weights[i];
            loss += w * delta * delta / b;
            // d/dq of (1/b) sum_i w_i delta_i^2
            out_grad_[0] = 2.0 * w * delta / b;
            critic_.backward(tape_c_, out_grad_, critic_grads_, /*accumulate=*/i > 0);
        }
        if (!std::isfinite(loss)) throw divergence_error("critic loss is not finite");
        last_loss_ = loss;
        clip_gradient_norm(critic_grads_, cfg_.nn.grad_clip_norm);
        adam_step(critic_, critic_grads_, critic_opt_);
        return td;
    }

    // One deterministic-policy-gradient step on the actor; critic untouched.
    void actor_update(const SampledBatch& batch) {
        actor_update_with_dq(batch, [this](const EnvState& s, double a) {
            in3_[0] = s.position;
            in3_[1] = s.predictor;
            in3_[2] = a;
            critic_.forward(in3_, tape_c_);
            out_grad_[0] = 1.0;
            critic_.backward(tape_c_, out_grad_, scratch_grads_);
            return scratch_grads_.dinput[2];  // dQ/da
        });
    }

    // Actor step with an explicit action-gradient source; lets tests drive the
    // policy against a stub critic with a known optimum.
    template <typename DqFn>
    void actor_update_with_dq(const SampledBatch& batch, DqFn&& dq_da) {
        const int b = static_cast<int>(batch.transitions.size());
        for (int i = 0; i < b; ++i) {
            const Transition& tr = batch.transitions[i];
            in2_[0] = tr.state.position;
            in2_[1] = tr.state.predictor;
            actor_.forward(in2_, tape_a_);
            const double a = tape_a_.acts.back()[0];
            const double dq = dq_da(tr.state, a);
            // minimize -(1/b) sum_i Q(s_i, phi(s_i))
            out_grad_[0] = -dq / b;
            actor_.backward(tape_a_, out_grad_, actor_grads_, /*accumulate=*/i > 0);
        }
        clip_gradient_norm(actor_grads_, cfg_.nn.grad_clip_norm);
        adam_step(actor_, actor_grads_, actor_opt_);
    }

    void soft_update_targets() {
        soft_update(target_critic_, critic_, cfg_.tau_critic);
        soft_update(target_actor_, actor_, cfg_.tau_actor);
    }

    // linear decay from the configured rates toward lr_decay_to * rate
    void set_lr_progress(double progress) {
        const double f = 1.0 - (1.0 - cfg_.nn.lr_decay_to) * std::min(1.0, progress);
        actor_opt_.set_learning_rate(cfg_.nn.actor_lr * f);
        critic_opt_.set_learning_rate(cfg_.nn.critic_lr * f);
    }

private:
    AgentConfig cfg_;
    MlpNet actor_, critic_, target_actor_, target_critic_;
    AdamState actor_opt_, critic_opt_;
    double max_abs_q_ = 0.0;
    double last_loss_ = 0.0;
    // reusable workspaces (hot path)
    std::vector<double> in2_ = {0.0, 0.0};
    std::vector<double> in3_ = {0.0, 0.0, 0.0};
    std::vector<double> out_grad_ = {0.0};
    ForwardTape tape_a_, tape_c_, tape_scratch_;
    GradientSet critic_grads_, actor_grads_, scratch_grads_;
};

namespace detail {

template <typename Net>
std::pair<double, double> snapshot_eval(Net& actor_net, const EnvParams& env_params,
                                        const AgentConfig& cfg) {
    // validation rollouts of the deterministic policy; in noisy mode the
    // reward is assessed with the perfect-information gain
    const EnvParams base = without_barrier(env_params);
    double reward = 0.0, pnl = 0.0;
    ForwardTape tape;
    std::vector<double> in{0.0, 0.0};
    auto policy = [&](const EnvState& s) {
        in[0] = s.position;
        in[1] = s.predictor;
        actor_net.forward(in, tape);
        return tape.acts.back()[0];
    };
    for (int ep = 0; ep < cfg.snapshot_episodes; ++ep) {
        EnvParams p = base;
        p.seed = mix_seed(cfg.snapshot_seed, static_cast<std::uint64_t>(ep));
        const Trajectory traj = rollout(p, cfg.snapshot_horizon, policy);
        double r = 0.0;
        for (std::size_t t = 0; t < traj.transitions.size(); ++t)
            r += traj.transitions[t].reward - traj.pnls[t] + traj.pnls_true[t];
        reward += r / static_cast<double>(traj.transitions.size());
        pnl += traj.mean_pnl_true();
    }
    return {reward / cfg.snapshot_episodes, pnl / cfg.snapshot_episodes};
}

}  // namespace detail

// Full Alg.-1 style training run: pretraining fill with |reward| priorities,
// then n episodes with an update tick every `update_period` steps in the
// order critic step, actor step, priority update, soft target updates.
// Deterministic given (env_params, config). Divergence aborts the run and is
// reported on the returned agent, not thrown.
inline TrainedAgent train(const EnvParams& env_params, const AgentConfig& config,
                          const std::function<void(TickEvent)>& tick_hook = nullptr) {
    config.validate();
    env_params.validate();
    GaussianRng agent_rng(mix_seed(config.seed, 0x5eedull));
    DdpgAgent agent(config, agent_rng);

    TrainedAgent out;
    out.best_eval_reward = -std::numeric_limits<double>::infinity();
    auto finish = [&]() {
        out.actor = agent.actor();
        out.critic = agent.critic();
        out.target_actor = agent.target_actor();
        out.target_critic = agent.target_critic();
        if (out.best_actor.layer_sizes().empty()) {
            out.best_actor = agent.actor();
            if (!out.diverged) {
                auto [r, p] = detail::snapshot_eval(out.best_actor, env_params, config);
                out.best_eval_reward = r;
            }
        }
        return out;
    };

    if (config.episodes == 0) return finish();

    const bool maxpos_kind = env_params.kind == EnvKind::lin_cost_maxpos;
    EnvParams train_params = env_params;
    train_params.seed = mix_seed(config.seed, 0xe41ull);
    Environment env(train_params, config.episode_length);
    ExplorationNoise noise(config.explore_rho, config.explore_sigma);
    PrioritizedBuffer buffer(config.per.capacity, config.per.alpha, config.per.epsilon);

    auto step_one = [&](Environment& e, EnvState& s, PrioritizedBuffer::InsertMode mode) {
        const double a = agent.act(s) + noise.step(agent_rng);
        const StepResult r = e.step(a);
        const bool terminal = r.done && !config.bootstrap_terminal;
        buffer.insert({s, a, r.reward, r.next_state, terminal}, mode, std::abs(r.reward));
        s = r.next_state;
        return r;
    };

    {
        // buffer seeding runs on its own short-horizon environment instance
        EnvParams pre_params = train_params;
        pre_params.seed = mix_seed(config.seed, 0x97eULL);
        Environment pre_env(pre_params, config.pretrain_episode_length);
        EnvState s = pre_env.reset();
        noise.reset();
        for (long t = 0; t < config.pretrain_steps; ++t) {
            const StepResult r =
                step_one(pre_env, s, PrioritizedBuffer::InsertMode::explicit_priority);
            if (r.done) {
                s = pre_env.reset();
                noise.reset();
            }
        }
    }

    const long total_steps = static_cast<long>(config.episodes) * config.episode_length;
    long gstep = 0;
    for (int ep = 1; ep <= config.episodes; ++ep) {
        EnvState s = env.reset();
        noise.reset();
        for (long t = 0; t < config.episode_length; ++t) {
            ++gstep;
            const StepResult r = step_one(env, s, PrioritizedBuffer::InsertMode::highest);
            if (!maxpos_kind && std::abs(r.next_state.position) > config.divergence_pi_bound) {
                out.diverged = true;
                out.diverged_episode = ep;
                out.divergence_reason = "position runaway: |pi| > " +
                                        std::to_string(config.divergence_pi_bound);
                return finish();
            }
            if (gstep % config.update_period == 0 && buffer.size() >= config.batch_size) {
                if (config.nn.lr_decay_to < 1.0)
                    agent.set_lr_progress(static_cast<double>(gstep) / total_steps);
                const double beta =
                    PrioritizedBuffer::anneal_beta(gstep, total_steps, config.per.beta0);
                SampledBatch batch = buffer.sample(config.batch_size, beta, agent_rng);
                std::vector<double> td;
                try {
                    td = agent.critic_update(batch, config.discount);
                    if (tick_hook) tick_hook(TickEvent::critic_step);
                    agent.actor_update(batch);
                    if (tick_hook) tick_hook(TickEvent::actor_step);
                } catch (const divergence_error& e) {
                    out.diverged = true;
                    out.diverged_episode = ep;
                    out.divergence_reason = e.what();
                    return finish();
                }
                buffer.update_priorities(batch.indices, td);
                if (tick_hook) tick_hook(TickEvent::priority_update);
                agent.soft_update_targets();
                if (tick_hook) tick_hook(TickEvent::soft_update);
                if (agent.max_abs_q_seen() > config.divergence_q_bound) {
                    out.diverged = true;
                    out.diverged_episode = ep;
                    out.divergence_reason = "critic value explosion: |Q| > " +
                                            std::to_string(config.divergence_q_bound);
                    return finish();
                }
            }
        }
        if (!agent.actor().finite() || !agent.critic().finite()) {
            out.diverged = true;
            out.diverged_episode = ep;
            out.divergence_reason = "non-finite network parameters";
            return finish();
        }
        if (ep % config.snapshot_every == 0 || ep == config.episodes) {
            auto [reward, pnl] = detail::snapshot_eval(agent.actor(), env_params, config);
            out.history.push_back({ep, reward, pnl});
            if (out.best_actor.layer_sizes().empty() || reward > out.best_eval_reward) {
                out.best_eval_reward = reward;
                out.best_actor = agent.actor();
            }
        }
    }
    return finish();
}

}  // namespace detpo

#pragma once

#include "detpo/env.hpp"
#include "detpo/rng.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace detpo {

struct SampledBatch {
    std::vector<int> indices;
    std::vector<Transition> transitions;
    std::vector<double> is_weights;  // max-normalized within the batch, in (0,1]
};

// Fixed-capacity ring with proportional prioritized sampling,
// P(i) = p_i^alpha / sum_k p_k^alpha, and importance-sampling weights
// (1/(N*P(i)))^beta. Single writer, single sampler.
class PrioritizedBuffer {
public:
    enum class InsertMode { explicit_priority, highest };

    PrioritizedBuffer(int capacity, double alpha, double epsilon = 1e-3,
                      double initial_max_priority = 1.0)
        : capacity_(capacity),
          alpha_(alpha),
          eps_(epsilon),
          max_priority_(initial_max_priority) {
        if (capacity < 1) throw std::invalid_argument("capacity must be >= 1");
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in [0,1]");
        if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
        items_.reserve(capacity);
        prio_.reserve(capacity);
        prio_pow_.reserve(capacity);
    }

    int size() const { return static_cast<int>(items_.size()); }
    int capacity() const { return capacity_; }
    double max_priority_seen() const { return max_priority_; }
    double priority(int index) const { return prio_.at(index); }

    // explicit mode: store |value| + epsilon (pretraining, value = |reward|);
    // highest mode: store the running max so new experiences are sampled soon.
    void insert(const Transition& t, InsertMode mode, double value = 0.0) {
        const double p =
            mode == InsertMode::explicit_priority ? std::abs(value) + eps_ : max_priority_;
        if (size() < capacity_) {
            items_.push_back(t);
            prio_.push_back(p);
            prio_pow_.push_back(std::pow(p, alpha_));
        } else {
            items_[next_] = t;
            prio_[next_] = p;
            prio_pow_[next_] = std::pow(p, alpha_);
            next_ = (next_ + 1) % capacity_;
        }
        if (p > max_priority_) max_priority_ = p;
    }

    // normalized sampling probability of one occupied slot
    double probability(int index) const {
        double total = 0.0;
        for (double v : prio_pow_) total += v;
        return prio_pow_.at(index) / total;
    }

    // i.i.d. draws (with replacement) via cumulative-sum inversion.
    SampledBatch sample(int batch_size, double beta, GaussianRng& rng) {
        const int n = size();
        if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
        if (n < batch_size) throw std::logic_error("sample: buffer holds fewer items than batch");
        if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("beta must be in [0,1]");

        cumsum_.resize(n);
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            total += prio_pow_[i];
            cumsum_[i] = total;
        }

        SampledBatch batch;
        batch.indices.resize(batch_size);
        batch.transitions.resize(batch_size);
        batch.is_weights.resize(batch_size);
        double max_w = 0.0;
        for (int k = 0; k < batch_size; ++k) {
            const double u = rng.uniform01() * total;
            const int idx = static_cast<int>(
                std::lower_bound(cumsum_.begin(), cumsum_.end(), u) - cumsum_.begin());
            const int i = idx < n ? idx : n - 1;
            batch.indices[k] = i;
            batch.transitions[k] = items_[i];
            const double prob = prio_pow_[i] / total;
            const double w = std::pow(1.0 / (static_cast<double>(n) * prob), beta);
            batch.is_weights[k] = w;
            if (w > max_w) max_w = w;
        }
        for (double& w : batch.is_weights) w /= max_w;
        return batch;
    }

    // p_i <- |delta_i| + epsilon
    void update_priorities(std::span<const int> indices, std::span<const double> td_errors) {
        if (indices.size() != td_errors.size())
            throw std::invalid_argument("update_priorities: size mismatch");
        for (std::size_t k = 0; k < indices.size(); ++k) {
            const int i = indices[k];
            if (i < 0 || i >= size())
                throw std::out_of_range("update_priorities: index out of range");
            const double p = std::abs(td_errors[k]) + eps_;
            prio_[i] = p;
            prio_pow_[i] = std::pow(p, alpha_);
            if (p > max_priority_) max_priority_ = p;
        }
    }

    // beta0 + (1 - beta0) * step/total_steps
    static double anneal_beta(long step, long total_steps, double beta0) {
        if (total_steps < 1) throw std::invalid_argument("total_steps must be >= 1");
        if (step < 0 || step > total_steps)
            throw std::invalid_argument("step must be in [0, total_steps]");
        if (!(beta0 >= 0.0 && beta0 <= 1.0))
            throw std::invalid_argument("beta0 must be in [0,1]");
        return beta0 + (1.0 - beta0) * static_cast<double>(step) / static_cast<double>(total_steps);
    }

private:
    int capacity_;
    double alpha_;
    double eps_;
    double max_priority_;
    int next_ = 0;  // overwrite cursor once full (ring semantics)
    std::vector<Transition> items_;
    std::vector<double> prio_;
    std::vector<double> prio_pow_;  // cached p^alpha so sampling is add-only
    std::vector<double> cumsum_;
};

}  // namespace detpo

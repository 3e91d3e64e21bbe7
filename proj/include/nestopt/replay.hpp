#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "nestopt/env.hpp"

namespace nestopt {

/// Proportional prioritized replay: entries are sampled with probability
/// p_i^alpha / sum_j p_j^alpha and paired with importance weights
/// (N * P(i))^-beta normalized by their maximum. A ring buffer overwrites
/// the oldest entry at capacity.
class PrioritizedReplay {
 public:
  PrioritizedReplay(std::size_t capacity, double alpha, double beta, std::uint64_t seed)
      : capacity_(capacity), alpha_(alpha), beta_(beta), rng_(seed) {
    if (capacity_ == 0) throw std::invalid_argument("capacity must be positive");
  }

  void push(Transition tr, double priority) {
    if (!(priority > 0.0)) throw std::invalid_argument("priority must be > 0");
    if (items_.size() < capacity_) {
      items_.push_back(std::move(tr));
      priorities_.push_back(priority);
    } else {
      items_[next_] = std::move(tr);
      priorities_[next_] = priority;
      next_ = (next_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }

  const Transition& at(std::size_t i) const { return items_.at(i); }
  double priority(std::size_t i) const { return priorities_.at(i); }

  double max_priority() const {
    double m = 1.0;
    for (double p : priorities_) m = std::max(m, p);
    return m;
  }

  void update_priority(std::size_t i, double priority) {
    if (!(priority > 0.0)) throw std::invalid_argument("priority must be > 0");
    priorities_.at(i) = priority;
  }

  struct Sampled {
    std::vector<std::size_t> indices;
    std::vector<double> weights;  // importance-sampling weights, max-normalized
  };

  /// Samples `n` entries with replacement.
  Sampled sample(std::size_t n) {
    if (items_.empty()) throw std::logic_error("sampling an empty replay buffer");
    const std::size_t count = items_.size();
    std::vector<double> scaled(count);
    double total = 0.0;
    double min_prob = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      scaled[i] = std::pow(priorities_[i], alpha_);
      total += scaled[i];
    }
    for (std::size_t i = 0; i < count; ++i) {
      const double prob = scaled[i] / total;
      if (min_prob == 0.0 || prob < min_prob) min_prob = prob;
    }
    const double max_weight =
        std::pow(static_cast<double>(count) * min_prob, -beta_);

    Sampled out;
    out.indices.reserve(n);
    out.weights.reserve(n);
    std::uniform_real_distribution<double> uniform(0.0, total);
    for (std::size_t s = 0; s < n; ++s) {
      double u = uniform(rng_);
      std::size_t pick = count - 1;
      for (std::size_t i = 0; i < count; ++i) {
        if (u < scaled[i]) {
          pick = i;
          break;
        }
        u -= scaled[i];
      }
      const double prob = scaled[pick] / total;
      out.indices.push_back(pick);
      out.weights.push_back(std::pow(static_cast<double>(count) * prob, -beta_) / max_weight);
    }
    return out;
  }

 private:
  std::size_t capacity_;
  double alpha_;
  double beta_;
  std::mt19937_64 rng_;
  std::vector<Transition> items_;
  std::vector<double> priorities_;
  std::size_t next_ = 0;
};

}  // namespace nestopt

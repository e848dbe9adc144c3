#pragma once

#include <cstddef>
#include <vector>

#include "stdit/tensor.hpp"

namespace stdit {

// Closed-form diffusion constants shared by training and inference.
// Indexing: arrays are 0-based, timesteps are 1-based (t in [1, T] maps to
// index t-1). Immutable after construction.
struct Schedule {
    std::size_t steps = 0;               // T
    std::vector<double> betas;           // beta_t
    std::vector<double> alpha_hats;      // 1 - beta_t
    std::vector<double> alpha_bars;      // prod_{i<=t} alpha_hat_i
    std::vector<double> posterior_vars;  // (1-abar_{t-1})/(1-abar_t) * beta_t; beta_1 at t=1
};

// Linear beta ramp over `steps` inclusive endpoints. steps >= 1 and
// 0 < beta_start <= beta_end < 1.
Schedule make_schedule(std::size_t steps, double beta_start, double beta_end);

// sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps, elementwise. The caller owns
// the randomness in eps.
Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps, const Schedule& s);

struct ReverseStep {
    Tensor mean;
    double sigma = 0.0;
};

// One reverse-step distribution: mean = (x_t - beta_t/sqrt(1-abar_t) *
// eps_hat) / sqrt(alpha_hat_t); sigma = sqrt(posterior variance) for t > 1
// and 0 at t = 1 so the final step is deterministic.
ReverseStep p_mean_sigma(const Tensor& x_t, std::size_t t, const Tensor& eps_hat,
                         const Schedule& s);

}  // namespace stdit

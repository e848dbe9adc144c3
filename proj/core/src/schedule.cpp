#include "stdit/schedule.hpp"

#include <cmath>
#include <string>

#include "stdit/error.hpp"

namespace stdit {

Schedule make_schedule(std::size_t steps, double beta_start, double beta_end) {
    if (steps < 1) {
        throw ConfigError("schedule: steps must be >= 1");
    }
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
        throw ConfigError("schedule: need 0 < beta_start <= beta_end < 1, got [" +
                          std::to_string(beta_start) + ", " + std::to_string(beta_end) + "]");
    }
    Schedule s;
    s.steps = steps;
    s.betas.resize(steps);
    s.alpha_hats.resize(steps);
    s.alpha_bars.resize(steps);
    s.posterior_vars.resize(steps);
    double abar = 1.0;
    for (std::size_t i = 0; i < steps; ++i) {
        double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
        s.betas[i] = beta_start + (beta_end - beta_start) * frac;
        s.alpha_hats[i] = 1.0 - s.betas[i];
        double abar_prev = abar;
        abar *= s.alpha_hats[i];
        s.alpha_bars[i] = abar;
        s.posterior_vars[i] =
            i == 0 ? s.betas[0] : (1.0 - abar_prev) / (1.0 - abar) * s.betas[i];
    }
    return s;
}

namespace {

void check_t(std::size_t t, const Schedule& s) {
    if (t < 1 || t > s.steps) {
        throw IndexError("schedule: timestep " + std::to_string(t) + " out of range [1, " +
                         std::to_string(s.steps) + "]");
    }
}

}  // namespace

Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps, const Schedule& s) {
    check_t(t, s);
    if (!x0.same_shape(eps)) {
        throw ShapeError("q_sample: shapes differ: " + x0.shape_str() + " vs " +
                         eps.shape_str());
    }
    double abar = s.alpha_bars[t - 1];
    double signal = std::sqrt(abar);
    double noise = std::sqrt(1.0 - abar);
    Tensor out = x0;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = signal * x0[i] + noise * eps[i];
    return out;
}

ReverseStep p_mean_sigma(const Tensor& x_t, std::size_t t, const Tensor& eps_hat,
                         const Schedule& s) {
    check_t(t, s);
    if (!x_t.same_shape(eps_hat)) {
        throw ShapeError("p_mean_sigma: shapes differ: " + x_t.shape_str() + " vs " +
                         eps_hat.shape_str());
    }
    double beta = s.betas[t - 1];
    double inv_sqrt_ahat = 1.0 / std::sqrt(s.alpha_hats[t - 1]);
    double coeff = beta / std::sqrt(1.0 - s.alpha_bars[t - 1]);
    ReverseStep step;
    step.mean = x_t;
    for (std::size_t i = 0; i < step.mean.size(); ++i) {
        step.mean[i] = inv_sqrt_ahat * (x_t[i] - coeff * eps_hat[i]);
    }
    step.sigma = t == 1 ? 0.0 : std::sqrt(s.posterior_vars[t - 1]);
    return step;
}

}  // namespace stdit

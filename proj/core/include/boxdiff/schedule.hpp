#pragma once

#include <utility>
#include <vector>

#include "boxdiff/tensor.hpp"

namespace boxdiff {

/// Precomputed noise-variance schedule. alpha_bar[t] is the cumulative
/// signal retention for t in 0..T with alpha_bar[0] == 1 exactly; beta[t]
/// (1-indexed, beta[0] unused) is the per-step noise variance derived from
/// consecutive alpha_bar ratios and clipped at 0.999.
struct Schedule {
    int T = 0;
    std::vector<double> alpha_bar;  // size T+1
    std::vector<double> beta;       // size T+1, index 0 unused

    double beta_at(int t) const { return beta[static_cast<std::size_t>(t)]; }
    double alpha_bar_at(int t) const { return alpha_bar[static_cast<std::size_t>(t)]; }
    double alpha_at(int t) const { return 1.0 - beta_at(t); }
};

/// Cosine schedule: f(t) = cos^2(((t/T + s) / (1 + s)) * pi/2) with s = 0.008,
/// beta_t = min(1 - f(t)/f(t-1), 0.999), alpha_bar rebuilt as the running
/// product of (1 - beta_t) so all invariants hold at the clipped tail.
Schedule make_cosine_schedule(int T);

/// Closed-form forward corruption: sqrt(abar_t) * z0 + sqrt(1 - abar_t) * noise.
/// Shapes of z0 and noise must match; t must be in [1, T].
Tensor q_sample(const Schedule& schedule, const Tensor& z0, int t, const Tensor& noise);

/// Mean and variance of the forward-process posterior q(z_{t-1} | z_t, z0).
std::pair<Tensor, double> posterior(const Schedule& schedule, const Tensor& z0,
                                    const Tensor& zt, int t);

/// One DDIM transition from noise level t_now to t_next, both schedule
/// indices. t_now must be in [1, T]; t_next <= t_now, with t_next = -1 (or 0)
/// denoting the terminal step where alpha_bar = 1 and the predicted z0 is
/// returned deterministically. eta in [0, 1] scales the stochastic part.
Tensor ddim_step(const Schedule& schedule, const Tensor& zt, const Tensor& z0_pred,
                 int t_now, int t_next, double eta, const Tensor& noise);

}  // namespace boxdiff

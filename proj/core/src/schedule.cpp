#include "boxdiff/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace boxdiff {

namespace {

double cosine_f(double t, double T) {
    constexpr double s = 0.008;
    const double arg = ((t / T) + s) / (1.0 + s) * std::numbers::pi / 2.0;
    const double c = std::cos(arg);
    return c * c;
}

void check_shapes(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

void check_t(const Schedule& schedule, int t, const char* what) {
    if (t < 1 || t > schedule.T) throw std::out_of_range(std::string(what) + ": t out of range");
}

}  // namespace

Schedule make_cosine_schedule(int T) {
    if (T < 1) throw std::invalid_argument("make_cosine_schedule: T must be >= 1");
    Schedule s;
    s.T = T;
    s.alpha_bar.resize(static_cast<std::size_t>(T) + 1);
    s.beta.resize(static_cast<std::size_t>(T) + 1, 0.0);

    s.alpha_bar[0] = 1.0;
    double running = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double ratio = cosine_f(static_cast<double>(t), static_cast<double>(T)) /
                             cosine_f(static_cast<double>(t - 1), static_cast<double>(T));
        const double beta_t = std::min(1.0 - ratio, 0.999);
        s.beta[static_cast<std::size_t>(t)] = beta_t;
        running *= 1.0 - beta_t;
        s.alpha_bar[static_cast<std::size_t>(t)] = running;
    }
    return s;
}

Tensor q_sample(const Schedule& schedule, const Tensor& z0, int t, const Tensor& noise) {
    check_t(schedule, t, "q_sample");
    check_shapes(z0, noise, "q_sample");
    const double abar = schedule.alpha_bar_at(t);
    const double signal = std::sqrt(abar);
    const double sigma = std::sqrt(1.0 - abar);
    Tensor out = z0;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = signal * z0.data[i] + sigma * noise.data[i];
    }
    return out;
}

std::pair<Tensor, double> posterior(const Schedule& schedule, const Tensor& z0,
                                    const Tensor& zt, int t) {
    check_t(schedule, t, "posterior");
    check_shapes(z0, zt, "posterior");
    const double abar_t = schedule.alpha_bar_at(t);
    const double abar_prev = schedule.alpha_bar_at(t - 1);
    const double beta_t = schedule.beta_at(t);
    const double alpha_t = schedule.alpha_at(t);

    const double coef0 = std::sqrt(abar_prev) * beta_t / (1.0 - abar_t);
    const double coeft = std::sqrt(alpha_t) * (1.0 - abar_prev) / (1.0 - abar_t);
    const double variance = (1.0 - abar_prev) / (1.0 - abar_t) * beta_t;

    Tensor mean = z0;
    for (std::size_t i = 0; i < mean.data.size(); ++i) {
        mean.data[i] = coef0 * z0.data[i] + coeft * zt.data[i];
    }
    return {std::move(mean), variance};
}

Tensor ddim_step(const Schedule& schedule, const Tensor& zt, const Tensor& z0_pred,
                 int t_now, int t_next, double eta, const Tensor& noise) {
    check_t(schedule, t_now, "ddim_step");
    check_shapes(zt, z0_pred, "ddim_step");
    check_shapes(zt, noise, "ddim_step");
    if (t_next > t_now) throw std::invalid_argument("ddim_step: t_next must be <= t_now");

    // Identity transition; returned as-is so the equality is exact.
    if (t_next == t_now) return zt;

    const double abar_now = schedule.alpha_bar_at(t_now);
    // -1 is the terminal sentinel; index 0 holds alpha_bar = 1 exactly.
    const double abar_next = schedule.alpha_bar_at(std::max(t_next, 0));

    const double sigma =
        eta * std::sqrt((1.0 - abar_next) / (1.0 - abar_now)) *
        std::sqrt(1.0 - abar_now / abar_next);
    const double signal = std::sqrt(abar_next);
    const double eps_coef = std::sqrt(std::max(0.0, 1.0 - abar_next - sigma * sigma));
    const double denom = std::sqrt(1.0 - abar_now);
    const double sqrt_abar_now = std::sqrt(abar_now);

    Tensor out = zt;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double eps_pred = (zt.data[i] - sqrt_abar_now * z0_pred.data[i]) / denom;
        out.data[i] = signal * z0_pred.data[i] + eps_coef * eps_pred + sigma * noise.data[i];
    }
    return out;
}

}  // namespace boxdiff

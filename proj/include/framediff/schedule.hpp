#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <vector>

#include "framediff/tensor.hpp"

namespace fd {

enum class ScheduleKind { linear };

// beta/alpha-bar tables for a DDPM forward process. Tables are kept in double
// and cast down at use sites. Index convention: step t in [1, T] maps to
// betas[t-1] etc.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> betas;
    std::vector<double> alphas;
    std::vector<double> alpha_bars;
    std::vector<double> posterior_vars;  // beta~_t, with beta~_1 = beta_1

    double beta(int t) const { return betas.at(static_cast<size_t>(t - 1)); }
    double alpha(int t) const { return alphas.at(static_cast<size_t>(t - 1)); }
    double alpha_bar(int t) const { return alpha_bars.at(static_cast<size_t>(t - 1)); }
    double posterior_var(int t) const { return posterior_vars.at(static_cast<size_t>(t - 1)); }

    void check_step(int t) const {
        if (t < 1 || t > T) throw std::invalid_argument("diffusion step out of [1,T]");
    }
};

inline NoiseSchedule schedule_from_betas(std::vector<double> betas) {
    NoiseSchedule s;
    s.T = static_cast<int>(betas.size());
    if (s.T < 1) throw std::invalid_argument("schedule needs T >= 1");
    s.betas = std::move(betas);
    s.alphas.resize(s.betas.size());
    s.alpha_bars.resize(s.betas.size());
    s.posterior_vars.resize(s.betas.size());
    double prod = 1.0;
    for (size_t i = 0; i < s.betas.size(); ++i) {
        double b = s.betas[i];
        if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("beta_t must lie in (0,1)");
        s.alphas[i] = 1.0 - b;
        double prev_bar = prod;
        prod *= s.alphas[i];
        s.alpha_bars[i] = prod;
        s.posterior_vars[i] = (i == 0) ? b : b * (1.0 - prev_bar) / (1.0 - prod);
    }
    return s;
}

inline NoiseSchedule make_schedule(int T, double beta_start = 1e-4, double beta_end = 0.02,
                                   ScheduleKind kind = ScheduleKind::linear) {
    if (T < 1) throw std::invalid_argument("T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw std::invalid_argument("need 0 < beta_start <= beta_end < 1");
    (void)kind;  // only linear exists
    std::vector<double> betas(static_cast<size_t>(T));
    for (int i = 0; i < T; ++i)
        betas[static_cast<size_t>(i)] =
            (T == 1) ? beta_start : beta_start + (beta_end - beta_start) * i / double(T - 1);
    return schedule_from_betas(std::move(betas));
}

// Strided subsequence of an existing schedule for S-step sampling. Entry k of
// the sub-schedule reuses alpha_bar at the original step orig_t[k], so the same
// ancestral step formula applies with beta'_k = 1 - abar(t_k)/abar(t_{k-1}).
struct SubSchedule {
    NoiseSchedule sched;
    std::vector<int> orig_t;  // orig_t[k-1] = original diffusion step of sub-step k
};

inline SubSchedule strided_subschedule(const NoiseSchedule& full, int S) {
    if (S < 1 || S > full.T) throw std::invalid_argument("num_steps must lie in [1,T]");
    SubSchedule sub;
    sub.orig_t.resize(static_cast<size_t>(S));
    for (int k = 1; k <= S; ++k)
        sub.orig_t[static_cast<size_t>(k - 1)] = (k * full.T) / S;  // ends exactly at T
    std::vector<double> betas(static_cast<size_t>(S));
    double prev_bar = 1.0;
    for (int k = 1; k <= S; ++k) {
        double bar = full.alpha_bar(sub.orig_t[static_cast<size_t>(k - 1)]);
        betas[static_cast<size_t>(k - 1)] = 1.0 - bar / prev_bar;
        prev_bar = bar;
    }
    sub.sched = schedule_from_betas(std::move(betas));
    return sub;
}

// q(x_t | x_0): sqrt(abar_t) x0 + sqrt(1-abar_t) eps
template <typename T>
Tensor<T> forward_diffuse(const Tensor<T>& x0, int t, const Tensor<T>& noise,
                          const NoiseSchedule& sched) {
    check_same_shape(x0, noise, "forward_diffuse");
    sched.check_step(t);
    double ab = sched.alpha_bar(t);
    T a = static_cast<T>(std::sqrt(ab));
    T b = static_cast<T>(std::sqrt(1.0 - ab));
    Tensor<T> out(x0.shape);
    for (size_t i = 0; i < x0.size(); ++i) out.v[i] = a * x0.v[i] + b * noise.v[i];
    return out;
}

template <typename T>
double eps_loss(const Tensor<T>& eps_hat, const Tensor<T>& eps) {
    check_same_shape(eps_hat, eps, "eps_loss");
    double acc = 0.0;
    for (size_t i = 0; i < eps.size(); ++i) {
        double d = static_cast<double>(eps_hat.v[i]) - static_cast<double>(eps.v[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(eps.size());
}

// One ancestral reverse step: mean = (xt - beta_t/sqrt(1-abar_t) eps_hat)/sqrt(alpha_t),
// plus sqrt(posterior_var_t) * step_noise. The final step (t=1) is deterministic.
template <typename T>
Tensor<T> ddpm_ancestral_step(const Tensor<T>& xt, const Tensor<T>& eps_hat, int t,
                              const NoiseSchedule& sched, const Tensor<T>& step_noise) {
    check_same_shape(xt, eps_hat, "ddpm_ancestral_step");
    check_same_shape(xt, step_noise, "ddpm_ancestral_step noise");
    sched.check_step(t);
    if (t == 1) {
        for (T x : step_noise.v)
            if (x != T(0))
                throw std::invalid_argument("step_noise must be zero at t=1 (deterministic step)");
    }
    double ab = sched.alpha_bar(t);
    T inv_sqrt_a = static_cast<T>(1.0 / std::sqrt(sched.alpha(t)));
    T coef = static_cast<T>(sched.beta(t) / std::sqrt(1.0 - ab));
    T sigma = static_cast<T>(std::sqrt(sched.posterior_var(t)));
    Tensor<T> out(xt.shape);
    for (size_t i = 0; i < xt.size(); ++i)
        out.v[i] = inv_sqrt_a * (xt.v[i] - coef * eps_hat.v[i]) + sigma * step_noise.v[i];
    return out;
}

// Noise the occupied instruction slots of an image condition [F,C,H,W] with
// forward diffusion at t_pert. Slots outside active_slots stay bit-identical,
// in particular PADs and a dropped last frame remain exact zeros.
template <typename T>
Tensor<T> perturb_instruction(const Tensor<T>& c_image, const NoiseSchedule& sched, int t_pert,
                              const Tensor<T>& noise, const std::set<int>& active_slots) {
    if (c_image.ndim() != 4) throw std::invalid_argument("image condition must be [F,C,H,W]");
    check_same_shape(c_image, noise, "perturb_instruction");
    sched.check_step(t_pert);
    int F = c_image.dim(0);
    for (int s : active_slots)
        if (s != 0 && s != F - 1)
            throw std::invalid_argument("active_slots may only reference the endpoint frames");
    Tensor<T> out = c_image;
    double ab = sched.alpha_bar(t_pert);
    T a = static_cast<T>(std::sqrt(ab));
    T b = static_cast<T>(std::sqrt(1.0 - ab));
    size_t slot = c_image.size() / static_cast<size_t>(F);
    for (int s : active_slots) {
        size_t off = slot * static_cast<size_t>(s);
        for (size_t i = 0; i < slot; ++i)
            out.v[off + i] = a * c_image.v[off + i] + b * noise.v[off + i];
    }
    return out;
}

}  // namespace fd

#pragma once

// Inference: classifier-free guidance over text, the tau-staged last-frame
// conditioning schedule, clip generation, autoregressive chaining, and
// zero-shot endpoint editing.

#include <optional>
#include <vector>

#include "framediff/conditioning.hpp"
#include "framediff/denoiser.hpp"
#include "framediff/schedule.hpp"

namespace fd {

struct SamplerConfig {
    int num_steps = 50;  // S, uniformly strided out of 1..T
    int tau = 0;         // last-frame instruction active for the first tau iterations
    double guidance_w = 5.0;
    bool perturb_instructions = true;  // match the train-time input distribution
    int t_pert = 100;
    uint64_t seed = 0;
    // debug: read Eq. 2's inequality against diffusion time instead of the
    // prose "first tau denoising steps" (applies the instruction at the END)
    bool invert_tau_debug = false;
};

struct CondLogEntry {
    int k;                  // sampling iteration, 1-based from highest noise
    bool last_slot_active;
    int t;                  // original diffusion step fed to the model
};

struct GeneratedClip {
    Tensor<float> frames;  // decoded [F,3,H,W], clamped to [0,1]
    Tensor<float> latent;  // final latent [F,C,H',W']
    std::vector<CondLogEntry> log;
};

template <typename T>
Tensor<T> cfg_combine(const Tensor<T>& eps_cond, const Tensor<T>& eps_uncond, double w) {
    check_same_shape(eps_cond, eps_uncond, "cfg_combine");
    Tensor<T> out(eps_cond.shape);
    for (size_t i = 0; i < out.size(); ++i)
        out.v[i] = eps_uncond.v[i] + static_cast<T>(w) * (eps_cond.v[i] - eps_uncond.v[i]);
    return out;
}

namespace detail {

inline Tensor<float> decode_latents(const Tensor<float>& z) {
    int F = z.dim(0);
    size_t per = z.size() / size_t(F);
    Tensor<float> first_frame;
    Tensor<float> out;
    for (int f = 0; f < F; ++f) {
        Tensor<float> lat({z.dim(1), z.dim(2), z.dim(3)});
        std::copy(z.v.begin() + f * per, z.v.begin() + (f + 1) * per, lat.v.begin());
        auto frame = decode_frame(lat);
        if (f == 0) out = Tensor<float>({F, frame.dim(0), frame.dim(1), frame.dim(2)});
        std::copy(frame.v.begin(), frame.v.end(), out.v.begin() + f * frame.size());
    }
    for (auto& v : out.v) v = std::min(1.0f, std::max(0.0f, v));
    return out;
}

inline Tensor<float> concat_lc(const Tensor<float>& z, const Tensor<float>& c) {
    check_same_shape(z, c, "sampler concat");
    int F = z.dim(0), C = z.dim(1);
    Tensor<float> out({F, 2 * C, z.dim(2), z.dim(3)});
    size_t per = z.size() / size_t(F);
    for (int f = 0; f < F; ++f) {
        std::copy(z.v.begin() + f * per, z.v.begin() + (f + 1) * per,
                  out.v.begin() + size_t(f) * 2 * per);
        std::copy(c.v.begin() + f * per, c.v.begin() + (f + 1) * per,
                  out.v.begin() + size_t(f) * 2 * per + per);
    }
    return out;
}

}  // namespace detail

inline GeneratedClip generate_clip(const JointModel<float>& model,
                                   const InstructionSet<float>& ins, const SamplerConfig& cfg,
                                   const NoiseSchedule& sched) {
    if (cfg.num_steps < 1 || cfg.num_steps > sched.T)
        throw std::invalid_argument("num_steps must be in [1, T]");
    if (cfg.tau < 0 || cfg.tau > cfg.num_steps)
        throw std::invalid_argument("tau must be in [0, num_steps]");
    if (cfg.guidance_w < 0.0) throw std::invalid_argument("guidance_w must be >= 0");
    if (cfg.tau > 0 && !ins.f_last.has_value())
        throw std::invalid_argument("tau > 0 requires a last-frame instruction");
    if (ins.f_first.ndim() != 3)
        throw std::invalid_argument("f_first must be a [C,H',W'] latent");

    int F = model.cfg.frames;
    auto rng = make_rng(cfg.seed, 0x5A11);

    // both condition variants share one perturbation noise draw
    auto c_on = compose_image_condition<float>(ins.f_first, ins.f_last, F);
    auto c_off = compose_image_condition<float>(ins.f_first, std::nullopt, F);
    if (cfg.perturb_instructions) {
        auto noise = randn<float>(rng, c_on.shape);
        c_on = perturb_instruction(c_on, sched, cfg.t_pert, noise,
                                   active_slots_of(ins.f_last.has_value(), F));
        c_off = perturb_instruction(c_off, sched, cfg.t_pert, noise, active_slots_of(false, F));
    }

    auto ctx_cond = model.text.encode(model.store, ins.text_tokens);
    Tensor<float> ctx_uncond;
    if (cfg.guidance_w != 1.0) ctx_uncond = model.text.encode(model.store, {0});

    auto sub = strided_subschedule(sched, cfg.num_steps);
    Tensor<float> z = randn<float>(rng, {F, ins.f_first.dim(0), ins.f_first.dim(1),
                                         ins.f_first.dim(2)});
    GeneratedClip out;
    for (int s = cfg.num_steps; s >= 1; --s) {
        int k = cfg.num_steps - s + 1;
        bool active = ins.f_last.has_value() &&
                      (cfg.invert_tau_debug ? k > cfg.num_steps - cfg.tau : k <= cfg.tau);
        const auto& c = active ? c_on : c_off;
        int t_orig = sub.orig_t[size_t(s - 1)];
        auto z_concat = detail::concat_lc(z, c);
        auto eps = model.unet.denoise(model.store, z_concat, t_orig, ctx_cond,
                                      DenoiseMode::video);
        if (cfg.guidance_w != 1.0) {
            auto eps_u = model.unet.denoise(model.store, z_concat, t_orig, ctx_uncond,
                                            DenoiseMode::video);
            eps = cfg_combine(eps, eps_u, cfg.guidance_w);
        }
        Tensor<float> step_noise =
            s > 1 ? randn<float>(rng, z.shape) : Tensor<float>::zeros(z.shape);
        z = ddpm_ancestral_step(z, eps, s, sub.sched, step_noise);
        out.log.push_back({k, active, t_orig});
    }
    out.latent = z;
    out.frames = detail::decode_latents(z);
    return out;
}

struct ChainScriptEntry {
    std::vector<int> caption;
    std::optional<Tensor<float>> last_frame;  // [3,H,W] draft, optional
    SamplerConfig cfg;
};

// Clip k+1's first-frame instruction is clip k's decoded final frame.
inline std::vector<GeneratedClip> chain_clips(const JointModel<float>& model,
                                              const Tensor<float>& first_frame,
                                              const std::vector<ChainScriptEntry>& script,
                                              const NoiseSchedule& sched) {
    if (script.empty()) throw std::invalid_argument("chain_clips: empty script");
    std::vector<GeneratedClip> out;
    Tensor<float> f_first = encode_frame(first_frame);
    for (const auto& entry : script) {
        InstructionSet<float> ins;
        ins.text_tokens = entry.caption;
        ins.f_first = f_first;
        if (entry.last_frame) ins.f_last = encode_frame(*entry.last_frame);
        out.push_back(generate_clip(model, ins, entry.cfg, sched));
        const auto& clip = out.back().frames;
        int F = clip.dim(0);
        Tensor<float> final_frame({clip.dim(1), clip.dim(2), clip.dim(3)});
        size_t per = final_frame.size();
        std::copy(clip.v.begin() + size_t(F - 1) * per, clip.v.end(), final_frame.v.begin());
        f_first = encode_frame(final_frame);
    }
    return out;
}

// One long video; each boundary frame appears once (1 + n*(F-1) frames)
inline Tensor<float> concat_chain(const std::vector<GeneratedClip>& clips) {
    if (clips.empty()) throw std::invalid_argument("concat_chain: no clips");
    int F = clips[0].frames.dim(0);
    int C = clips[0].frames.dim(1), H = clips[0].frames.dim(2), W = clips[0].frames.dim(3);
    int total = 1 + int(clips.size()) * (F - 1);
    Tensor<float> out({total, C, H, W});
    size_t per = size_t(C) * H * W;
    size_t pos = 0;
    for (size_t i = 0; i < clips.size(); ++i) {
        const auto& fr = clips[i].frames;
        int start = i == 0 ? 0 : 1;  // boundary frame already emitted
        std::copy(fr.v.begin() + start * per, fr.v.end(), out.v.begin() + pos);
        pos += size_t(F - start) * per;
    }
    return out;
}

// Zero-shot editing: regenerate from edited endpoint frames; the source clip
// itself never reaches the model.
inline GeneratedClip edit_video(const JointModel<float>& model,
                                const std::vector<int>& source_caption,
                                const Tensor<float>& edited_first,
                                const Tensor<float>& edited_last, const SamplerConfig& cfg,
                                const NoiseSchedule& sched) {
    InstructionSet<float> ins;
    ins.text_tokens = source_caption;
    ins.f_first = encode_frame(edited_first);
    ins.f_last = encode_frame(edited_last);
    return generate_clip(model, ins, cfg, sched);
}

}  // namespace fd

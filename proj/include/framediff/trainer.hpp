#pragma once

// Training loop: instruction sampling, perturbation, channel concatenation,
// epsilon-MSE, joint image/video modality mixing, checkpointing with
// bit-identical resume.

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "framediff/checkpoint.hpp"
#include "framediff/conditioning.hpp"
#include "framediff/denoiser.hpp"
#include "framediff/schedule.hpp"
#include "framediff/synthdata.hpp"

namespace fd {

enum class Modality { video, image };

inline Modality modality_for_iteration(long i, int period) {
    if (period < 1) throw std::invalid_argument("image_mix_period must be >= 1");
    if (i < 1) throw std::invalid_argument("iteration index starts at 1");
    return i % period == 0 ? Modality::image : Modality::video;
}

struct TrainConfig {
    DenoiserConfig model;
    TextEncoderConfig text;
    int timesteps = 1000;
    double beta_start = 1e-4, beta_end = 0.02;

    int batch_size = 8;
    double lr = 1e-4;
    long lr_warmup = 0;          // linear warmup iterations (0: none)
    double lr_final_frac = 1.0;  // cosine-decay floor as a fraction of lr (1: constant)
    long iterations = 1000;
    double eta = 0.25;        // last-frame instruction drop probability
    double text_drop = 0.1;   // null-text probability (enables CFG)
    int t_pert = 100;         // instruction perturbation step
    bool perturb = true;
    int image_mix_period = 8;
    uint64_t seed = 1;
    long checkpoint_every = 0;  // 0: final checkpoint only

    // ablation arms
    bool ablate_no_last = false;  // last-frame slot always zero
    bool ablate_no_text = false;  // null text always

    std::string out_dir;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

inline nlohmann::json train_config_to_json(const TrainConfig& cfg) {
    nlohmann::json j;
    j["model"] = {{"latent_channels", cfg.model.latent_channels},
                  {"frames", cfg.model.frames},
                  {"base_width", cfg.model.base_width},
                  {"depth", cfg.model.depth},
                  {"heads", cfg.model.heads},
                  {"text_dim", cfg.model.text_dim},
                  {"temporal_pos_embed", cfg.model.temporal_pos_embed}};
    j["text"] = {{"vocab_size", cfg.text.vocab_size},
                 {"dim", cfg.text.dim},
                 {"heads", cfg.text.heads},
                 {"layers", cfg.text.layers},
                 {"max_len", cfg.text.max_len}};
    j["timesteps"] = cfg.timesteps;
    j["beta_start"] = cfg.beta_start;
    j["beta_end"] = cfg.beta_end;
    j["batch_size"] = cfg.batch_size;
    j["lr"] = cfg.lr;
    j["lr_warmup"] = cfg.lr_warmup;
    j["lr_final_frac"] = cfg.lr_final_frac;
    j["iterations"] = cfg.iterations;
    j["eta"] = cfg.eta;
    j["text_drop"] = cfg.text_drop;
    j["t_pert"] = cfg.t_pert;
    j["perturb"] = cfg.perturb;
    j["image_mix_period"] = cfg.image_mix_period;
    j["seed"] = cfg.seed;
    j["checkpoint_every"] = cfg.checkpoint_every;
    j["ablate_no_last"] = cfg.ablate_no_last;
    j["ablate_no_text"] = cfg.ablate_no_text;
    return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    const auto& m = j.at("model");
    cfg.model.latent_channels = m.at("latent_channels").get<int>();
    cfg.model.frames = m.at("frames").get<int>();
    cfg.model.base_width = m.at("base_width").get<int>();
    cfg.model.depth = m.at("depth").get<int>();
    cfg.model.heads = m.at("heads").get<int>();
    cfg.model.text_dim = m.at("text_dim").get<int>();
    cfg.model.temporal_pos_embed = m.at("temporal_pos_embed").get<bool>();
    const auto& t = j.at("text");
    cfg.text.vocab_size = t.at("vocab_size").get<int>();
    cfg.text.dim = t.at("dim").get<int>();
    cfg.text.heads = t.at("heads").get<int>();
    cfg.text.layers = t.at("layers").get<int>();
    cfg.text.max_len = t.at("max_len").get<int>();
    cfg.timesteps = j.at("timesteps").get<int>();
    cfg.beta_start = j.at("beta_start").get<double>();
    cfg.beta_end = j.at("beta_end").get<double>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.lr = j.at("lr").get<double>();
    cfg.lr_warmup = j.value("lr_warmup", 0L);
    cfg.lr_final_frac = j.value("lr_final_frac", 1.0);
    cfg.iterations = j.at("iterations").get<long>();
    cfg.eta = j.at("eta").get<double>();
    cfg.text_drop = j.at("text_drop").get<double>();
    cfg.t_pert = j.at("t_pert").get<int>();
    cfg.perturb = j.at("perturb").get<bool>();
    cfg.image_mix_period = j.at("image_mix_period").get<int>();
    cfg.seed = j.at("seed").get<uint64_t>();
    cfg.checkpoint_every = j.at("checkpoint_every").get<long>();
    cfg.ablate_no_last = j.at("ablate_no_last").get<bool>();
    cfg.ablate_no_text = j.at("ablate_no_text").get<bool>();
    return cfg;
}

// linear warmup then cosine decay toward lr * lr_final_frac; i is 1-based
inline double scheduled_lr(const TrainConfig& cfg, long i) {
    if (cfg.lr_warmup > 0 && i <= cfg.lr_warmup)
        return cfg.lr * double(i) / double(cfg.lr_warmup);
    if (cfg.lr_final_frac >= 1.0) return cfg.lr;
    double span = double(std::max<long>(1, cfg.iterations - cfg.lr_warmup));
    double p = std::min(1.0, double(i - cfg.lr_warmup) / span);
    double cosw = 0.5 * (1.0 + std::cos(3.14159265358979323846 * p));
    return cfg.lr * (cfg.lr_final_frac + (1.0 - cfg.lr_final_frac) * cosw);
}

struct TrainState {
    TrainConfig cfg;
    JointModel<float> model;
    AdamW<float> opt;
    NoiseSchedule sched;
    Rng rng;
    long iteration = 0;  // completed iterations

    void init_fresh(const TrainConfig& c) {
        cfg = c;
        if (c.eta < 0.0 || c.eta > 1.0) throw std::invalid_argument("eta must be in [0,1]");
        if (c.image_mix_period < 1)
            throw std::invalid_argument("image_mix_period must be >= 1");
        model.init(c.model, c.text, c.seed);
        opt = AdamW<float>{};
        opt.lr = c.lr;
        sched = make_schedule(c.timesteps, c.beta_start, c.beta_end);
        rng = make_rng(c.seed, 0x7124);
        iteration = 0;
    }

    void init_from_checkpoint(const Checkpoint& ck) {
        cfg = train_config_from_json(ck.config);
        model.init(cfg.model, cfg.text, cfg.seed);
        if (model.store.names != ck.params.names)
            throw std::runtime_error("checkpoint parameters do not match the model config");
        model.store = ck.params;
        opt = ck.opt;
        sched = make_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end);
        rng_set_state(rng, ck.rng_state);
        iteration = ck.iteration;
    }

    Checkpoint to_checkpoint() const {
        Checkpoint ck;
        ck.config = train_config_to_json(cfg);
        ck.iteration = iteration;
        ck.rng_state = rng_state_string(rng);
        ck.params = model.store;
        ck.opt = opt;
        return ck;
    }
};

struct StepMetrics {
    long iteration = 0;
    double loss = 0.0;
    Modality modality = Modality::video;
    std::vector<int> ts;      // per-sample diffusion steps
    int last_dropped = 0;     // samples with the last-frame slot zeroed
    int text_dropped = 0;     // samples trained on null text
};

namespace detail {

// [F,3,H,W] pixel clip -> [F,C,H/2,W/2] latent stack
inline Tensor<float> encode_clip(const Tensor<float>& clip) {
    int F = clip.dim(0), C = clip.dim(1), H = clip.dim(2), W = clip.dim(3);
    Tensor<float> out({F, C * kPatch * kPatch, H / kPatch, W / kPatch});
    size_t per_in = clip.size() / size_t(F), per_out = out.size() / size_t(F);
    for (int f = 0; f < F; ++f) {
        Tensor<float> frame({C, H, W});
        std::copy(clip.v.begin() + f * per_in, clip.v.begin() + (f + 1) * per_in,
                  frame.v.begin());
        auto lat = encode_frame(frame);
        std::copy(lat.v.begin(), lat.v.end(), out.v.begin() + f * per_out);
    }
    return out;
}

// [F,C,...] ++ [F,C,...] -> [F,2C,...] per frame
inline Tensor<float> concat_latent_condition(const Tensor<float>& z, const Tensor<float>& c) {
    check_same_shape(z, c, "concat_latent_condition");
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

// One optimizer update over a batch drawn from the corpus. Samples are
// processed sequentially on individual tapes; gradients are averaged.
inline StepMetrics train_step(TrainState& st, const std::vector<ClipRecord>& corpus) {
    if (corpus.empty()) throw std::invalid_argument("train_step: empty corpus");
    const TrainConfig& cfg = st.cfg;
    long i = st.iteration + 1;
    StepMetrics m;
    m.iteration = i;
    m.modality = modality_for_iteration(i, cfg.image_mix_period);
    std::string batch_rng_state = rng_state_string(st.rng);

    std::uniform_int_distribution<size_t> pick(0, corpus.size() - 1);
    std::uniform_int_distribution<int> pick_t(1, cfg.timesteps);
    double eta_eff = cfg.ablate_no_last ? 1.0 : cfg.eta;
    double text_drop_eff = cfg.ablate_no_text ? 1.0 : cfg.text_drop;

    std::unordered_map<std::string, Tensor<float>> grads;
    double loss_sum = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
        const ClipRecord& rec = corpus[pick(st.rng)];
        int t = pick_t(st.rng);
        m.ts.push_back(t);

        Tensor<float> z0, c_image;
        std::vector<int> tokens;
        if (m.modality == Modality::video) {
            z0 = detail::encode_clip(rec.frames);
            auto ins = sample_training_instructions(rec.frames, rec.caption, st.rng, eta_eff,
                                                    text_drop_eff);
            tokens = ins.text_tokens;
            if (ins.last_dropped || cfg.ablate_no_last) ++m.last_dropped;
            if (ins.text_dropped || cfg.ablate_no_text) ++m.text_dropped;
            c_image = compose_image_condition<float>(ins.f_first, ins.f_last, z0.dim(0));
            if (cfg.perturb) {
                auto noise = randn<float>(st.rng, c_image.shape);
                c_image = perturb_instruction(c_image, st.sched, cfg.t_pert, noise,
                                              active_slots_of(ins.f_last.has_value(), z0.dim(0)));
            }
        } else {
            // single-frame clip; condition is the encoded frame itself at slot 0
            int F = rec.frames.dim(0);
            std::uniform_int_distribution<int> pick_f(0, F - 1);
            int f = pick_f(st.rng);
            Tensor<float> frame({rec.frames.dim(1), rec.frames.dim(2), rec.frames.dim(3)});
            size_t per = frame.size();
            std::copy(rec.frames.v.begin() + f * per, rec.frames.v.begin() + (f + 1) * per,
                      frame.v.begin());
            auto lat = encode_frame(frame);
            z0 = Tensor<float>({1, lat.dim(0), lat.dim(1), lat.dim(2)});
            std::copy(lat.v.begin(), lat.v.end(), z0.v.begin());
            c_image = z0;
            if (cfg.perturb) {
                auto noise = randn<float>(st.rng, c_image.shape);
                c_image = perturb_instruction(c_image, st.sched, cfg.t_pert, noise, {0});
            }
            tokens = cfg.ablate_no_text ? std::vector<int>{0} : rec.caption;
            if (cfg.ablate_no_text) ++m.text_dropped;
        }

        auto eps = randn<float>(st.rng, z0.shape);
        auto z_t = forward_diffuse(z0, t, eps, st.sched);
        auto z_concat = detail::concat_latent_condition(z_t, c_image);

        Tape<float> tp;
        ParamBinding<float> bind;
        int ctx = st.model.text.forward(tp, bind, st.model.store, tokens);
        int out = st.model.unet.forward(tp, bind, st.model.store, z_concat, t, ctx,
                                        m.modality == Modality::video ? DenoiseMode::video
                                                                      : DenoiseMode::image);
        int loss = op_mse_to(tp, out, eps);
        tp.backward(loss);
        bind.accumulate_grads(tp, grads);
        loss_sum += double(tp.val(loss).v[0]);
    }
    m.loss = loss_sum / cfg.batch_size;
    if (!std::isfinite(m.loss))
        throw std::runtime_error("non-finite loss at iteration " + std::to_string(i) +
                                 "; batch rng state: " + batch_rng_state);
    st.opt.lr = scheduled_lr(cfg, i);
    st.opt.update(st.model.store, grads, 1.0 / cfg.batch_size);
    st.iteration = i;
    return m;
}

struct TrainResult {
    std::string checkpoint_path;
    std::vector<double> loss_trace;
};

// Full run (optionally resumed). Writes metrics.jsonl and checkpoints under
// cfg.out_dir; checkpoint writes happen before the state advances past them.
inline TrainResult run_training(const TrainConfig& cfg, const std::vector<ClipRecord>& corpus,
                                const std::string& resume_path = "",
                                const std::function<void(const StepMetrics&)>& on_step = {}) {
    namespace fs = std::filesystem;
    if (cfg.out_dir.empty()) throw std::invalid_argument("run_training: out_dir required");
    fs::create_directories(cfg.out_dir);

    TrainState st;
    if (resume_path.empty()) {
        st.init_fresh(cfg);
    } else {
        st.init_from_checkpoint(load_checkpoint(resume_path));
        st.cfg.iterations = cfg.iterations;  // allow extending a finished run
        st.cfg.out_dir = cfg.out_dir;
        st.cfg.checkpoint_every = cfg.checkpoint_every;  // cadence only, no math
    }

    std::string final_path = (fs::path(cfg.out_dir) / "checkpoint_final.bin").string();
    if (st.cfg.iterations == 0) {
        save_checkpoint(st.to_checkpoint(), final_path);
        return {final_path, {}};
    }

    std::ofstream metrics((fs::path(cfg.out_dir) / "metrics.jsonl").string(), std::ios::app);
    TrainResult res;
    while (st.iteration < st.cfg.iterations) {
        auto m = train_step(st, corpus);
        res.loss_trace.push_back(m.loss);
        nlohmann::json j{{"iteration", m.iteration},
                         {"loss", m.loss},
                         {"modality", m.modality == Modality::video ? "video" : "image"},
                         {"lr", st.opt.lr},
                         {"last_dropped", m.last_dropped},
                         {"text_dropped", m.text_dropped}};
        metrics << j.dump() << "\n";
        metrics.flush();
        if (on_step) on_step(m);
        if (st.cfg.checkpoint_every > 0 && m.iteration % st.cfg.checkpoint_every == 0)
            save_checkpoint(st.to_checkpoint(),
                            (fs::path(cfg.out_dir) /
                             ("checkpoint_" + std::to_string(m.iteration) + ".bin"))
                                .string());
    }
    save_checkpoint(st.to_checkpoint(), final_path);
    res.checkpoint_path = final_path;
    return res;
}

}  // namespace fd

#pragma once

// Evaluation suites over a trained checkpoint: endpoint adherence, tau sweep
// with a paired monotonicity statistic, ablation-arm Frechet scores, and
// long-chain drift. Shared by the command-line `eval` command and the
// acceptance harness.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "framediff/checkpoint.hpp"
#include "framediff/evalkit.hpp"
#include "framediff/sampler.hpp"
#include "framediff/trainer.hpp"

namespace fd {

struct LoadedModel {
    TrainConfig cfg;
    JointModel<float> model;
    NoiseSchedule sched;
};

inline LoadedModel model_from_checkpoint(const Checkpoint& ck) {
    LoadedModel lm;
    lm.cfg = train_config_from_json(ck.config);
    lm.model.init(lm.cfg.model, lm.cfg.text, lm.cfg.seed);
    if (lm.model.store.names != ck.params.names)
        throw std::runtime_error("checkpoint parameters do not match the model config");
    lm.model.store = ck.params;
    lm.sched = make_schedule(lm.cfg.timesteps, lm.cfg.beta_start, lm.cfg.beta_end);
    return lm;
}

inline Tensor<float> frame_of(const Tensor<float>& clip, int f) {
    Tensor<float> out({clip.dim(1), clip.dim(2), clip.dim(3)});
    size_t per = out.size();
    std::copy(clip.v.begin() + size_t(f) * per, clip.v.begin() + size_t(f + 1) * per,
              out.v.begin());
    return out;
}

// held-out record -> full instruction set (both endpoints + caption)
inline InstructionSet<float> instructions_from_record(const ClipRecord& rec) {
    InstructionSet<float> ins;
    ins.text_tokens = rec.caption;
    ins.f_first = encode_frame(frame_of(rec.frames, 0));
    ins.f_last = encode_frame(frame_of(rec.frames, rec.frames.dim(0) - 1));
    return ins;
}

inline double mse_of(const Tensor<float>& a, const Tensor<float>& b) {
    check_same_shape(a, b, "mse_of");
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = double(a.v[i]) - double(b.v[i]);
        s += d * d;
    }
    return s / double(a.size());
}

// ---------------------------------------------------------------- adherence

struct AdherenceRow {
    int record = 0;
    double first_psnr = 0.0;
    double last_mse = 0.0;
};

struct AdherenceReport {
    std::vector<AdherenceRow> rows;
    double mean_first_psnr = 0.0;
    double mean_last_mse = 0.0;
    MotionAccuracy motion;
};

// n generations against held-out records; tau = S (last frame held throughout)
// and instruction perturbation off, so adherence is measured against the clean
// endpoints the user actually supplied.
inline AdherenceReport eval_adherence(const LoadedModel& lm, const std::vector<ClipRecord>& recs,
                                      int n, const SamplerConfig& base, const Vocab& vocab) {
    if (recs.empty() || n < 1) throw std::invalid_argument("eval_adherence: need records");
    AdherenceReport rep;
    std::vector<Tensor<float>> clips;
    std::vector<std::vector<int>> caps;
    double psnr_sum = 0, mse_sum = 0;
    for (int i = 0; i < n; ++i) {
        const ClipRecord& rec = recs[size_t(i) % recs.size()];
        auto ins = instructions_from_record(rec);
        SamplerConfig cfg = base;
        cfg.tau = cfg.num_steps;
        cfg.perturb_instructions = false;
        cfg.seed = base.seed + uint64_t(i);
        auto gen = generate_clip(lm.model, ins, cfg, lm.sched);
        int F = gen.frames.dim(0);
        AdherenceRow row;
        row.record = int(size_t(i) % recs.size());
        row.first_psnr = psnr(frame_of(gen.frames, 0), frame_of(rec.frames, 0));
        row.last_mse = mse_of(frame_of(gen.frames, F - 1),
                              frame_of(rec.frames, rec.frames.dim(0) - 1));
        psnr_sum += row.first_psnr;
        mse_sum += row.last_mse;
        rep.rows.push_back(row);
        clips.push_back(gen.frames);
        caps.push_back(rec.caption);
    }
    rep.mean_first_psnr = psnr_sum / n;
    rep.mean_last_mse = mse_sum / n;
    rep.motion = motion_accuracy(clips, caps, vocab);
    return rep;
}

// ---------------------------------------------------------------- tau sweep

// average ranks with ties averaged; smallest value gets rank 1
inline std::vector<double> average_ranks(const std::vector<double>& v) {
    size_t n = v.size();
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        double rank = (double(i + 1) + double(j + 1)) / 2.0;
        for (size_t k = i; k <= j; ++k) r[idx[k]] = rank;
        i = j + 1;
    }
    return r;
}

// Paired monotonicity statistic: rank the per-sample values across the K
// conditions, average ranks per condition, then Pearson-correlate the mean
// ranks with the condition order. Returns a value in [-1, 1].
inline double paired_rank_correlation(const std::vector<std::vector<double>>& per_condition) {
    size_t K = per_condition.size();
    if (K < 2) throw std::invalid_argument("need at least two conditions");
    size_t n = per_condition[0].size();
    for (const auto& c : per_condition)
        if (c.size() != n || n == 0)
            throw std::invalid_argument("conditions must share a nonempty sample count");
    std::vector<double> mean_rank(K, 0.0);
    std::vector<double> row(K);
    for (size_t s = 0; s < n; ++s) {
        for (size_t k = 0; k < K; ++k) row[k] = per_condition[k][s];
        auto r = average_ranks(row);
        for (size_t k = 0; k < K; ++k) mean_rank[k] += r[k] / double(n);
    }
    double mx = (double(K) + 1.0) / 2.0;  // mean of 1..K
    double my = 0;
    for (double r : mean_rank) my += r / double(K);
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t k = 0; k < K; ++k) {
        double dx = double(k + 1) - mx, dy = mean_rank[k] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (syy == 0.0) return 0.0;  // flat mean ranks carry no ordering signal
    return sxy / std::sqrt(sxx * syy);
}

struct TauSweepRow {
    int tau = 0;
    double mean_last_mse = 0.0;
    double mean_first_psnr = 0.0;
    double frechet = 0.0;
};

struct TauSweepReport {
    std::vector<TauSweepRow> rows;
    double monotonicity = 0.0;                    // rank correlation of tau vs last-frame MSE
    std::vector<std::vector<double>> last_mse;    // [tau][sample], for reporting
};

// Shared seeds across tau values give paired per-sample comparisons.
inline TauSweepReport tau_sweep(const LoadedModel& lm, const std::vector<ClipRecord>& recs,
                                int n, const std::vector<int>& taus, const SamplerConfig& base,
                                const GaussianStats& reference) {
    if (taus.empty()) throw std::invalid_argument("tau_sweep: need tau values");
    if (recs.empty() || n < 1) throw std::invalid_argument("tau_sweep: need records");
    TauSweepReport rep;
    for (int tau : taus) {
        SamplerConfig cfg = base;
        cfg.tau = tau;
        cfg.perturb_instructions = false;
        double mse_sum = 0, psnr_sum = 0;
        std::vector<double> mses;
        std::vector<std::vector<double>> feats;
        for (int i = 0; i < n; ++i) {
            const ClipRecord& rec = recs[size_t(i) % recs.size()];
            auto ins = instructions_from_record(rec);
            cfg.seed = base.seed + uint64_t(i);
            auto gen = generate_clip(lm.model, ins, cfg, lm.sched);
            int F = gen.frames.dim(0);
            double m = mse_of(frame_of(gen.frames, F - 1),
                              frame_of(rec.frames, rec.frames.dim(0) - 1));
            mses.push_back(m);
            mse_sum += m;
            psnr_sum += psnr(frame_of(gen.frames, 0), frame_of(rec.frames, 0));
            feats.push_back(clip_features(gen.frames));
        }
        TauSweepRow row;
        row.tau = tau;
        row.mean_last_mse = mse_sum / n;
        row.mean_first_psnr = psnr_sum / n;
        row.frechet = frechet_distance(gaussian_stats(feats), reference);
        rep.rows.push_back(row);
        rep.last_mse.push_back(std::move(mses));
    }
    rep.monotonicity = rep.rows.size() > 1 ? paired_rank_correlation(rep.last_mse) : 0.0;
    return rep;
}

inline nlohmann::json tau_sweep_to_json(const TauSweepReport& rep) {
    nlohmann::json j;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rep.rows)
        j["rows"].push_back({{"tau", r.tau},
                             {"mean_last_mse", r.mean_last_mse},
                             {"mean_first_psnr", r.mean_first_psnr},
                             {"frechet", r.frechet}});
    j["monotonicity"] = rep.monotonicity;
    j["last_mse"] = rep.last_mse;
    return j;
}

inline void tau_sweep_write_csv(const TauSweepReport& rep, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open csv for writing: " + path);
    f << "tau,mean_last_mse,mean_first_psnr,frechet\n";
    for (const auto& r : rep.rows)
        f << r.tau << "," << r.mean_last_mse << "," << r.mean_first_psnr << "," << r.frechet
          << "\n";
}

// ---------------------------------------------------------------- frechet arms

inline GaussianStats reference_stats(const std::vector<ClipRecord>& recs) {
    std::vector<std::vector<double>> feats;
    feats.reserve(recs.size());
    for (const auto& r : recs) feats.push_back(clip_features(r.frames));
    return gaussian_stats(feats);
}

// Frechet score of n generations against reference statistics. Each arm is
// sampled with the instructions it was trained to use: first frame always,
// caption unless use_text is off, last frame (held for tau iterations) unless
// use_last is off.
inline double generation_frechet(const LoadedModel& lm, const std::vector<ClipRecord>& recs,
                                 int n, const SamplerConfig& base, bool use_text, bool use_last,
                                 const GaussianStats& reference,
                                 std::vector<std::vector<double>>* feats_out = nullptr) {
    if (recs.empty() || n < 1) throw std::invalid_argument("generation_frechet: need records");
    std::vector<std::vector<double>> feats;
    for (int i = 0; i < n; ++i) {
        const ClipRecord& rec = recs[size_t(i) % recs.size()];
        auto ins = instructions_from_record(rec);
        if (!use_text) ins.text_tokens = {0};
        SamplerConfig cfg = base;
        if (!use_last) {
            ins.f_last.reset();
            cfg.tau = 0;
        }
        cfg.seed = base.seed + uint64_t(i);
        auto gen = generate_clip(lm.model, ins, cfg, lm.sched);
        feats.push_back(clip_features(gen.frames));
    }
    double d = frechet_distance(gaussian_stats(feats), reference);
    if (feats_out) *feats_out = std::move(feats);
    return d;
}

// ---------------------------------------------------------------- chain drift

struct ChainDriftReport {
    int clips = 0;
    int frames = 0;               // concatenated length, 1 + clips*(F-1)
    bool boundaries_exact = true; // codec roundtrip + shared-frame layout
    double head_frechet = 0.0;    // first `window` clips vs reference
    double tail_frechet = 0.0;    // last `window` clips vs reference
    double growth = 0.0;          // tail / head
};

// Long autoregressive chain seeded from one record's first frame; captions
// cycle through the provided records; no last-frame drafts (tau = 0).
inline ChainDriftReport eval_chain_drift(const LoadedModel& lm, const ClipRecord& seed_rec,
                                         const std::vector<ClipRecord>& caption_source,
                                         int n_clips, const SamplerConfig& base,
                                         const GaussianStats& reference, int window = 16) {
    if (n_clips < 2 * window)
        throw std::invalid_argument("eval_chain_drift: chain shorter than two windows");
    std::vector<ChainScriptEntry> script;
    for (int i = 0; i < n_clips; ++i) {
        ChainScriptEntry e;
        e.caption = caption_source[size_t(i) % caption_source.size()].caption;
        e.cfg = base;
        e.cfg.tau = 0;
        e.cfg.seed = base.seed + uint64_t(i);
        script.push_back(std::move(e));
    }
    auto first = frame_of(seed_rec.frames, 0);
    auto clips = chain_clips(lm.model, first, script, lm.sched);
    auto video = concat_chain(clips);

    ChainDriftReport rep;
    rep.clips = n_clips;
    rep.frames = video.dim(0);
    int F = clips[0].frames.dim(0);
    size_t per = size_t(video.dim(1)) * video.dim(2) * video.dim(3);
    for (int k = 0; k < n_clips; ++k) {
        // every clip's decoded final frame must survive the codec bit-exactly
        // (it becomes the next clip's first-frame instruction)
        auto last = frame_of(clips[size_t(k)].frames, F - 1);
        auto round = depth_to_space(space_to_depth(last));
        if (!std::equal(last.v.begin(), last.v.end(), round.v.begin()))
            rep.boundaries_exact = false;
        // shared-frame layout: the concatenated video carries this frame at
        // position (k+1)*(F-1) exactly once
        size_t pos = size_t(k + 1) * (F - 1) * per;
        if (!std::equal(last.v.begin(), last.v.end(), video.v.begin() + pos))
            rep.boundaries_exact = false;
    }
    auto window_stats = [&](int begin) {
        std::vector<std::vector<double>> feats;
        for (int k = begin; k < begin + window; ++k)
            feats.push_back(clip_features(clips[size_t(k)].frames));
        return gaussian_stats(feats);
    };
    rep.head_frechet = frechet_distance(window_stats(0), reference);
    rep.tail_frechet = frechet_distance(window_stats(n_clips - window), reference);
    rep.growth = rep.head_frechet > 0 ? rep.tail_frechet / rep.head_frechet
                                      : (rep.tail_frechet > 0 ? HUGE_VAL : 1.0);
    return rep;
}

}  // namespace fd

// Acceptance harness: one pass/fail line per criterion, exit 0 iff all pass.
//
// Criteria 1-4 and 8-9 run in minutes. Criteria 5-7 need trained models and
// by default run at desk scale (~2M-parameter model, 20k iterations/arm:
// overnight on a single CPU core). Set FRAMEDIFF_ACCEPT_SCALE=reduced for a
// fast development smoke pass with identical thresholds but a smaller budget.
// Trained artifacts are cached under --work-dir and reused across invocations.

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "framediff/evalsuites.hpp"
#include "framediff/image_io.hpp"
#include "framediff/sampler.hpp"
#include "framediff/synthdata.hpp"
#include "framediff/trainer.hpp"

namespace fs = std::filesystem;
using namespace fd;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what, const std::string& detail) {
    std::cout << "criterion " << criterion << ": " << (pass ? "PASS" : "FAIL") << " - " << what;
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << std::endl;
    if (!pass) ++g_failures;
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(4);
    ss << v;
    return ss.str();
}

// ------------------------------------------------------------- criterion 1

bool exact_math_suite(std::string& detail) {
    bool ok = true;
    auto note = [&](bool cond, const char* what) {
        if (!cond) {
            ok = false;
            detail += std::string(detail.empty() ? "" : "; ") + "failed: " + what;
        }
    };
    auto sched = make_schedule(1000, 1e-4, 0.02);
    // schedule consistency: telescoping product, endpoints, monotone alpha_bar
    double prod = 1.0;
    bool tele = true, mono = true;
    for (int t = 1; t <= 1000; ++t) {
        prod *= 1.0 - sched.beta(t);
        if (std::abs(prod - sched.alpha_bar(t)) > 1e-12) tele = false;
        if (t > 1 && sched.alpha_bar(t) >= sched.alpha_bar(t - 1)) mono = false;
    }
    note(tele, "alpha_bar telescoping");
    note(mono, "alpha_bar monotone");
    note(std::abs(sched.beta(1) - 1e-4) < 1e-15 && std::abs(sched.beta(1000) - 0.02) < 1e-15,
         "beta endpoints");

    auto rng = make_rng(11);
    auto x0 = randn<float>(rng, {2, 3, 4, 4});
    auto eps = randn<float>(rng, x0.shape);
    // forward-diffuse linearity against the closed form
    for (int t : {1, 250, 1000}) {
        auto xt = forward_diffuse(x0, t, eps, sched);
        double a = std::sqrt(sched.alpha_bar(t)), b = std::sqrt(1 - sched.alpha_bar(t));
        double maxd = 0;
        for (size_t i = 0; i < x0.size(); ++i)
            maxd = std::max(maxd, std::abs(double(xt.v[i]) - (a * x0.v[i] + b * eps.v[i])));
        note(maxd < 1e-6, "forward-diffuse linearity");
    }
    // t=1 exact recovery with the true noise and the deterministic final step
    {
        auto x1 = forward_diffuse(x0, 1, eps, sched);
        auto back = ddpm_ancestral_step(x1, eps, 1, sched, Tensor<float>::zeros(x0.shape));
        double maxd = 0;
        for (size_t i = 0; i < x0.size(); ++i)
            maxd = std::max(maxd, std::abs(double(back.v[i]) - x0.v[i]));
        note(maxd < 1e-5, "t=1 recovery");
    }
    // endpoint-slot layout: interior PADs exact zeros
    {
        auto f1 = randn<float>(rng, {4, 3, 3});
        auto f2 = randn<float>(rng, {4, 3, 3});
        auto c = compose_image_condition<float>(f1, f2, 5);
        size_t per = f1.size();
        bool layout = std::equal(f1.v.begin(), f1.v.end(), c.v.begin()) &&
                      std::equal(f2.v.begin(), f2.v.end(), c.v.begin() + 4 * per);
        for (size_t i = per; i < 4 * per; ++i)
            if (c.v[i] != 0.0f) layout = false;
        auto c_nolast = compose_image_condition<float>(f1, std::nullopt, 5);
        for (size_t i = per; i < 5 * per; ++i)
            if (c_nolast.v[i] != 0.0f) layout = false;
        note(layout, "condition slot layout");
    }
    // CFG degeneracies: w=0 -> unconditional, w=1 -> conditional, exactly
    {
        auto ec = randn<float>(rng, {2, 3});
        auto eu = randn<float>(rng, {2, 3});
        auto w0 = cfg_combine(ec, eu, 0.0);
        auto w1 = cfg_combine(ec, eu, 1.0);
        bool deg = std::equal(w0.v.begin(), w0.v.end(), eu.v.begin());
        for (size_t i = 0; i < ec.size(); ++i)
            if (std::abs(double(w1.v[i]) - double(ec.v[i])) > 1e-6) deg = false;
        note(deg, "cfg degeneracies");
    }
    // codec roundtrip bit-exact
    {
        auto frame = randn<float>(rng, {3, 32, 32});
        auto round = depth_to_space(space_to_depth(frame));
        note(std::equal(frame.v.begin(), frame.v.end(), round.v.begin()), "codec roundtrip");
    }
    // conditioning-log pattern [active]^tau [inactive]^(S-tau)
    {
        DenoiserConfig dc;
        dc.latent_channels = 4;
        dc.frames = 3;
        dc.base_width = 8;
        dc.heads = 2;
        dc.text_dim = 8;
        TextEncoderConfig tc;
        tc.vocab_size = 22;
        tc.dim = 8;
        JointModel<float> m;
        m.init(dc, tc, 5);
        InstructionSet<float> ins;
        ins.text_tokens = {1, 5};
        ins.f_first = randn<float>(rng, {4, 4, 4});
        ins.f_last = randn<float>(rng, {4, 4, 4});
        auto small_sched = make_schedule(40, 1e-4, 0.02);
        for (int tau : {0, 3, 8}) {
            SamplerConfig sc;
            sc.num_steps = 8;
            sc.tau = tau;
            sc.guidance_w = 1.0;
            sc.t_pert = 5;
            auto gen = generate_clip(m, ins, sc, small_sched);
            bool pat = int(gen.log.size()) == 8;
            int prev_t = small_sched.T + 1;
            for (int k = 1; k <= 8; ++k) {
                const auto& e = gen.log[size_t(k - 1)];
                if (e.k != k || e.last_slot_active != (k <= tau)) pat = false;
                if (e.t >= prev_t) pat = false;
                prev_t = e.t;
            }
            note(pat, "conditioning-log pattern");
        }
    }
    return ok;
}

// ------------------------------------------------------------- criterion 2

bool statistical_suite(std::string& detail) {
    bool ok = true;
    auto note = [&](bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            detail += std::string(detail.empty() ? "" : "; ") + "failed: " + what;
        }
    };
    auto sched = make_schedule(1000, 1e-4, 0.02);
    auto rng = make_rng(21);
    std::normal_distribution<double> n01(0, 1);
    const int N = 10000;
    for (int t : {1, 500, 1000}) {
        double ab = sched.alpha_bar(t);
        double want_mean = std::sqrt(ab) * 0.6, want_var = 1 - ab;
        Tensor<double> x0({1}), noise({1});
        x0.v[0] = 0.6;
        double s = 0, s2 = 0;
        for (int i = 0; i < N; ++i) {
            noise.v[0] = n01(rng);
            double x = forward_diffuse(x0, t, noise, sched).v[0];
            s += x;
            s2 += x * x;
        }
        double mean = s / N, var = s2 / N - mean * mean;
        note(std::abs(mean - want_mean) < 4 * std::sqrt(want_var / N) + 1e-12,
             "moment mean t=" + std::to_string(t));
        note(std::abs(var - want_var) < 4 * want_var * std::sqrt(2.0 / N) + 1e-12,
             "moment var t=" + std::to_string(t));
    }
    // eta drop frequency and last-of-3 uniformity, chi-square at 99%
    {
        auto clip = randn<float>(rng, {8, 3, 4, 4});
        std::vector<int> cap{1, 5, 8, 9};
        const int M = 6000;
        const double eta = 0.25;
        int dropped = 0, src[3] = {0, 0, 0};
        for (int i = 0; i < M; ++i) {
            auto ins = sample_training_instructions(clip, cap, rng, eta, 0.1);
            if (!ins.f_last.has_value()) ++dropped;
            src[ins.last_source_index - 5] += 1;
        }
        double e1 = M * eta, e0 = M * (1 - eta);
        double chi = (dropped - e1) * (dropped - e1) / e1 +
                     ((M - dropped) - e0) * ((M - dropped) - e0) / e0;
        note(chi < 6.635, "eta drop frequency");
        double cs = 0, es = M / 3.0;
        for (int k = 0; k < 3; ++k) cs += (src[k] - es) * (src[k] - es) / es;
        note(cs < 9.210, "last-of-3 uniformity");
    }
    // renderer vs tracker centroid agreement
    {
        auto vocab = Vocab::builtin();
        std::uniform_real_distribution<double> unif(0, 1);
        for (int s = 0; s < 10; ++s) {
            SceneSpec scene;
            ShapeSpec sh;
            sh.kind = static_cast<ShapeKind>(s % 3);
            sh.color = static_cast<ColorName>(s % 4);
            sh.radius = 3.5 + 2.5 * unif(rng);
            sh.x = 11 + 3 * unif(rng);
            sh.y = 11 + 3 * unif(rng);
            sh.vx = -0.3 + 0.6 * unif(rng);
            sh.vy = -0.3 + 0.6 * unif(rng);
            scene.main.shapes.push_back(sh);
            auto rec = render_clip(scene, 12, 32, 32, vocab);
            auto track = track_color_centroids(rec.frames, sh.color);
            for (int f = 0; f < 12; ++f) {
                bool close = track[size_t(f)].first >= 0 &&
                             std::abs(track[size_t(f)].first - rec.trajectory[size_t(f) * 2]) <
                                 0.5 &&
                             std::abs(track[size_t(f)].second -
                                      rec.trajectory[size_t(f) * 2 + 1]) < 0.5;
                note(close, "tracker centroid agreement");
                if (!close) break;
            }
        }
    }
    return ok;
}

// ------------------------------------------------------------- criterion 3

bool gradient_check(std::string& detail) {
    DenoiserConfig c;
    c.latent_channels = 4;
    c.frames = 3;
    c.base_width = 8;
    c.depth = 2;
    c.heads = 2;
    c.text_dim = 8;
    TextEncoderConfig tc;
    tc.vocab_size = 22;
    tc.dim = 8;
    tc.heads = 2;
    JointModel<double> m;
    m.init(c, tc, 31);
    auto init_rng = make_rng(32);
    for (const auto& name : m.store.names) {
        auto& p = m.store.at(name);
        bool all_zero = true;
        for (double v : p.v)
            if (v != 0.0) all_zero = false;
        if (all_zero) init_normal(p, init_rng, 0.05);
    }
    auto rng = make_rng(33);
    auto z_concat = randn<double>(rng, {3, 8, 6, 6});
    auto target = randn<double>(rng, {3, 4, 6, 6});
    std::vector<int> tokens{1, 6, 8, 10};
    const int t_step = 23;
    auto loss_of = [&]() {
        Tape<double> tp;
        tp.grad_enabled = false;
        ParamBinding<double> bind;
        int ctx = m.text.forward(tp, bind, m.store, tokens);
        int out = m.unet.forward(tp, bind, m.store, z_concat, t_step, ctx, DenoiseMode::video);
        return double(tp.val(op_mse_to(tp, out, target)).v[0]);
    };
    std::unordered_map<std::string, Tensor<double>> grads;
    {
        Tape<double> tp;
        ParamBinding<double> bind;
        int ctx = m.text.forward(tp, bind, m.store, tokens);
        int out = m.unet.forward(tp, bind, m.store, z_concat, t_step, ctx, DenoiseMode::video);
        int l = op_mse_to(tp, out, target);
        tp.backward(l);
        bind.accumulate_grads(tp, grads);
    }
    auto pick_rng = make_rng(34);
    std::uniform_int_distribution<size_t> pick_name(0, m.store.names.size() - 1);
    const double h = 1e-3;
    int checked = 0, attempts = 0;
    double worst = 0;
    while (checked < 20 && attempts < 500) {
        ++attempts;
        const std::string& name = m.store.names[pick_name(pick_rng)];
        auto git = grads.find(name);
        if (git == grads.end()) continue;
        auto& p = m.store.at(name);
        std::uniform_int_distribution<size_t> pick_i(0, p.size() - 1);
        size_t i = pick_i(pick_rng);
        double g = git->second.v[i], orig = p.v[i];
        p.v[i] = orig + h;
        double lp = loss_of();
        p.v[i] = orig - h;
        double lm = loss_of();
        p.v[i] = orig;
        double fd = (lp - lm) / (2 * h);
        if (std::abs(g) < 1e-10 && std::abs(fd) < 1e-10) continue;
        worst = std::max(worst, std::abs(g - fd) / std::max(1e-8, std::abs(g) + std::abs(fd)));
        ++checked;
    }
    detail = "weights " + std::to_string(checked) + ", worst rel err " + fmt(worst);
    return checked == 20 && worst < 1e-3;
}

// ------------------------------------------------------------- criterion 4

bool zero_init_identity(std::string& detail) {
    DenoiserConfig c;
    c.latent_channels = 4;
    c.frames = 4;
    c.base_width = 8;
    c.heads = 2;
    c.text_dim = 8;
    TextEncoderConfig tc;
    tc.vocab_size = 22;
    tc.dim = 8;
    JointModel<float> m;
    m.init(c, tc, 41);
    auto rng = make_rng(42);
    auto z_concat = randn<float>(rng, {4, 8, 6, 6});
    auto ctx = m.text.encode(m.store, {1, 5, 8});
    auto video = m.unet.denoise(m.store, z_concat, 17, ctx, DenoiseMode::video);
    double maxd = 0;
    size_t per = z_concat.size() / 4;
    size_t per_out = video.size() / 4;
    for (int f = 0; f < 4; ++f) {
        Tensor<float> zf({1, 8, 6, 6});
        std::copy(z_concat.v.begin() + f * per, z_concat.v.begin() + (f + 1) * per,
                  zf.v.begin());
        auto image = m.unet.denoise(m.store, zf, 17, ctx, DenoiseMode::image);
        for (size_t i = 0; i < per_out; ++i)
            maxd = std::max(maxd,
                            std::abs(double(video.v[f * per_out + i]) - double(image.v[i])));
    }
    detail = "max abs diff " + fmt(maxd);
    return maxd < 1e-6;
}

// ------------------------------------------------------------- criterion 8

bool frechet_oracle(std::string& detail) {
    GaussianStats a;
    a.mean = {0.3, -1.2};
    a.cov = {{1.0, 0.2}, {0.2, 0.7}};
    double same = frechet_distance(a, a);
    GaussianStats g0, g1;
    g0.mean = {0.0};
    g0.cov = {{1.0}};
    g1.mean = {1.0};
    g1.cov = {{1.0}};
    double unit = frechet_distance(g0, g1);
    detail = "identical " + fmt(same) + ", shifted-unit " + fmt(unit);
    return same < 1e-6 && std::abs(unit - 1.0) < 1e-6;
}

// ----------------------------------------------------- training with caching

struct Scale {
    // desk scale per the acceptance contract: ~2M-parameter model, 20k
    // iterations (overnight on one CPU core); trained arms are cached in the
    // work dir and reused across runs
    int base_width = 64;
    long iterations = 20000;
    int corpus_clips = 2000;
    int n_adherence = 64;
    int n_sweep = 64;
    int n_ablation = 48;
    int chain_len = 64;
    int sample_steps = 50;
    double lr = 1e-3;
    long lr_warmup = 200;
    double lr_final_frac = 0.1;
};

std::map<long, double> read_metrics(const fs::path& dir) {
    std::map<long, double> loss;
    std::ifstream f(dir / "metrics.jsonl");
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        loss[j.at("iteration").get<long>()] = j.at("loss").get<double>();
    }
    return loss;
}

// train (or resume/reuse the cached run) so the final checkpoint reaches
// cfg.iterations with exactly this configuration
std::string ensure_trained(TrainConfig cfg, const std::vector<ClipRecord>& corpus,
                           const fs::path& dir) {
    cfg.out_dir = dir.string();
    fs::path final = dir / "checkpoint_final.bin";
    auto strip = [](nlohmann::json j) {
        j.erase("iterations");        // runs may be extended via resume
        j.erase("checkpoint_every");  // cadence only, no effect on the math
        return j;
    };
    if (fs::exists(final)) {
        auto ck = load_checkpoint(final.string());
        if (strip(ck.config) == strip(train_config_to_json(cfg))) {
            if (ck.iteration >= cfg.iterations) return final.string();
            std::cout << "  [resuming " << dir.filename().string() << " from iteration "
                      << ck.iteration << "]" << std::endl;
            run_training(cfg, corpus, final.string());
            return final.string();
        }
        fs::remove_all(dir);  // stale cache from a different configuration
    }
    std::cout << "  [training " << dir.filename().string() << ", " << cfg.iterations
              << " iterations]" << std::endl;
    long next_echo = 200;
    run_training(cfg, corpus, "", [&](const StepMetrics& m) {
        if (m.iteration == next_echo) {
            std::cout << "    iter " << m.iteration << " loss " << fmt(m.loss) << std::endl;
            next_echo += (next_echo < 1000 ? 200 : 1000);
        }
    });
    return final.string();
}

}  // namespace

int main(int argc, char** argv) {
    std::string work_dir = "acceptance_work";
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--work-dir") == 0 && i + 1 < argc)
            work_dir = argv[++i];
        else {
            std::cerr << "usage: acceptance [--work-dir DIR]\n";
            return 2;
        }
    }
    fs::create_directories(work_dir);
    const char* scale_env = std::getenv("FRAMEDIFF_ACCEPT_SCALE");
    bool reduced = scale_env && std::string(scale_env) == "reduced";

    Scale sc;
    if (reduced) {  // development smoke scale; not the acceptance bar
        sc.base_width = 32;
        sc.iterations = 4000;
        sc.corpus_clips = 512;
        sc.sample_steps = 16;
    }
    std::cout << "scale: " << (reduced ? "reduced (dev smoke)" : "desk")
              << " (base_width " << sc.base_width << ", " << sc.iterations
              << " iterations/arm)" << std::endl;

    // fast criteria first
    {
        std::string d;
        bool ok = exact_math_suite(d);
        report(1, ok, "exact-math suite", d);
    }
    {
        std::string d;
        bool ok = statistical_suite(d);
        report(2, ok, "statistical unit suite", d);
    }
    {
        std::string d;
        bool ok = gradient_check(d);
        report(3, ok, "gradient check vs central differences", d);
    }
    {
        std::string d;
        bool ok = zero_init_identity(d);
        report(4, ok, "zero-init video/image forward identity", d);
    }
    {
        std::string d;
        bool ok = frechet_oracle(d);
        report(8, ok, "Frechet metric oracle", d);
    }

    auto vocab = Vocab::builtin();
    GrammarConfig grammar;  // default 32x32x16 grammar

    // criterion 9: determinism of shards, training traces, and sampling
    {
        std::string d;
        bool ok = true;
        auto c1 = make_corpus(77, 16, grammar, vocab);
        auto c2 = make_corpus(77, 16, grammar, vocab);
        for (size_t i = 0; i < c1.size() && ok; ++i)
            ok = c1[i].caption == c2[i].caption &&
                 std::equal(c1[i].frames.v.begin(), c1[i].frames.v.end(),
                            c2[i].frames.v.begin()) &&
                 c1[i].trajectory == c2[i].trajectory;
        if (!ok) d = "corpus regeneration differs";
        fs::path p1 = fs::path(work_dir) / "det_a.fdsh", p2 = fs::path(work_dir) / "det_b.fdsh";
        write_shard(c1, p1.string());
        write_shard(c2, p2.string());
        {
            std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
            std::stringstream s1, s2;
            s1 << f1.rdbuf();
            s2 << f2.rdbuf();
            if (s1.str() != s2.str()) {
                ok = false;
                d = "shard bytes differ";
            }
        }
        TrainConfig tcfg;
        tcfg.model.frames = 4;
        tcfg.model.base_width = 8;
        tcfg.model.heads = 2;
        tcfg.model.text_dim = 16;
        tcfg.text.dim = 16;
        tcfg.timesteps = 100;
        tcfg.t_pert = 10;
        tcfg.batch_size = 2;
        tcfg.iterations = 30;
        tcfg.seed = 17;
        GrammarConfig tiny = grammar;
        tiny.frames = 4;
        tiny.height = tiny.width = 16;
        auto tiny_corpus = make_corpus(23, 12, tiny, vocab);
        std::vector<std::vector<double>> traces;
        for (int r = 0; r < 2; ++r) {
            fs::path dir = fs::path(work_dir) / ("det_train_" + std::to_string(r));
            fs::remove_all(dir);
            TrainConfig c = tcfg;
            c.out_dir = dir.string();
            traces.push_back(run_training(c, tiny_corpus).loss_trace);
        }
        if (traces[0] != traces[1]) {
            ok = false;
            d = "training loss traces differ";
        }
        // sampling determinism from the just-trained tiny checkpoint
        auto lm = model_from_checkpoint(
            load_checkpoint((fs::path(work_dir) / "det_train_0/checkpoint_final.bin").string()));
        auto ins = instructions_from_record(tiny_corpus[0]);
        SamplerConfig scfg;
        scfg.num_steps = 8;
        scfg.tau = 4;
        scfg.guidance_w = 2.0;
        scfg.seed = 99;
        scfg.t_pert = 10;
        auto ga = generate_clip(lm.model, ins, scfg, lm.sched);
        auto gb = generate_clip(lm.model, ins, scfg, lm.sched);
        if (!std::equal(ga.frames.v.begin(), ga.frames.v.end(), gb.frames.v.begin()) ||
            !std::equal(ga.latent.v.begin(), ga.latent.v.end(), gb.latent.v.begin())) {
            ok = false;
            d = "sampled clips differ";
        }
        report(9, ok, "determinism of shards, training traces, sampled clips", d);
    }

    // shared corpus and reference statistics for criteria 5-7
    std::cout << "  [generating corpus]" << std::endl;
    auto train_set = make_corpus(1, sc.corpus_clips, grammar, vocab);
    auto eval_set = make_corpus(0x0EA1, 200, grammar, vocab);
    auto ref = reference_stats(eval_set);

    TrainConfig base_cfg;
    base_cfg.model.base_width = sc.base_width;
    base_cfg.batch_size = 8;
    base_cfg.lr = sc.lr;
    base_cfg.lr_warmup = sc.lr_warmup;
    base_cfg.lr_final_frac = sc.lr_final_frac;
    base_cfg.iterations = sc.iterations;
    base_cfg.seed = 3;
    base_cfg.checkpoint_every = 1000;

    // criterion 5: full training run + adherence + motion + tau monotonicity
    LoadedModel lm_full;
    bool have_full = false;
    {
        std::string d;
        bool ok = true;
        try {
            auto path = ensure_trained(base_cfg, train_set, fs::path(work_dir) / "arm_full");
            auto metrics = read_metrics(fs::path(work_dir) / "arm_full");
            double head = 0, tail = 0;
            int nh = 0, nt = 0;
            for (const auto& [it, loss] : metrics) {
                if (it <= 20) {
                    head += loss;
                    ++nh;
                }
                if (it > sc.iterations - 50) {
                    tail += loss;
                    ++nt;
                }
            }
            head /= std::max(nh, 1);
            tail /= std::max(nt, 1);
            bool loss_ok = tail < head / 3.0;

            lm_full = model_from_checkpoint(load_checkpoint(path));
            have_full = true;
            SamplerConfig base;
            base.num_steps = sc.sample_steps;
            base.guidance_w = 1.0;
            base.seed = 5000;
            base.t_pert = lm_full.cfg.t_pert;
            std::cout << "  [adherence eval, " << sc.n_adherence << " generations]"
                      << std::endl;
            auto adh = eval_adherence(lm_full, eval_set, sc.n_adherence, base, vocab);
            bool psnr_ok = adh.mean_first_psnr >= 25.0;
            bool motion_ok = adh.motion.accuracy >= 0.80;
            std::cout << "  [tau sweep, 4 x " << sc.n_sweep << " generations]" << std::endl;
            std::vector<int> taus{0, sc.sample_steps / 4, sc.sample_steps / 2,
                                  sc.sample_steps};
            auto sweep = tau_sweep(lm_full, eval_set, sc.n_sweep, taus, base, ref);
            bool spear_ok = sweep.monotonicity <= -0.8;
            d = "loss " + fmt(head) + "->" + fmt(tail) + ", first-frame PSNR " +
                fmt(adh.mean_first_psnr) + " dB, motion accuracy " +
                fmt(adh.motion.accuracy) + ", tau monotonicity " + fmt(sweep.monotonicity);
            {
                nlohmann::json rep{{"loss_head", head},
                                   {"loss_tail", tail},
                                   {"mean_first_psnr", adh.mean_first_psnr},
                                   {"motion_accuracy", adh.motion.accuracy},
                                   {"tau_sweep", tau_sweep_to_json(sweep)}};
                std::ofstream((fs::path(work_dir) / "criterion5.json")) << rep.dump(2) << "\n";
            }
            ok = loss_ok && psnr_ok && motion_ok && spear_ok;
        } catch (const std::exception& e) {
            ok = false;
            d = std::string("error: ") + e.what();
        }
        report(5, ok, "desk training run: loss, adherence, motion, tau monotonicity", d);
    }

    // criterion 6: ablation ordering, identical budget per arm
    {
        std::string d;
        bool ok = true;
        try {
            TrainConfig nt = base_cfg;
            nt.ablate_no_text = true;
            TrainConfig nl = base_cfg;
            nl.ablate_no_last = true;
            auto p_nt = ensure_trained(nt, train_set, fs::path(work_dir) / "arm_no_text");
            auto p_nl = ensure_trained(nl, train_set, fs::path(work_dir) / "arm_no_last");
            if (!have_full) throw std::runtime_error("full arm unavailable");
            SamplerConfig g;
            g.num_steps = sc.sample_steps;
            g.tau = sc.sample_steps / 2;
            g.guidance_w = 1.0;
            g.seed = 6000;
            g.t_pert = lm_full.cfg.t_pert;
            std::cout << "  [ablation generation, 3 x " << sc.n_ablation << " clips]"
                      << std::endl;
            double f_full = generation_frechet(lm_full, eval_set, sc.n_ablation, g, true, true,
                                               ref);
            auto lm_nt = model_from_checkpoint(load_checkpoint(p_nt));
            double f_nt = generation_frechet(lm_nt, eval_set, sc.n_ablation, g, false, true,
                                             ref);
            auto lm_nl = model_from_checkpoint(load_checkpoint(p_nl));
            double f_nl = generation_frechet(lm_nl, eval_set, sc.n_ablation, g, true, false,
                                             ref);
            d = "full " + fmt(f_full) + ", no-text " + fmt(f_nt) + ", no-last " + fmt(f_nl);
            ok = f_full < f_nt && f_full < f_nl;
        } catch (const std::exception& e) {
            ok = false;
            d = std::string("error: ") + e.what();
        }
        report(6, ok, "ablation Frechet ordering", d);
    }

    // criterion 7: long-chain stability
    {
        std::string d;
        bool ok = true;
        try {
            if (!have_full) throw std::runtime_error("full arm unavailable");
            SamplerConfig base;
            base.num_steps = sc.sample_steps;
            base.guidance_w = 1.0;
            base.seed = 7000;
            base.t_pert = lm_full.cfg.t_pert;
            std::cout << "  [chain of " << sc.chain_len << " clips]" << std::endl;
            auto rep = eval_chain_drift(lm_full, eval_set.at(0), eval_set, sc.chain_len, base,
                                        ref);
            int F = lm_full.cfg.model.frames;
            int want_frames = 1 + sc.chain_len * (F - 1);
            d = std::to_string(rep.frames) + " frames, boundaries " +
                (rep.boundaries_exact ? "exact" : "NOT exact") + ", Frechet head " +
                fmt(rep.head_frechet) + " tail " + fmt(rep.tail_frechet) + " growth " +
                fmt(rep.growth);
            ok = rep.frames == want_frames && rep.boundaries_exact && rep.growth < 2.0;
        } catch (const std::exception& e) {
            ok = false;
            d = std::string("error: ") + e.what();
        }
        report(7, ok, "chain stability over " + std::to_string(sc.chain_len) + " clips", d);
    }

    std::cout << (g_failures == 0 ? "ALL CRITERIA PASS" : "FAILURES: ")
              << (g_failures ? std::to_string(g_failures) : std::string{}) << std::endl;
    return g_failures == 0 ? 0 : 1;
}

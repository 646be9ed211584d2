#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "framediff/trainer.hpp"

using namespace fd;

namespace {

// tiny pixel-space setup: 4-frame 16x16 clips, ~60k params
TrainConfig tiny_train(const std::string& out_dir) {
    TrainConfig cfg;
    cfg.model.latent_channels = 12;
    cfg.model.frames = 4;
    cfg.model.base_width = 8;
    cfg.model.depth = 2;
    cfg.model.heads = 2;
    cfg.model.text_dim = 8;
    cfg.text.vocab_size = 22;
    cfg.text.dim = 8;
    cfg.text.heads = 2;
    cfg.timesteps = 100;
    cfg.t_pert = 10;
    cfg.batch_size = 2;
    cfg.iterations = 6;
    cfg.seed = 17;
    cfg.out_dir = out_dir;
    return cfg;
}

std::vector<ClipRecord> tiny_corpus(int count = 4) {
    GrammarConfig g;
    g.height = 16;
    g.width = 16;
    g.frames = 4;
    g.plain_only = true;
    return make_corpus(23, count, g, Vocab::builtin());
}

}  // namespace

TEST_CASE("modality_for_iteration: every-8th iteration is an image batch") {
    for (int i = 1; i <= 7; ++i) CHECK(modality_for_iteration(i, 8) == Modality::video);
    CHECK(modality_for_iteration(8, 8) == Modality::image);
    CHECK(modality_for_iteration(16, 8) == Modality::image);
    for (int i = 1; i <= 5; ++i) CHECK(modality_for_iteration(i, 1) == Modality::image);
    CHECK_THROWS_AS(modality_for_iteration(1, 0), std::invalid_argument);
    CHECK_THROWS_AS(modality_for_iteration(0, 8), std::invalid_argument);
}

TEST_CASE("train_step: finite loss, channel contract, both modalities") {
    auto corpus = tiny_corpus();
    TrainState st;
    st.init_fresh(tiny_train("/tmp/framediff_train_unused"));

    // iterations 1..8 with period 8: seven video steps then one image step
    for (int i = 1; i <= 8; ++i) {
        auto m = train_step(st, corpus);
        CHECK(m.iteration == i);
        CHECK(std::isfinite(m.loss));
        CHECK(m.loss > 0.0);
        CHECK(int(m.ts.size()) == st.cfg.batch_size);
        for (int t : m.ts) {
            CHECK(t >= 1);
            CHECK(t <= st.cfg.timesteps);
        }
        CHECK(m.modality == (i == 8 ? Modality::image : Modality::video));
    }
    // zero-init residual structure keeps the first losses near 1 (eps variance)
    CHECK(st.iteration == 8);

    CHECK_THROWS_AS(train_step(st, {}), std::invalid_argument);
}

TEST_CASE("train_step: gradients reach the text encoder and temporal layers") {
    auto corpus = tiny_corpus();
    auto cfg = tiny_train("/tmp/framediff_train_unused");
    cfg.eta = 0.0;        // keep the last-frame path active
    cfg.text_drop = 0.0;  // keep real captions flowing
    TrainState st;
    st.init_fresh(cfg);
    for (int i = 0; i < 3; ++i) train_step(st, corpus);
    double text_norm = 0, tconv_norm = 0, tattn_norm = 0;
    for (const auto& [name, mom] : st.opt.m) {
        double n = 0;
        for (float v : mom.v) n += double(v) * v;
        if (name.rfind("text.", 0) == 0) text_norm += n;
        if (name.find(".tconv.") != std::string::npos) tconv_norm += n;
        if (name.find(".tattn.w") != std::string::npos) tattn_norm += n;
    }
    CHECK(text_norm > 0.0);
    CHECK(tconv_norm > 0.0);
    CHECK(tattn_norm > 0.0);
}

TEST_CASE("train_step: ablation arms") {
    auto corpus = tiny_corpus();
    auto cfg = tiny_train("/tmp/framediff_train_unused");
    cfg.ablate_no_last = true;
    TrainState st;
    st.init_fresh(cfg);
    auto m = train_step(st, corpus);
    CHECK(m.last_dropped == cfg.batch_size);  // eta forced to 1

    cfg.ablate_no_last = false;
    cfg.ablate_no_text = true;
    TrainState st2;
    st2.init_fresh(cfg);
    auto m2 = train_step(st2, corpus);
    CHECK(m2.text_dropped == cfg.batch_size);
    CHECK(std::isfinite(m2.loss));
}

TEST_CASE("run_training: determinism, resume, and zero-iteration checkpoint") {
    namespace fs = std::filesystem;
    auto corpus = tiny_corpus();
    std::string base = "/tmp/framediff_train_test";
    fs::remove_all(base);

    auto cfg_a = tiny_train(base + "/a");
    auto res_a = run_training(cfg_a, corpus);
    auto cfg_b = tiny_train(base + "/b");
    auto res_b = run_training(cfg_b, corpus);
    REQUIRE(res_a.loss_trace.size() == 6);
    // bit-identical loss traces across runs with the same seed
    for (size_t i = 0; i < 6; ++i) CHECK(res_a.loss_trace[i] == res_b.loss_trace[i]);

    // interrupted at iteration 3, resumed to 6: identical trace and weights
    auto cfg_c = tiny_train(base + "/c");
    cfg_c.iterations = 3;
    cfg_c.checkpoint_every = 3;
    auto res_c = run_training(cfg_c, corpus);
    auto cfg_d = tiny_train(base + "/d");
    cfg_d.iterations = 6;
    auto res_d = run_training(cfg_d, corpus, base + "/c/checkpoint_3.bin");
    REQUIRE(res_d.loss_trace.size() == 3);
    for (size_t i = 0; i < 3; ++i) CHECK(res_d.loss_trace[i] == res_a.loss_trace[3 + i]);
    auto ck_a = load_checkpoint(res_a.checkpoint_path);
    auto ck_d = load_checkpoint(res_d.checkpoint_path);
    REQUIRE(ck_a.params.names == ck_d.params.names);
    for (const auto& n : ck_a.params.names)
        for (size_t i = 0; i < ck_a.params.at(n).size(); ++i)
            CHECK(ck_a.params.at(n).v[i] == ck_d.params.at(n).v[i]);
    CHECK(ck_a.iteration == 6);

    // iterations=0 writes the initial checkpoint only
    auto cfg_e = tiny_train(base + "/e");
    cfg_e.iterations = 0;
    auto res_e = run_training(cfg_e, corpus);
    auto ck_e = load_checkpoint(res_e.checkpoint_path);
    CHECK(ck_e.iteration == 0);
    CHECK(res_e.loss_trace.empty());

    // config echo survives the round trip
    auto cfg_back = train_config_from_json(ck_a.config);
    CHECK(cfg_back.batch_size == cfg_a.batch_size);
    CHECK(cfg_back.eta == cfg_a.eta);
    CHECK(cfg_back.model.base_width == cfg_a.model.base_width);
    fs::remove_all(base);
}

TEST_CASE("run_training: overfitting four clips drives the loss down") {
    namespace fs = std::filesystem;
    auto corpus = tiny_corpus(4);
    std::string dir = "/tmp/framediff_overfit_test";
    fs::remove_all(dir);
    auto cfg = tiny_train(dir);
    cfg.iterations = 1200;
    cfg.lr = 2e-3;
    auto res = run_training(cfg, corpus);
    double head = 0, tail = 0;
    for (int i = 0; i < 10; ++i) {
        head += res.loss_trace[size_t(i)];
        tail += res.loss_trace[res.loss_trace.size() - 1 - size_t(i)];
    }
    // this tiny model's epsilon-MSE floor sits near 0.55x the initial loss;
    // check for a clear descent with margin, not for the floor itself
    CHECK(tail < 0.65 * head);
    fs::remove_all(dir);
}

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "framediff/checkpoint.hpp"
#include "framediff/config.hpp"
#include "framediff/evalkit.hpp"
#include "framediff/image_io.hpp"

using namespace fd;

TEST_CASE("psnr: identical input is infinite, constant offset has closed form") {
    auto rng = make_rng(61);
    auto a = randn<float>(rng, {2, 3, 4, 4});
    CHECK(std::isinf(psnr(a, a)));
    auto b = a;
    for (auto& v : b.v) v += 0.1f;
    // mse = 0.01 -> 10*log10(1/0.01) = 20 dB
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-4));
    Tensor<float> c({2, 2});
    CHECK_THROWS_AS(psnr(a, c), std::invalid_argument);
}

TEST_CASE("tracker: recovers rendered centroids within half a pixel") {
    auto vocab = Vocab::builtin();
    SceneSpec s;
    ShapeSpec sh;
    sh.kind = ShapeKind::square;
    sh.color = ColorName::red;
    sh.radius = 4.0;
    sh.x = 12.0;
    sh.y = 16.0;
    sh.vx = 1.5;
    s.main.shapes.push_back(sh);
    auto rec = render_clip(s, 6, 32, 32, vocab);
    auto track = track_color_centroids(rec.frames, ColorName::red);
    REQUIRE(track.size() == 6);
    for (int f = 0; f < 6; ++f) {
        CHECK(std::abs(track[size_t(f)].first - (12.0 + 1.5 * f)) < 0.5);
        CHECK(std::abs(track[size_t(f)].second - 16.0) < 0.5);
    }
    // absent color -> sentinel
    auto none = track_color_centroids(rec.frames, ColorName::blue);
    for (auto& [x, y] : none) {
        CHECK(x == -1.0);
        CHECK(y == -1.0);
    }
    CHECK(dominant_direction(track) == "right");
    CHECK(dominant_direction(none) == "still");
}

TEST_CASE("tracker: largest component wins over distractor specks") {
    // 1-frame image: 5x5 red block plus one isolated red pixel
    Tensor<float> img({1, 3, 16, 16});
    for (auto& v : img.v) v = 0.5f;
    float rgb[3];
    color_rgb(ColorName::red, rgb);
    auto set_px = [&](int y, int x) {
        for (int c = 0; c < 3; ++c) img.v[(size_t(c) * 16 + y) * 16 + x] = rgb[c];
    };
    for (int y = 2; y < 7; ++y)
        for (int x = 3; x < 8; ++x) set_px(y, x);
    set_px(14, 14);
    auto track = track_color_centroids(img, ColorName::red);
    CHECK(track[0].first == doctest::Approx(5.0));
    CHECK(track[0].second == doctest::Approx(4.0));
}

TEST_CASE("dominant_direction: displacement thresholds and sentinel skipping") {
    std::vector<std::pair<double, double>> t{{-1, -1}, {10, 10}, {-1, -1}, {10, 16}};
    CHECK(dominant_direction(t) == "down");
    std::vector<std::pair<double, double>> still{{10, 10}, {10.3, 9.9}};
    CHECK(dominant_direction(still) == "still");
    CHECK(dominant_direction({}) == "still");
}

TEST_CASE("clip_features: dimension, determinism, histogram normalization") {
    auto vocab = Vocab::builtin();
    GrammarConfig cfg;
    auto corpus = make_corpus(71, 2, cfg, vocab);
    auto f1 = clip_features(corpus[0].frames);
    auto f2 = clip_features(corpus[0].frames);
    auto g = clip_features(corpus[1].frames);
    REQUIRE(int(f1.size()) == kFeatureDim);
    CHECK(f1 == f2);
    CHECK(f1 != g);
    for (double v : f1) CHECK(std::isfinite(v));
    // first 8 entries: red-channel histogram sums to 1
    double s = 0;
    for (int i = 0; i < 8; ++i) s += f1[size_t(i)];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("gaussian_stats: hand-checked mean and covariance") {
    std::vector<std::vector<double>> feats{{1.0, 2.0}, {3.0, 6.0}};
    auto g = gaussian_stats(feats);
    CHECK(g.mean[0] == doctest::Approx(2.0));
    CHECK(g.mean[1] == doctest::Approx(4.0));
    // unbiased covariance of two points: var x = 2, var y = 8, cov = 4
    CHECK(g.cov[0][0] == doctest::Approx(2.0));
    CHECK(g.cov[1][1] == doctest::Approx(8.0));
    CHECK(g.cov[0][1] == doctest::Approx(4.0));
    CHECK_THROWS_AS(gaussian_stats({}), std::invalid_argument);
}

TEST_CASE("frechet_distance: diagonal closed form, symmetry, identity") {
    GaussianStats a, b;
    a.mean = {0.0, 0.0};
    b.mean = {1.0, 2.0};
    a.cov = {{1.0, 0.0}, {0.0, 4.0}};
    b.cov = {{9.0, 0.0}, {0.0, 4.0}};
    // diagonal case: |mu|^2 + sum (sqrt(v1)-sqrt(v2))^2 = (1+4) + (1-3)^2 + 0 = 9
    double d = frechet_distance(a, b);
    CHECK(d == doctest::Approx(9.0).epsilon(1e-3));
    CHECK(frechet_distance(b, a) == doctest::Approx(d).epsilon(1e-9));
    CHECK(frechet_distance(a, a) == doctest::Approx(0.0).epsilon(1e-6));

    // estimated from draws: matches the closed form, and a shifted population
    // separates far beyond same-population sampling noise
    auto rng = make_rng(67);
    std::normal_distribution<double> n01(0.0, 1.0);
    auto draw = [&](size_t n, double shift, double scale) {
        std::vector<std::vector<double>> out;
        for (size_t s = 0; s < n; ++s) {
            std::vector<double> f(8);
            for (auto& v : f) v = shift + scale * n01(rng);
            out.push_back(std::move(f));
        }
        return out;
    };
    auto p = gaussian_stats(draw(4000, 0.0, 1.0));
    auto q = gaussian_stats(draw(4000, 0.0, 1.0));
    auto r = gaussian_stats(draw(4000, 2.0, 1.0));
    double within = frechet_distance(p, q);
    double cross = frechet_distance(p, r);
    // true cross distance: 8 * 2^2 = 32
    CHECK(cross == doctest::Approx(32.0).epsilon(0.1));
    CHECK(cross > 10.0 * within);
}

TEST_CASE("clip_features: temporal statistics separate moving from frozen clips") {
    auto vocab = Vocab::builtin();
    GrammarConfig moving, frozen;
    frozen.zero_motion_only = true;
    frozen.plain_only = true;  // no camera motion or cuts either
    double tmov = 0, tfro = 0;
    for (const auto& r : make_corpus(100, 16, moving, vocab))
        tmov += clip_features(r.frames)[36];  // mean |x_{f+1}-x_f| of channel 0
    for (const auto& r : make_corpus(300, 16, frozen, vocab))
        tfro += clip_features(r.frames)[36];
    CHECK(tmov / 16 > 4.0 * (tfro / 16 + 1e-6));
}

TEST_CASE("checkpoint: save/load round trip is bit identical") {
    Checkpoint ck;
    ck.config["train"]["iterations"] = 100;
    ck.iteration = 42;
    auto rng = make_rng(81);
    auto& w = ck.params.create("layer.w", {3, 4});
    init_normal(w, rng, 1.0);
    auto& b = ck.params.create("layer.b", {4});
    init_normal(b, rng, 0.1);
    ck.rng_state = rng_state_string(rng);
    ck.opt.step_count = 17;
    ck.opt.m.emplace("layer.w", Tensor<float>::full({3, 4}, 0.25f));
    ck.opt.v.emplace("layer.w", Tensor<float>::full({3, 4}, 0.5f));

    const char* path = "/tmp/framediff_ckpt_test.bin";
    save_checkpoint(ck, path);
    auto lk = load_checkpoint(path);
    CHECK(lk.iteration == 42);
    CHECK(lk.rng_state == ck.rng_state);
    CHECK(lk.config == ck.config);
    CHECK(lk.opt.step_count == 17);
    REQUIRE(lk.params.names == ck.params.names);
    for (const auto& n : ck.params.names)
        for (size_t i = 0; i < ck.params.at(n).size(); ++i)
            CHECK(lk.params.at(n).v[i] == ck.params.at(n).v[i]);
    for (size_t i = 0; i < 12; ++i) {
        CHECK(lk.opt.m.at("layer.w").v[i] == 0.25f);
        CHECK(lk.opt.v.at("layer.w").v[i] == 0.5f);
    }
    // rng state restores the exact stream
    Rng r2;
    rng_set_state(r2, lk.rng_state);
    CHECK(r2() == rng());

    // corrupt magic
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.write("XXXX", 4);
    }
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
    CHECK_THROWS_AS(load_checkpoint("/tmp/framediff_ckpt_missing.bin"), std::runtime_error);
    std::remove(path);
}

TEST_CASE("config: ini parsing, typed access, overrides") {
    auto cfg = parse_config_text(
        "# comment\n"
        "[train]\n"
        "iterations = 500\n"
        "lr = 1e-4  # inline comment\n"
        "resume = true\n"
        "[data]\n"
        "shard = corpus.bin\n");
    CHECK(cfg.get_int("train.iterations", 0) == 500);
    CHECK(cfg.get_double("train.lr", 0.0) == doctest::Approx(1e-4));
    CHECK(cfg.get_bool("train.resume", false) == true);
    CHECK(cfg.get_str("data.shard", "") == "corpus.bin");
    CHECK(cfg.get_int("train.missing", 7) == 7);

    cfg.apply_override("train.iterations=900");
    CHECK(cfg.get_int("train.iterations", 0) == 900);
    CHECK_THROWS_AS(cfg.apply_override("no_equals"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("[oops\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("just a line\n"), std::invalid_argument);
    CHECK_THROWS_AS(cfg.get_int("data.shard", 0), std::invalid_argument);

    // round trip through the ini dump
    auto again = parse_config_text(cfg.dump_ini());
    CHECK(again.values == cfg.values);
}

TEST_CASE("image io: png and gif writers emit well-formed headers") {
    auto vocab = Vocab::builtin();
    GrammarConfig cfg;
    auto rec = make_corpus(91, 1, cfg, vocab)[0];
    const char* png = "/tmp/framediff_frame.png";
    const char* grid = "/tmp/framediff_grid.png";
    const char* gif = "/tmp/framediff_clip.gif";

    Tensor<float> f0({3, cfg.height, cfg.width});
    std::copy(rec.frames.v.begin(), rec.frames.v.begin() + f0.size(), f0.v.begin());
    write_png(png, f0);
    write_png_grid(grid, rec.frames, 4);
    write_gif(gif, rec.frames);

    auto head = [](const char* p, size_t n) {
        std::ifstream f(p, std::ios::binary);
        std::string h(n, '\0');
        f.read(h.data(), std::streamsize(n));
        REQUIRE(bool(f));
        return h;
    };
    CHECK(head(png, 8) == std::string("\x89PNG\r\n\x1a\n", 8));
    CHECK(head(grid, 8) == std::string("\x89PNG\r\n\x1a\n", 8));
    CHECK(head(gif, 6) == "GIF89a");
    // gif ends with the trailer byte
    {
        std::ifstream f(gif, std::ios::binary | std::ios::ate);
        auto sz = f.tellg();
        f.seekg(sz - std::streamoff(1));
        CHECK(f.get() == 0x3B);
    }
    CHECK_THROWS_AS(write_png(png, rec.frames), std::invalid_argument);
    CHECK_THROWS_AS(write_gif(gif, f0), std::invalid_argument);
    std::remove(png);
    std::remove(grid);
    std::remove(gif);
}

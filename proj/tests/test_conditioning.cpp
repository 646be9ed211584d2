#include <doctest.h>

#include <cmath>

#include "framediff/conditioning.hpp"
#include "framediff/text_encoder.hpp"
#include "framediff/vocab.hpp"

using namespace fd;

TEST_CASE("space_to_depth: exact round trip and index map") {
    auto rng = make_rng(21);
    auto frame = randn<float>(rng, {3, 8, 6});
    auto lat = space_to_depth(frame);
    CHECK(lat.shape == std::vector<int>{12, 4, 3});
    auto back = depth_to_space(lat);
    REQUIRE(back.shape == frame.shape);
    for (size_t i = 0; i < frame.size(); ++i) CHECK(back.v[i] == frame.v[i]);  // bit-exact

    // hand-check the index map on a 3x4x4 frame with p=2
    Tensor<float> f({3, 4, 4});
    for (size_t i = 0; i < f.size(); ++i) f.v[i] = static_cast<float>(i);
    auto l = space_to_depth(f);
    CHECK(l.shape == std::vector<int>{12, 2, 2});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                int oc = c * 4 + (y % 2) * 2 + (x % 2);
                CHECK(l.v[size_t((oc * 2 + y / 2) * 2 + x / 2)] ==
                      f.v[size_t((c * 4 + y) * 4 + x)]);
            }

    // all-zero frame -> all-zero latent
    Tensor<float> z({3, 4, 4});
    auto lz = space_to_depth(z);
    for (auto v : lz.v) CHECK(v == 0.0f);

    // energy preservation: pure permutation
    double ef = 0, el = 0;
    for (auto v : frame.v) ef += double(v) * v;
    for (auto v : lat.v) el += double(v) * v;
    CHECK(ef == doctest::Approx(el).epsilon(1e-12));

    Tensor<float> odd({3, 5, 4});
    CHECK_THROWS_AS(space_to_depth(odd), std::invalid_argument);
}

TEST_CASE("encode_frame/decode_frame: normalization and near-inverse") {
    auto rng = make_rng(25);
    Tensor<float> frame({3, 8, 8});
    std::uniform_real_distribution<float> unif(0.0f, 1.0f);
    for (auto& v : frame.v) v = unif(rng);
    auto enc = encode_frame(frame);
    auto raw = space_to_depth(frame);
    // exact affine map of the raw codec: shift then a power-of-two scale
    for (size_t i = 0; i < enc.size(); ++i)
        CHECK(enc.v[i] == (raw.v[i] - kLatentShift) * kLatentScale);
    // roughly centered and unit-scale for typical renders
    double s = 0, s2 = 0;
    for (auto v : enc.v) s += v, s2 += double(v) * v;
    double mean = s / enc.size();
    CHECK(std::abs(mean) < 1.0);
    CHECK(s2 / enc.size() - mean * mean > 0.1);
    // decode inverts encode to float rounding
    auto back = decode_frame(enc);
    REQUIRE(back.shape == frame.shape);
    for (size_t i = 0; i < frame.size(); ++i)
        CHECK(back.v[i] == doctest::Approx(frame.v[i]).epsilon(1e-6));
}

TEST_CASE("compose_image_condition: Eq.-1 slot layout") {
    auto rng = make_rng(22);
    auto ff = randn<float>(rng, {12, 2, 2});
    auto fl = randn<float>(rng, {12, 2, 2});
    size_t slot = ff.size();

    auto c = compose_image_condition<float>(ff, fl, 16);
    CHECK(c.shape == std::vector<int>{16, 12, 2, 2});
    for (size_t i = 0; i < slot; ++i) CHECK(c.v[i] == ff.v[i]);
    for (size_t i = slot; i < 15 * slot; ++i) CHECK(c.v[i] == 0.0f);  // 14 PAD slots
    for (size_t i = 0; i < slot; ++i) CHECK(c.v[15 * slot + i] == fl.v[i]);

    // absent last frame -> slot F-1 exact zeros
    auto c2 = compose_image_condition<float>(ff, std::nullopt, 16);
    for (size_t i = slot; i < 16 * slot; ++i) CHECK(c2.v[i] == 0.0f);

    // F=2: no padding
    auto c3 = compose_image_condition<float>(ff, fl, 2);
    CHECK(c3.dim(0) == 2);
    for (size_t i = 0; i < slot; ++i) {
        CHECK(c3.v[i] == ff.v[i]);
        CHECK(c3.v[slot + i] == fl.v[i]);
    }

    CHECK_THROWS_AS(compose_image_condition<float>(ff, fl, 1), std::invalid_argument);
}

TEST_CASE("sample_training_instructions: mandatory first frame and eta extremes") {
    auto rng = make_rng(23);
    auto clip = randn<float>(rng, {8, 3, 4, 4});
    for (auto& v : clip.v) v = std::abs(v) - std::floor(std::abs(v));  // into [0,1)
    std::vector<int> caption{1, 6, 8, 10};

    for (int i = 0; i < 50; ++i) {
        auto ins = sample_training_instructions(clip, caption, rng, 1.0, 0.0);
        CHECK(!ins.f_last.has_value());      // eta=1 always drops
        CHECK(ins.f_first.size() > 0);       // f_first never dropped
        CHECK(ins.text_tokens == caption);
        CHECK(ins.last_source_index >= 5);
        CHECK(ins.last_source_index <= 7);
    }
    for (int i = 0; i < 50; ++i) {
        auto ins = sample_training_instructions(clip, caption, rng, 0.0, 1.0);
        CHECK(ins.f_last.has_value());
        CHECK(ins.text_tokens == std::vector<int>{0});  // null token
    }
    // f_first equals encode(frame 0) exactly
    auto ins = sample_training_instructions(clip, caption, rng, 0.0, 0.0);
    Tensor<float> f0({3, 4, 4});
    std::copy(clip.v.begin(), clip.v.begin() + f0.size(), f0.v.begin());
    auto enc = encode_frame(f0);
    for (size_t i = 0; i < enc.size(); ++i) CHECK(ins.f_first.v[i] == enc.v[i]);

    auto tiny = randn<float>(rng, {3, 3, 4, 4});
    CHECK_THROWS_AS(sample_training_instructions(tiny, caption, rng, 0.25, 0.1),
                    std::invalid_argument);
    CHECK_THROWS_AS(sample_training_instructions(clip, caption, rng, 1.5, 0.1),
                    std::invalid_argument);
}

TEST_CASE("vocabulary: round trip and null token") {
    auto v = Vocab::builtin();
    CHECK(v.size() <= 64);
    CHECK(v.token(Vocab::kNull) == "<null>");
    CHECK(v.id("red") == 1);
    CHECK_THROWS_AS(v.id("elephant"), std::out_of_range);
    v.write("/tmp/framediff_vocab_test.txt");
    auto v2 = Vocab::read("/tmp/framediff_vocab_test.txt");
    CHECK(v2.size() == v.size());
    for (int i = 0; i < v.size(); ++i) CHECK(v2.token(i) == v.token(i));
}

TEST_CASE("text encoder: shapes, determinism, null embedding") {
    ParamStore<float> store;
    TextEncoder<float> enc;
    TextEncoderConfig cfg;
    cfg.vocab_size = 22;
    cfg.dim = 16;
    cfg.heads = 2;
    auto rng = make_rng(31);
    enc.init(store, cfg, rng);

    auto e7 = enc.encode(store, {1, 6, 8, 10, 2, 5, 9});
    CHECK(e7.shape == std::vector<int>{7, 16});
    auto enull = enc.encode(store, {0});
    CHECK(enull.shape == std::vector<int>{1, 16});

    // identical sequences -> identical embeddings
    auto a = enc.encode(store, {1, 6, 8});
    auto b = enc.encode(store, {1, 6, 8});
    for (size_t i = 0; i < a.size(); ++i) CHECK(a.v[i] == b.v[i]);

    CHECK(a.all_finite());
    CHECK_THROWS(enc.encode(store, {99}));
    CHECK_THROWS(enc.encode(store, {}));
}

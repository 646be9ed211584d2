#pragma once

// Factorized spatio-temporal UNet epsilon-predictor. Per stage: 2D conv block,
// 1D temporal conv, 2D self-attention, 1D bi-directional temporal attention,
// then cross-attention on the text embedding. Temporal output projections are
// zero-initialized, so a fresh model computes every frame independently and
// video mode coincides with per-frame image mode.

#include <cmath>
#include <string>
#include <vector>

#include "framediff/nn.hpp"
#include "framediff/params.hpp"
#include "framediff/text_encoder.hpp"

namespace fd {

enum class DenoiseMode { video, image };

struct DenoiserConfig {
    int latent_channels = 12;  // C; input is 2C (noisy latent ++ image condition)
    int frames = 16;           // F
    int base_width = 32;
    int depth = 2;
    int heads = 4;
    int text_dim = 64;
    bool temporal_pos_embed = true;

    int width_at(int level) const { return base_width << level; }
    int t_dim() const { return 2 * base_width; }
};

template <typename T>
class DenoiserModel {
   public:
    DenoiserConfig cfg;

    void init(ParamStore<T>& store, const DenoiserConfig& c, Rng& rng) {
        cfg = c;
        if (c.latent_channels < 1 || c.frames < 1 || c.base_width < 1 || c.depth < 1)
            throw std::invalid_argument("denoiser config values must be >= 1");
        if (c.base_width % c.heads != 0)
            throw std::invalid_argument("base_width must be divisible by heads");
        int w0 = c.base_width;
        conv(store, "unet.conv_in", w0, 2 * c.latent_channels, rng);
        init_linear(store.create("unet.temb.w1", {c.t_dim(), w0}), rng);
        store.create("unet.temb.b1", {c.t_dim()});
        init_linear(store.create("unet.temb.w2", {c.t_dim(), c.t_dim()}), rng);
        store.create("unet.temb.b2", {c.t_dim()});
        for (int i = 0; i < c.depth; ++i) {
            block(store, "unet.down" + std::to_string(i), c.width_at(i), rng);
            if (i < c.depth - 1)
                conv(store, "unet.downsample" + std::to_string(i), c.width_at(i + 1),
                     c.width_at(i), rng);
        }
        block(store, "unet.mid", c.width_at(c.depth - 1), rng);
        for (int i = c.depth - 2; i >= 0; --i) {
            std::string p = "unet.up" + std::to_string(i);
            conv(store, p + ".expand", c.width_at(i), c.width_at(i + 1), rng);
            conv(store, p + ".fuse", c.width_at(i), 2 * c.width_at(i), rng);
            block(store, p, c.width_at(i), rng);
        }
        norm_pair(store, "unet.out.gn", w0);
        // time-gated skip of the raw [z_t ; condition] channels into the
        // output head: the optimal conditional eps is a t-dependent linear
        // combination of the two, which this path expresses directly
        init_linear(store.create("unet.out.sproj.w", {4 * c.latent_channels, c.t_dim()}), rng);
        store.create("unet.out.sproj.b", {4 * c.latent_channels});
        store.create("unet.out.conv.w",
                     {c.latent_channels, w0 + 2 * c.latent_channels, 3, 3});  // zero-init
        store.create("unet.out.conv.b", {c.latent_channels});
    }

    // z_concat: [F, 2C, H', W']; ctx: [D, L] cols node (text embedding).
    // Returns the eps-hat node [F, C, H', W'].
    int forward(Tape<T>& tp, ParamBinding<T>& bind, const ParamStore<T>& store,
                const Tensor<T>& z_concat, int t, int ctx, DenoiseMode mode) const {
        if (z_concat.ndim() != 4 || z_concat.dim(1) != 2 * cfg.latent_channels)
            throw std::invalid_argument("denoiser input must be [F,2C,H',W']");
        int F = z_concat.dim(0), H = z_concat.dim(2), W = z_concat.dim(3);
        if (mode == DenoiseMode::image && F != 1)
            throw std::invalid_argument("image mode requires a single frame");
        int div = 1 << (cfg.depth - 1);
        if (H % div != 0 || W % div != 0)
            throw std::invalid_argument("spatial size must divide by 2^(depth-1)");
        int x_in = tp.leaf(z_concat);
        int x = conv_fwd(tp, bind, store, "unet.conv_in", x_in);
        int temb = time_embedding(tp, bind, store, t);
        std::vector<int> skips;
        int h = H, w = W;
        for (int i = 0; i < cfg.depth; ++i) {
            x = block_fwd(tp, bind, store, "unet.down" + std::to_string(i), x, temb, ctx, mode,
                          h, w);
            if (i < cfg.depth - 1) {
                skips.push_back(x);
                x = conv_fwd(tp, bind, store, "unet.downsample" + std::to_string(i), x, 2);
                h /= 2;
                w /= 2;
            }
        }
        x = block_fwd(tp, bind, store, "unet.mid", x, temb, ctx, mode, h, w);
        for (int i = cfg.depth - 2; i >= 0; --i) {
            std::string p = "unet.up" + std::to_string(i);
            x = op_upsample2x(tp, x);
            h *= 2;
            w *= 2;
            x = conv_fwd(tp, bind, store, p + ".expand", x);
            x = op_concat_channels(tp, x, skips[static_cast<size_t>(i)]);
            x = conv_fwd(tp, bind, store, p + ".fuse", x);
            x = block_fwd(tp, bind, store, p, x, temb, ctx, mode, h, w);
        }
        x = op_group_norm(tp, x, bind.bind(tp, store, "unet.out.gn.g"),
                          bind.bind(tp, store, "unet.out.gn.b"), norm_groups(cfg.base_width));
        x = op_silu(tp, x);
        int smod = op_linear_cols(tp, temb, bind.bind(tp, store, "unet.out.sproj.w"),
                                  bind.bind(tp, store, "unet.out.sproj.b"));
        int zskip = op_film_channel(tp, x_in, smod);
        x = op_concat_channels(tp, x, zskip);
        x = conv_fwd(tp, bind, store, "unet.out.conv", x);
        return x;
    }

    // No-grad epsilon prediction from a precomputed L x D text embedding.
    Tensor<T> denoise(const ParamStore<T>& store, const Tensor<T>& z_concat, int t,
                      const Tensor<T>& c_text, DenoiseMode mode) const {
        if (c_text.ndim() != 2 || c_text.dim(1) != cfg.text_dim)
            throw std::invalid_argument("text embedding must be [L, D]");
        Tape<T> tp;
        tp.grad_enabled = false;
        ParamBinding<T> bind;
        int L = c_text.dim(0), D = c_text.dim(1);
        Tensor<T> cols({D, L});
        for (int j = 0; j < L; ++j)
            for (int d = 0; d < D; ++d)
                cols.v[static_cast<size_t>(d) * L + j] = c_text.v[static_cast<size_t>(j) * D + d];
        int ctx = tp.leaf(std::move(cols));
        int out = forward(tp, bind, store, z_concat, t, ctx, mode);
        return tp.val(out);
    }

    static int norm_groups(int width) { return width >= 32 ? 8 : 4; }

    // sinusoidal step embedding, [base_width, 1] cols
    Tensor<T> sinusoidal(int t) const {
        int d = cfg.base_width, half = d / 2;
        Tensor<T> e({d, 1});
        for (int i = 0; i < half; ++i) {
            double freq = std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
            e.v[static_cast<size_t>(i)] = static_cast<T>(std::sin(t * freq));
            e.v[static_cast<size_t>(half + i)] = static_cast<T>(std::cos(t * freq));
        }
        return e;
    }

   private:
    static void norm_pair(ParamStore<T>& store, const std::string& name, int dim) {
        store.create(name + ".g", {dim}).v.assign(static_cast<size_t>(dim), T(1));
        store.create(name + ".b", {dim});
    }
    static void conv(ParamStore<T>& store, const std::string& name, int cout, int cin, Rng& rng) {
        init_conv(store.create(name + ".w", {cout, cin, 3, 3}), rng);
        store.create(name + ".b", {cout});
    }
    static void attn(ParamStore<T>& store, const std::string& p, int dim, int kv_dim, Rng& rng,
                     bool zero_out_proj) {
        init_linear(store.create(p + ".wq", {dim, dim}), rng);
        init_linear(store.create(p + ".wk", {dim, kv_dim}), rng);
        init_linear(store.create(p + ".wv", {dim, kv_dim}), rng);
        auto& wo = store.create(p + ".wo", {dim, dim});
        if (!zero_out_proj) init_linear(wo, rng);
        for (const char* b : {".bq", ".bk", ".bv", ".bo"}) store.create(p + b, {dim});
    }

    void block(ParamStore<T>& store, const std::string& p, int w, Rng& rng) {
        norm_pair(store, p + ".res.gn1", w);
        conv(store, p + ".res.conv1", w, w, rng);
        init_linear(store.create(p + ".res.tproj.w", {2 * w, cfg.t_dim()}), rng);
        store.create(p + ".res.tproj.b", {2 * w});
        norm_pair(store, p + ".res.gn2", w);
        conv(store, p + ".res.conv2", w, w, rng);
        store.create(p + ".tconv.w", {w, w, 3});  // zero-init temporal conv
        store.create(p + ".tconv.b", {w});
        norm_pair(store, p + ".attn2d.ln", w);
        attn(store, p + ".attn2d", w, w, rng, false);
        norm_pair(store, p + ".tattn.ln", w);
        if (cfg.temporal_pos_embed)
            init_normal(store.create(p + ".tattn.pos", {w, cfg.frames}), rng, 0.02);
        attn(store, p + ".tattn", w, w, rng, /*zero_out_proj=*/true);
        norm_pair(store, p + ".xattn.ln", w);
        attn(store, p + ".xattn", w, cfg.text_dim, rng, /*zero_out_proj=*/true);
    }

    int conv_fwd(Tape<T>& tp, ParamBinding<T>& bind, const ParamStore<T>& store,
                 const std::string& name, int x, int stride = 1) const {
        return op_conv2d(tp, x, bind.bind(tp, store, name + ".w"),
                         bind.bind(tp, store, name + ".b"), stride, 1);
    }

    int time_embedding(Tape<T>& tp, ParamBinding<T>& bind, const ParamStore<T>& store,
                       int t) const {
        int e = tp.leaf(sinusoidal(t));
        e = op_linear_cols(tp, e, bind.bind(tp, store, "unet.temb.w1"),
                           bind.bind(tp, store, "unet.temb.b1"));
        e = op_silu(tp, e);
        e = op_linear_cols(tp, e, bind.bind(tp, store, "unet.temb.w2"),
                           bind.bind(tp, store, "unet.temb.b2"));
        return e;
    }

    int attn_fwd(Tape<T>& tp, ParamBinding<T>& bind, const ParamStore<T>& store,
                 const std::string& p, int x, int L) const {
        return op_mha_cols(tp, x, L, bind.bind(tp, store, p + ".wq"),
                           bind.bind(tp, store, p + ".bq"), bind.bind(tp, store, p + ".wk"),
                           bind.bind(tp, store, p + ".bk"), bind.bind(tp, store, p + ".wv"),
                           bind.bind(tp, store, p + ".bv"), bind.bind(tp, store, p + ".wo"),
                           bind.bind(tp, store, p + ".bo"), cfg.heads);
    }

    int block_fwd(Tape<T>& tp, ParamBinding<T>& bind, const ParamStore<T>& store,
                  const std::string& p, int x, int temb, int ctx, DenoiseMode mode, int H,
                  int W) const {
        int F = tp.val(x).dim(0);
        int w = tp.val(x).dim(1);
        int groups = norm_groups(w);
        // residual conv block; step embedding enters as scale+shift after the
        // second norm (adaptive group norm)
        int h = op_group_norm(tp, x, bind.bind(tp, store, p + ".res.gn1.g"),
                              bind.bind(tp, store, p + ".res.gn1.b"), groups);
        h = op_silu(tp, h);
        h = conv_fwd(tp, bind, store, p + ".res.conv1", h);
        int tb = op_linear_cols(tp, temb, bind.bind(tp, store, p + ".res.tproj.w"),
                                bind.bind(tp, store, p + ".res.tproj.b"));
        h = op_group_norm(tp, h, bind.bind(tp, store, p + ".res.gn2.g"),
                          bind.bind(tp, store, p + ".res.gn2.b"), groups);
        h = op_film_channel(tp, h, tb);
        h = op_silu(tp, h);
        h = conv_fwd(tp, bind, store, p + ".res.conv2", h);
        x = op_add(tp, x, h);
        // temporal conv (disabled for image input)
        if (mode == DenoiseMode::video) {
            int tc = op_conv1d_time(tp, x, bind.bind(tp, store, p + ".tconv.w"),
                                    bind.bind(tp, store, p + ".tconv.b"));
            x = op_add(tp, x, tc);
        }
        // 2D self-attention within each frame
        {
            int c = op_to_cols_frames(tp, x);
            int a = op_layer_norm_cols(tp, c, bind.bind(tp, store, p + ".attn2d.ln.g"),
                                       bind.bind(tp, store, p + ".attn2d.ln.b"));
            a = attn_fwd(tp, bind, store, p + ".attn2d", a, H * W);
            c = op_add(tp, c, a);
            x = op_from_cols_frames(tp, c, F, H, W);
        }
        // bi-directional temporal attention (disabled for image input)
        if (mode == DenoiseMode::video) {
            int c = op_to_cols_positions(tp, x);
            int a = op_layer_norm_cols(tp, c, bind.bind(tp, store, p + ".tattn.ln.g"),
                                       bind.bind(tp, store, p + ".tattn.ln.b"));
            if (cfg.temporal_pos_embed)
                a = op_add_seq_pos_cols(tp, a, bind.bind(tp, store, p + ".tattn.pos"), F);
            a = attn_fwd(tp, bind, store, p + ".tattn", a, F);
            c = op_add(tp, c, a);
            x = op_from_cols_positions(tp, c, F, H, W);
        }
        // cross-attention on the text embedding
        {
            int c = op_to_cols_frames(tp, x);
            int a = op_layer_norm_cols(tp, c, bind.bind(tp, store, p + ".xattn.ln.g"),
                                       bind.bind(tp, store, p + ".xattn.ln.b"));
            a = op_mha_cross_cols(tp, a, ctx, bind.bind(tp, store, p + ".xattn.wq"),
                                  bind.bind(tp, store, p + ".xattn.bq"),
                                  bind.bind(tp, store, p + ".xattn.wk"),
                                  bind.bind(tp, store, p + ".xattn.bk"),
                                  bind.bind(tp, store, p + ".xattn.wv"),
                                  bind.bind(tp, store, p + ".xattn.bv"),
                                  bind.bind(tp, store, p + ".xattn.wo"),
                                  bind.bind(tp, store, p + ".xattn.bo"), cfg.heads);
            c = op_add(tp, c, a);
            x = op_from_cols_frames(tp, c, F, H, W);
        }
        return x;
    }
};

// Builds a fresh model + text encoder parameter store from a config and seed.
template <typename T>
struct JointModel {
    DenoiserConfig cfg;
    TextEncoderConfig text_cfg;
    ParamStore<T> store;
    DenoiserModel<T> unet;
    TextEncoder<T> text;

    void init(const DenoiserConfig& c, const TextEncoderConfig& tc, uint64_t seed) {
        cfg = c;
        text_cfg = tc;
        if (tc.dim != c.text_dim)
            throw std::invalid_argument("text encoder dim must match denoiser text_dim");
        auto rng = make_rng(seed, 0xC0DE);
        store = ParamStore<T>{};
        unet.init(store, c, rng);
        text.init(store, tc, rng);
    }
};

}  // namespace fd

#pragma once

// Toy text tower: token + position embeddings followed by bi-directional
// self-attention blocks. Trained jointly with the denoiser (no pretrained
// encoder exists at this scale); parameters live under the "text." prefix.

#include <string>
#include <vector>

#include "framediff/nn.hpp"
#include "framediff/params.hpp"

namespace fd {

struct TextEncoderConfig {
    int vocab_size = 64;
    int dim = 64;
    int heads = 2;
    int layers = 2;
    int max_len = 16;
};

template <typename T>
class TextEncoder {
   public:
    TextEncoderConfig cfg;

    void init(ParamStore<T>& store, const TextEncoderConfig& c, Rng& rng) {
        cfg = c;
        init_normal(store.create("text.tok_emb", {c.vocab_size, c.dim}), rng, 0.02);
        init_normal(store.create("text.pos_emb", {c.max_len, c.dim}), rng, 0.02);
        for (int l = 0; l < c.layers; ++l) {
            std::string p = "text.block" + std::to_string(l) + ".";
            norm_pair(store, p + "ln1", c.dim);
            attn_weights(store, p, c.dim, rng);
            norm_pair(store, p + "ln2", c.dim);
            init_linear(store.create(p + "mlp.w1", {2 * c.dim, c.dim}), rng);
            store.create(p + "mlp.b1", {2 * c.dim});
            init_linear(store.create(p + "mlp.w2", {c.dim, 2 * c.dim}), rng);
            store.create(p + "mlp.b2", {c.dim});
        }
        norm_pair(store, "text.ln_out", cfg.dim);
    }

    // Returns a [D, L] cols node on the tape; gradients reach all text params.
    int forward(Tape<T>& tp, ParamBinding<T>& bind, const ParamStore<T>& store,
                const std::vector<int>& tokens) const {
        if (tokens.empty()) throw std::invalid_argument("text encoder needs >= 1 token");
        if (static_cast<int>(tokens.size()) > cfg.max_len)
            throw std::invalid_argument("token sequence longer than max_len");
        int L = static_cast<int>(tokens.size());
        int x = op_gather_cols(tp, bind.bind(tp, store, "text.tok_emb"), tokens);
        std::vector<int> pos_ids(tokens.size());
        for (int i = 0; i < L; ++i) pos_ids[static_cast<size_t>(i)] = i;
        int pos = op_gather_cols(tp, bind.bind(tp, store, "text.pos_emb"), pos_ids);
        x = op_add(tp, x, pos);
        for (int l = 0; l < cfg.layers; ++l) {
            std::string p = "text.block" + std::to_string(l) + ".";
            int h = op_layer_norm_cols(tp, x, bind.bind(tp, store, p + "ln1.g"),
                                       bind.bind(tp, store, p + "ln1.b"));
            h = op_mha_cols(tp, h, L, bind.bind(tp, store, p + "attn.wq"),
                           bind.bind(tp, store, p + "attn.bq"),
                           bind.bind(tp, store, p + "attn.wk"),
                           bind.bind(tp, store, p + "attn.bk"),
                           bind.bind(tp, store, p + "attn.wv"),
                           bind.bind(tp, store, p + "attn.bv"),
                           bind.bind(tp, store, p + "attn.wo"),
                           bind.bind(tp, store, p + "attn.bo"), cfg.heads);
            x = op_add(tp, x, h);
            int m = op_layer_norm_cols(tp, x, bind.bind(tp, store, p + "ln2.g"),
                                       bind.bind(tp, store, p + "ln2.b"));
            m = op_linear_cols(tp, m, bind.bind(tp, store, p + "mlp.w1"),
                               bind.bind(tp, store, p + "mlp.b1"));
            m = op_silu(tp, m);
            m = op_linear_cols(tp, m, bind.bind(tp, store, p + "mlp.w2"),
                               bind.bind(tp, store, p + "mlp.b2"));
            x = op_add(tp, x, m);
        }
        x = op_layer_norm_cols(tp, x, bind.bind(tp, store, "text.ln_out.g"),
                               bind.bind(tp, store, "text.ln_out.b"));
        return x;
    }

    // No-grad convenience: L x D embedding matrix for a token sequence.
    Tensor<T> encode(const ParamStore<T>& store, const std::vector<int>& tokens) const {
        Tape<T> tp;
        tp.grad_enabled = false;
        ParamBinding<T> bind;
        int ctx = forward(tp, bind, store, tokens);
        const auto& cols = tp.val(ctx);  // [D, L]
        int D = cols.dim(0), L = cols.dim(1);
        Tensor<T> out({L, D});
        for (int j = 0; j < L; ++j)
            for (int d = 0; d < D; ++d)
                out.v[static_cast<size_t>(j) * D + d] = cols.v[static_cast<size_t>(d) * L + j];
        return out;
    }

   private:
    static void norm_pair(ParamStore<T>& store, const std::string& name, int dim) {
        store.create(name + ".g", {dim}).v.assign(static_cast<size_t>(dim), T(1));
        store.create(name + ".b", {dim});
    }
    static void attn_weights(ParamStore<T>& store, const std::string& p, int dim, Rng& rng) {
        for (const char* w : {"wq", "wk", "wv", "wo"})
            init_linear(store.create(p + "attn." + w, {dim, dim}), rng);
        for (const char* b : {"bq", "bk", "bv", "bo"}) store.create(p + "attn." + b, {dim});
    }
};

}  // namespace fd

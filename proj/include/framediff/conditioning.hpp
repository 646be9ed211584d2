#pragma once

// Frame codec, Eq.-style image-condition composition, and the training-time
// instruction sampling rules (last-of-three selection, eta drop, text drop).

#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "framediff/rng.hpp"
#include "framediff/tensor.hpp"

namespace fd {

constexpr int kPatch = 2;  // space-to-depth patch size p; latent C = 3 p^2

enum class CodecKind { space_to_depth, learned };

// Exact invertible rearrangement of p x p pixel blocks into channels.
// Pixel (c,y,x) lands at channel c*p^2 + (y%p)*p + (x%p), position (y/p, x/p).
template <typename T>
Tensor<T> space_to_depth(const Tensor<T>& frame, int p = kPatch) {
    if (frame.ndim() != 3) throw std::invalid_argument("frame must be [3,H,W]");
    int C = frame.dim(0), H = frame.dim(1), W = frame.dim(2);
    if (H % p != 0 || W % p != 0)
        throw std::invalid_argument("frame dims must be divisible by the patch size");
    int Ho = H / p, Wo = W / p;
    Tensor<T> out({C * p * p, Ho, Wo});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                int oc = c * p * p + (y % p) * p + (x % p);
                out.v[(static_cast<size_t>(oc) * Ho + y / p) * Wo + x / p] =
                    frame.v[(static_cast<size_t>(c) * H + y) * W + x];
            }
    return out;
}

template <typename T>
Tensor<T> depth_to_space(const Tensor<T>& latent, int p = kPatch) {
    if (latent.ndim() != 3) throw std::invalid_argument("latent must be [C,H',W']");
    int Cl = latent.dim(0), Ho = latent.dim(1), Wo = latent.dim(2);
    if (Cl % (p * p) != 0) throw std::invalid_argument("latent channels not divisible by p^2");
    int C = Cl / (p * p), H = Ho * p, W = Wo * p;
    Tensor<T> out({C, H, W});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                int oc = c * p * p + (y % p) * p + (x % p);
                out.v[(static_cast<size_t>(c) * H + y) * W + x] =
                    latent.v[(static_cast<size_t>(oc) * Ho + y / p) * Wo + x / p];
            }
    return out;
}

// Latent normalization: rendered pixels live in [0,1] with std ~0.12, far from
// the unit-variance regime the noise schedule assumes; without rescaling the
// forward process drowns the signal and endpoint conditioning never trains.
// Shift to zero mean and scale by 8 (power of two: exact in float, ~1/0.12).
constexpr float kLatentShift = 0.5f;
constexpr float kLatentScale = 8.0f;

// Pixel frame [3,H,W] -> normalized latent [12,H/2,W/2]; used everywhere a
// frame enters model space. The raw space_to_depth stays the exact codec.
template <typename T>
Tensor<T> encode_frame(const Tensor<T>& frame) {
    auto lat = space_to_depth(frame);
    for (auto& v : lat.v) v = (v - T(kLatentShift)) * T(kLatentScale);
    return lat;
}

template <typename T>
Tensor<T> decode_frame(const Tensor<T>& latent) {
    Tensor<T> raw = latent;
    for (auto& v : raw.v) v = v / T(kLatentScale) + T(kLatentShift);
    return depth_to_space(raw);
}

// Eq.-1 layout: slot 0 = f_first, interior PADs exact zeros, slot F-1 = f_last
// if present else zeros.
template <typename T>
Tensor<T> compose_image_condition(const Tensor<T>& f_first, const std::optional<Tensor<T>>& f_last,
                                  int F) {
    if (F < 2) throw std::invalid_argument("image condition needs F >= 2");
    if (f_first.ndim() != 3) throw std::invalid_argument("f_first must be [C,H',W']");
    int C = f_first.dim(0), H = f_first.dim(1), W = f_first.dim(2);
    Tensor<T> out({F, C, H, W});  // zero-initialized
    std::copy(f_first.v.begin(), f_first.v.end(), out.v.begin());
    if (f_last) {
        check_same_shape(f_first, *f_last, "compose_image_condition");
        std::copy(f_last->v.begin(), f_last->v.end(),
                  out.v.begin() + static_cast<size_t>(F - 1) * f_first.size());
    }
    return out;
}

// Which slots of a composed condition are occupied (for perturbation).
inline std::set<int> active_slots_of(bool has_last, int F) {
    std::set<int> s{0};
    if (has_last) s.insert(F - 1);
    return s;
}

template <typename T>
struct InstructionSet {
    std::vector<int> text_tokens;       // {0} = null token (unconditional)
    Tensor<T> f_first;                  // always present
    std::optional<Tensor<T>> f_last;
    int last_source_index = -1;         // which ground-truth frame was drawn
    bool last_dropped = false;
    bool text_dropped = false;
};

// Training-time sampling: f_first = encode(frame 0) always; f_last = encode of
// a uniform draw from the last three frames, then dropped with probability eta;
// text replaced by the null token with probability text_drop.
template <typename T>
InstructionSet<T> sample_training_instructions(const Tensor<T>& clip,
                                               const std::vector<int>& caption, Rng& rng,
                                               double eta, double text_drop) {
    if (clip.ndim() != 4) throw std::invalid_argument("clip must be [F,3,H,W]");
    int F = clip.dim(0);
    if (F < 4) throw std::invalid_argument("clip needs at least 4 frames");
    if (eta < 0 || eta > 1 || text_drop < 0 || text_drop > 1)
        throw std::invalid_argument("probabilities must lie in [0,1]");
    auto frame_at = [&](int f) {
        Tensor<T> fr({clip.dim(1), clip.dim(2), clip.dim(3)});
        size_t n = fr.size();
        std::copy(clip.v.begin() + static_cast<size_t>(f) * n,
                  clip.v.begin() + static_cast<size_t>(f + 1) * n, fr.v.begin());
        return fr;
    };
    InstructionSet<T> ins;
    ins.f_first = encode_frame(frame_at(0));
    std::uniform_int_distribution<int> pick(F - 3, F - 1);
    int j = pick(rng);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    bool drop_last = unif(rng) < eta;
    bool drop_text = unif(rng) < text_drop;
    ins.last_source_index = j;
    ins.last_dropped = drop_last;
    ins.text_dropped = drop_text;
    if (!drop_last) ins.f_last = encode_frame(frame_at(j));
    ins.text_tokens = drop_text ? std::vector<int>{0} : caption;
    if (ins.text_tokens.empty()) ins.text_tokens = {0};
    return ins;
}

}  // namespace fd

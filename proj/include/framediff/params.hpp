#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "framediff/nn.hpp"
#include "framediff/rng.hpp"
#include "framediff/tensor.hpp"

namespace fd {

// Named parameter tensors with stable creation order (checkpoint layout and
// optimizer iteration both follow this order).
template <typename T>
struct ParamStore {
    std::vector<std::string> names;
    std::unordered_map<std::string, Tensor<T>> tensors;

    Tensor<T>& create(const std::string& name, std::vector<int> shape) {
        if (tensors.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
        names.push_back(name);
        return tensors.emplace(name, Tensor<T>(std::move(shape))).first->second;
    }
    Tensor<T>& at(const std::string& name) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw std::out_of_range("no parameter named " + name);
        return it->second;
    }
    const Tensor<T>& at(const std::string& name) const {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw std::out_of_range("no parameter named " + name);
        return it->second;
    }
    bool has(const std::string& name) const { return tensors.count(name) != 0; }

    size_t total_params() const {
        size_t n = 0;
        for (const auto& name : names) n += tensors.at(name).size();
        return n;
    }

    template <typename U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& name : names) {
            out.names.push_back(name);
            out.tensors.emplace(name, tensors.at(name).template cast<U>());
        }
        return out;
    }
};

// Per-forward mapping from parameter names to tape leaf ids. Each parameter is
// bound at most once per tape.
template <typename T>
struct ParamBinding {
    std::unordered_map<std::string, int> ids;

    int bind(Tape<T>& tp, const ParamStore<T>& store, const std::string& name) {
        auto it = ids.find(name);
        if (it != ids.end()) return it->second;
        int id = tp.leaf(store.at(name));
        ids.emplace(name, id);
        return id;
    }

    void accumulate_grads(Tape<T>& tp, std::unordered_map<std::string, Tensor<T>>& grads) const {
        for (const auto& [name, id] : ids) {
            auto& g = tp.grad(id);
            auto it = grads.find(name);
            if (it == grads.end()) {
                grads.emplace(name, g);
            } else {
                for (size_t i = 0; i < g.size(); ++i) it->second.v[i] += g.v[i];
            }
        }
    }
};

// Decoupled weight decay Adam. Moments are stored per parameter name so they
// serialize into checkpoints alongside the weights.
template <typename T>
struct AdamW {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    long step_count = 0;
    std::unordered_map<std::string, Tensor<T>> m, v;

    void update(ParamStore<T>& store, const std::unordered_map<std::string, Tensor<T>>& grads,
                double grad_scale = 1.0) {
        ++step_count;
        double bc1 = 1.0 - std::pow(beta1, double(step_count));
        double bc2 = 1.0 - std::pow(beta2, double(step_count));
        for (const auto& name : store.names) {
            auto git = grads.find(name);
            if (git == grads.end()) continue;  // parameter unused this step
            auto& p = store.at(name);
            auto& mm = m.try_emplace(name, Tensor<T>::zeros(p.shape)).first->second;
            auto& vv = v.try_emplace(name, Tensor<T>::zeros(p.shape)).first->second;
            const auto& g = git->second;
            for (size_t i = 0; i < p.size(); ++i) {
                double gi = double(g.v[i]) * grad_scale;
                double mi = beta1 * double(mm.v[i]) + (1.0 - beta1) * gi;
                double vi = beta2 * double(vv.v[i]) + (1.0 - beta2) * gi * gi;
                mm.v[i] = static_cast<T>(mi);
                vv.v[i] = static_cast<T>(vi);
                double upd = (mi / bc1) / (std::sqrt(vi / bc2) + eps);
                p.v[i] = static_cast<T>(double(p.v[i]) - lr * (upd + weight_decay * double(p.v[i])));
            }
        }
    }
};

// initializers -------------------------------------------------------------

template <typename T>
void init_normal(Tensor<T>& t, Rng& rng, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& x : t.v) x = static_cast<T>(dist(rng));
}

template <typename T>
void init_conv(Tensor<T>& w, Rng& rng) {
    // kaiming for [Cout, Cin, ...] kernels
    size_t fan_in = w.size() / static_cast<size_t>(w.dim(0));
    init_normal(w, rng, std::sqrt(2.0 / double(fan_in)));
}

template <typename T>
void init_linear(Tensor<T>& w, Rng& rng) {
    init_normal(w, rng, std::sqrt(1.0 / double(w.dim(1))));
}

}  // namespace fd

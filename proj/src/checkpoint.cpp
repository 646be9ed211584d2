#include "framediff/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace fd {

namespace {

using nlohmann::json;

void append_tensor(json& dir, std::vector<float>& blob, const std::string& name,
                   const char* kind, const Tensor<float>& t) {
    json e;
    e["name"] = name;
    e["kind"] = kind;
    e["shape"] = t.shape;
    e["dtype"] = "float32";
    e["offset"] = blob.size();  // in elements
    e["size"] = t.size();
    dir.push_back(std::move(e));
    blob.insert(blob.end(), t.v.begin(), t.v.end());
}

Tensor<float> take_tensor(const json& e, const std::vector<float>& blob) {
    Tensor<float> t(e.at("shape").get<std::vector<int>>());
    size_t off = e.at("offset").get<size_t>(), n = e.at("size").get<size_t>();
    if (t.size() != n || off + n > blob.size())
        throw std::runtime_error("checkpoint: tensor directory inconsistent for " +
                                 e.at("name").get<std::string>());
    std::copy(blob.begin() + static_cast<long>(off), blob.begin() + static_cast<long>(off + n),
              t.v.begin());
    return t;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    json manifest;
    manifest["format"] = "FDCK";
    manifest["version"] = 1;
    manifest["config"] = ck.config;
    manifest["iteration"] = ck.iteration;
    manifest["rng_state"] = ck.rng_state;
    manifest["optimizer"] = {{"lr", ck.opt.lr},         {"beta1", ck.opt.beta1},
                             {"beta2", ck.opt.beta2},   {"eps", ck.opt.eps},
                             {"weight_decay", ck.opt.weight_decay},
                             {"step_count", ck.opt.step_count}};
    json dir = json::array();
    std::vector<float> blob;
    for (const auto& n : ck.params.names) append_tensor(dir, blob, n, "param", ck.params.at(n));
    for (const auto& n : ck.params.names) {
        auto it = ck.opt.m.find(n);
        if (it != ck.opt.m.end()) append_tensor(dir, blob, n, "adam_m", it->second);
    }
    for (const auto& n : ck.params.names) {
        auto it = ck.opt.v.find(n);
        if (it != ck.opt.v.end()) append_tensor(dir, blob, n, "adam_v", it->second);
    }
    manifest["tensors"] = std::move(dir);

    std::string tmp = path + ".tmp";
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    std::string mtext = manifest.dump();
    f.write("FDCK", 4);
    uint16_t version = 1;
    f.write(reinterpret_cast<const char*>(&version), sizeof(version));
    uint64_t mlen = mtext.size();
    f.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
    f.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
    f.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size() * sizeof(float)));
    f.close();
    if (!f) throw std::runtime_error("write failure on checkpoint: " + path);
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot finalize checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "FDCK", 4) != 0)
        throw std::runtime_error("checkpoint format error: bad magic in " + path);
    uint16_t version = 0;
    f.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!f || version != 1)
        throw std::runtime_error("checkpoint format error: unsupported version in " + path);
    uint64_t mlen = 0;
    f.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
    std::string mtext(mlen, '\0');
    f.read(mtext.data(), static_cast<std::streamsize>(mlen));
    if (!f) throw std::runtime_error("checkpoint format error: truncated manifest in " + path);
    json manifest = json::parse(mtext);

    size_t blob_elems = 0;
    for (const auto& e : manifest.at("tensors"))
        blob_elems = std::max(blob_elems, e.at("offset").get<size_t>() + e.at("size").get<size_t>());
    std::vector<float> blob(blob_elems);
    f.read(reinterpret_cast<char*>(blob.data()),
           static_cast<std::streamsize>(blob.size() * sizeof(float)));
    if (!f) throw std::runtime_error("checkpoint format error: truncated blob in " + path);

    Checkpoint ck;
    ck.config = manifest.at("config");
    ck.iteration = manifest.at("iteration").get<long>();
    ck.rng_state = manifest.at("rng_state").get<std::string>();
    const auto& opt = manifest.at("optimizer");
    ck.opt.lr = opt.at("lr").get<double>();
    ck.opt.beta1 = opt.at("beta1").get<double>();
    ck.opt.beta2 = opt.at("beta2").get<double>();
    ck.opt.eps = opt.at("eps").get<double>();
    ck.opt.weight_decay = opt.at("weight_decay").get<double>();
    ck.opt.step_count = opt.at("step_count").get<long>();
    for (const auto& e : manifest.at("tensors")) {
        std::string name = e.at("name").get<std::string>();
        std::string kind = e.at("kind").get<std::string>();
        if (kind == "param") ck.params.create(name, e.at("shape").get<std::vector<int>>()) =
            take_tensor(e, blob);
        else if (kind == "adam_m") ck.opt.m.emplace(name, take_tensor(e, blob));
        else if (kind == "adam_v") ck.opt.v.emplace(name, take_tensor(e, blob));
        else throw std::runtime_error("checkpoint format error: unknown tensor kind " + kind);
    }
    return ck;
}

void save_tensor(const Tensor<float>& t, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open tensor file for writing: " + path);
    f.write("FDTN", 4);
    uint16_t version = 1;
    f.write(reinterpret_cast<const char*>(&version), sizeof(version));
    uint32_t nd = static_cast<uint32_t>(t.shape.size());
    f.write(reinterpret_cast<const char*>(&nd), sizeof(nd));
    for (int d : t.shape) {
        int32_t v = d;
        f.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    f.write(reinterpret_cast<const char*>(t.v.data()),
            static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!f) throw std::runtime_error("write failure on tensor file: " + path);
}

Tensor<float> load_tensor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open tensor file: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "FDTN", 4) != 0)
        throw std::runtime_error("tensor file format error: bad magic in " + path);
    uint16_t version = 0;
    f.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!f || version != 1)
        throw std::runtime_error("tensor file format error: unsupported version in " + path);
    uint32_t nd = 0;
    f.read(reinterpret_cast<char*>(&nd), sizeof(nd));
    if (!f || nd > 8) throw std::runtime_error("tensor file format error: bad rank in " + path);
    std::vector<int> shape(nd);
    for (auto& d : shape) {
        int32_t v = 0;
        f.read(reinterpret_cast<char*>(&v), sizeof(v));
        d = v;
    }
    Tensor<float> t(shape);
    f.read(reinterpret_cast<char*>(t.v.data()),
           static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!f) throw std::runtime_error("tensor file format error: truncated blob in " + path);
    return t;
}

}  // namespace fd

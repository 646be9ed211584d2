#pragma once

// Checkpoint container: JSON manifest (config echo, iteration, rng state,
// tensor directory) followed by a float32 little-endian blob holding weights
// and optimizer moments. Save -> load -> resume is bit-identical.

#include <string>

#include <json.hpp>

#include "framediff/params.hpp"

namespace fd {

struct Checkpoint {
    nlohmann::json config;  // resolved run configuration, echoed verbatim
    long iteration = 0;
    std::string rng_state;  // serialized training rng
    ParamStore<float> params;
    AdamW<float> opt;  // lr/betas/step_count plus m,v moments
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// standalone tensor files (raw clip/frame artifacts), same blob convention
void save_tensor(const Tensor<float>& t, const std::string& path);
Tensor<float> load_tensor(const std::string& path);

}  // namespace fd

#pragma once

// Procedural moving-shapes corpus: scene grammar, anti-aliased rasterizer with
// analytic centroid annotations, template captions, and the FDSH shard format.

#include <optional>
#include <string>
#include <vector>

#include "framediff/rng.hpp"
#include "framediff/tensor.hpp"
#include "framediff/vocab.hpp"

namespace fd {

enum class ShapeKind { circle, square, triangle };
enum class ColorName { red, green, blue, yellow };
enum class MotionProgram { linear, bounce, enter, exit };
enum class CameraProgram { none, zoom_in, zoom_out, pan_left, pan_right };

struct ShapeSpec {
    ShapeKind kind = ShapeKind::circle;
    ColorName color = ColorName::red;
    double radius = 4.0;
    double x = 0.0, y = 0.0;    // center at frame 0, pixels
    double vx = 0.0, vy = 0.0;  // pixels per frame
    MotionProgram program = MotionProgram::linear;
};

struct ShotSpec {
    std::vector<ShapeSpec> shapes;  // 1..2, shape 0 is the caption subject
    CameraProgram camera = CameraProgram::none;
    double background = 0.5;  // solid gray level
};

struct SceneSpec {
    ShotSpec main;
    int cut_frame = -1;  // -1: no cut; else frames [cut_frame, F) use *cut
    std::optional<ShotSpec> cut;
};

struct GrammarConfig {
    int height = 32, width = 32, frames = 16;
    double p_second_shape = 0.25;
    double p_camera = 0.2;
    double p_cut = 0.1;
    double p_still = 0.08;
    double p_bounce = 0.10;
    double p_enter = 0.08;
    double p_exit = 0.08;
    double speed_min = 0.8, speed_max = 2.2;
    double radius_min = 3.5, radius_max = 6.5;
    bool zero_motion_only = false;  // grammar subset: all velocities (0,0)
    bool plain_only = false;        // no camera, no cuts, single shape
};

struct ClipRecord {
    Tensor<float> frames;          // [F,3,H,W], values quantized to k/255
    std::vector<int> caption;      // token ids
    std::vector<float> trajectory; // [F * num_shapes * 2], (x,y); -1 sentinel
    int num_shapes = 0;
};

// rgb for a shape color (distinct from any gray background)
void color_rgb(ColorName c, float rgb[3]);

SceneSpec sample_scene(Rng& rng, const GrammarConfig& cfg);
std::vector<int> caption_of(const SceneSpec& scene, const Vocab& vocab);
ClipRecord render_clip(const SceneSpec& scene, int F, int H, int W, const Vocab& vocab);

// analytic (unclipped) centroid of a shape at frame f, camera applied
void analytic_centroid(const ShotSpec& shot, const ShapeSpec& shape, int f, int H, int W,
                       double& cx, double& cy);

// direction token for a velocity ("left/right/up/down/still")
std::string direction_token(double vx, double vy);

// shard io ------------------------------------------------------------------

void write_shard(const std::vector<ClipRecord>& records, const std::string& path);
std::vector<ClipRecord> read_shard(const std::string& path);

// deterministic corpus generation; record i uses rng stream (seed, i)
std::vector<ClipRecord> make_corpus(uint64_t seed, int count, const GrammarConfig& cfg,
                                    const Vocab& vocab);

}  // namespace fd

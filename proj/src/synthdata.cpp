#include "framediff/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace fd {

void color_rgb(ColorName c, float rgb[3]) {
    switch (c) {
        case ColorName::red: rgb[0] = 0.90f; rgb[1] = 0.10f; rgb[2] = 0.10f; break;
        case ColorName::green: rgb[0] = 0.10f; rgb[1] = 0.80f; rgb[2] = 0.15f; break;
        case ColorName::blue: rgb[0] = 0.15f; rgb[1] = 0.20f; rgb[2] = 0.90f; break;
        case ColorName::yellow: rgb[0] = 0.92f; rgb[1] = 0.86f; rgb[2] = 0.10f; break;
    }
}

std::string direction_token(double vx, double vy) {
    if (std::abs(vx) < 1e-9 && std::abs(vy) < 1e-9) return "still";
    if (std::abs(vx) >= std::abs(vy)) return vx > 0 ? "right" : "left";
    return vy > 0 ? "down" : "up";
}

namespace {

const char* kind_token(ShapeKind k) {
    switch (k) {
        case ShapeKind::circle: return "circle";
        case ShapeKind::square: return "square";
        case ShapeKind::triangle: return "triangle";
    }
    return "circle";
}

const char* color_token(ColorName c) {
    switch (c) {
        case ColorName::red: return "red";
        case ColorName::green: return "green";
        case ColorName::blue: return "blue";
        case ColorName::yellow: return "yellow";
    }
    return "red";
}

// reflect x into [lo, hi] (bounce program)
double fold(double x, double lo, double hi) {
    if (hi <= lo) return lo;
    double L = hi - lo;
    double m = std::fmod(x - lo, 2 * L);
    if (m < 0) m += 2 * L;
    return lo + (m <= L ? m : 2 * L - m);
}

struct CameraXf {
    double s = 1.0, tx = 0.0, ty = 0.0;
};

CameraXf camera_at(CameraProgram cam, int f) {
    CameraXf xf;
    switch (cam) {
        case CameraProgram::none: break;
        case CameraProgram::zoom_in: xf.s = 1.0 + 0.025 * f; break;
        case CameraProgram::zoom_out: xf.s = 1.0 / (1.0 + 0.025 * f); break;
        case CameraProgram::pan_left: xf.tx = -1.0 * f; break;
        case CameraProgram::pan_right: xf.tx = 1.0 * f; break;
    }
    return xf;
}

// shape center in world coordinates at frame f (before camera)
void world_center(const ShapeSpec& sh, int f, int H, int W, double& x, double& y) {
    x = sh.x + sh.vx * f;
    y = sh.y + sh.vy * f;
    if (sh.program == MotionProgram::bounce) {
        x = fold(x, sh.radius, W - 1 - sh.radius);
        y = fold(y, sh.radius, H - 1 - sh.radius);
    }
}

bool covers(const ShapeSpec& sh, double cx, double cy, double scale, double px, double py) {
    double r = sh.radius * scale;
    double dx = px - cx, dy = py - cy;
    switch (sh.kind) {
        case ShapeKind::circle:
            return dx * dx + dy * dy <= r * r;
        case ShapeKind::square:
            return std::abs(dx) <= r && std::abs(dy) <= r;
        case ShapeKind::triangle: {
            // vertices (0,-r), (0.866r, 0.5r), (-0.866r, 0.5r); centroid at center
            double ax = 0, ay = -r, bx = 0.866 * r, by = 0.5 * r, cxv = -0.866 * r, cyv = 0.5 * r;
            auto side = [&](double x1, double y1, double x2, double y2) {
                return (x2 - x1) * (dy - y1) - (y2 - y1) * (dx - x1);
            };
            double s1 = side(ax, ay, bx, by), s2 = side(bx, by, cxv, cyv),
                   s3 = side(cxv, cyv, ax, ay);
            return (s1 >= 0 && s2 >= 0 && s3 >= 0) || (s1 <= 0 && s2 <= 0 && s3 <= 0);
        }
    }
    return false;
}

ShapeSpec sample_shape(Rng& rng, const GrammarConfig& cfg) {
    ShapeSpec sh;
    std::uniform_int_distribution<int> kind3(0, 2), color4(0, 3), dir4(0, 3);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    sh.kind = static_cast<ShapeKind>(kind3(rng));
    sh.color = static_cast<ColorName>(color4(rng));
    sh.radius = cfg.radius_min + (cfg.radius_max - cfg.radius_min) * unif(rng);
    double speed = 0.0;
    int dir = dir4(rng);
    if (!cfg.zero_motion_only && unif(rng) >= cfg.p_still)
        speed = cfg.speed_min + (cfg.speed_max - cfg.speed_min) * unif(rng);
    switch (dir) {
        case 0: sh.vx = -speed; break;
        case 1: sh.vx = speed; break;
        case 2: sh.vy = -speed; break;
        case 3: sh.vy = speed; break;
    }
    double u = unif(rng);
    if (speed > 0) {
        if (u < cfg.p_bounce) sh.program = MotionProgram::bounce;
        else if (u < cfg.p_bounce + cfg.p_enter) sh.program = MotionProgram::enter;
        else if (u < cfg.p_bounce + cfg.p_enter + cfg.p_exit) sh.program = MotionProgram::exit;
    }
    // position: fits fully inside the canvas at frame 0
    double lox = sh.radius + 1, hix = cfg.width - 2 - sh.radius;
    double loy = sh.radius + 1, hiy = cfg.height - 2 - sh.radius;
    sh.x = lox + (hix - lox) * unif(rng);
    sh.y = loy + (hiy - loy) * unif(rng);
    if (sh.program == MotionProgram::enter) {
        // start touching the border it enters from, moving inward
        if (std::abs(sh.vx) >= std::abs(sh.vy)) {
            sh.x = sh.vx > 0 ? lox : hix;
        } else {
            sh.y = sh.vy > 0 ? loy : hiy;
        }
    } else if (sh.program == MotionProgram::exit) {
        // start near the border it leaves through
        if (std::abs(sh.vx) >= std::abs(sh.vy)) {
            sh.x = sh.vx > 0 ? hix : lox;
        } else {
            sh.y = sh.vy > 0 ? hiy : loy;
        }
    }
    return sh;
}

ShotSpec sample_shot(Rng& rng, const GrammarConfig& cfg) {
    ShotSpec shot;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    shot.background = 0.35 + 0.3 * unif(rng);
    shot.shapes.push_back(sample_shape(rng, cfg));
    if (!cfg.plain_only && unif(rng) < cfg.p_second_shape) {
        ShapeSpec second = sample_shape(rng, cfg);
        while (second.color == shot.shapes[0].color) second.color =
            static_cast<ColorName>(std::uniform_int_distribution<int>(0, 3)(rng));
        shot.shapes.push_back(second);
    }
    if (!cfg.plain_only && unif(rng) < cfg.p_camera) {
        std::uniform_int_distribution<int> cam(1, 4);
        shot.camera = static_cast<CameraProgram>(cam(rng));
    }
    return shot;
}

}  // namespace

SceneSpec sample_scene(Rng& rng, const GrammarConfig& cfg) {
    if (cfg.frames < 4 || cfg.height < 16 || cfg.width < 16)
        throw std::invalid_argument("grammar config: canvas too small");
    SceneSpec scene;
    scene.main = sample_shot(rng, cfg);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    // cuts need at least 4 frames on each side of the transition
    if (!cfg.plain_only && cfg.frames >= 8 && unif(rng) < cfg.p_cut) {
        std::uniform_int_distribution<int> cutf(4, cfg.frames - 4);
        scene.cut_frame = cutf(rng);
        scene.cut = sample_shot(rng, cfg);
    }
    return scene;
}

std::vector<int> caption_of(const SceneSpec& scene, const Vocab& vocab) {
    std::vector<int> t;
    const ShapeSpec& s0 = scene.main.shapes.at(0);
    t.push_back(vocab.id(color_token(s0.color)));
    t.push_back(vocab.id(kind_token(s0.kind)));
    t.push_back(vocab.id("moves"));
    t.push_back(vocab.id(direction_token(s0.vx, s0.vy)));
    switch (scene.main.camera) {
        case CameraProgram::none: break;
        case CameraProgram::zoom_in:
            t.push_back(vocab.id("camera")); t.push_back(vocab.id("zoom"));
            t.push_back(vocab.id("in"));
            break;
        case CameraProgram::zoom_out:
            t.push_back(vocab.id("camera")); t.push_back(vocab.id("zoom"));
            t.push_back(vocab.id("out"));
            break;
        case CameraProgram::pan_left:
            t.push_back(vocab.id("camera")); t.push_back(vocab.id("pan"));
            t.push_back(vocab.id("left"));
            break;
        case CameraProgram::pan_right:
            t.push_back(vocab.id("camera")); t.push_back(vocab.id("pan"));
            t.push_back(vocab.id("right"));
            break;
    }
    if (scene.cut) {
        const ShapeSpec& c0 = scene.cut->shapes.at(0);
        t.push_back(vocab.id("then"));
        t.push_back(vocab.id("cuts"));
        t.push_back(vocab.id("to"));
        t.push_back(vocab.id(color_token(c0.color)));
        t.push_back(vocab.id(kind_token(c0.kind)));
    }
    return t;
}

void analytic_centroid(const ShotSpec& shot, const ShapeSpec& shape, int f, int H, int W,
                       double& cx, double& cy) {
    double wx, wy;
    world_center(shape, f, H, W, wx, wy);
    CameraXf xf = camera_at(shot.camera, f);
    double ccx = (W - 1) / 2.0, ccy = (H - 1) / 2.0;
    cx = ccx + xf.s * (wx - ccx) + xf.tx;
    cy = ccy + xf.s * (wy - ccy) + xf.ty;
}

ClipRecord render_clip(const SceneSpec& scene, int F, int H, int W, const Vocab& vocab) {
    if (scene.main.shapes.empty()) throw std::invalid_argument("scene has no shapes");
    ClipRecord rec;
    rec.frames = Tensor<float>({F, 3, H, W});
    rec.caption = caption_of(scene, vocab);
    int ns_main = static_cast<int>(scene.main.shapes.size());
    int ns_cut = scene.cut ? static_cast<int>(scene.cut->shapes.size()) : 0;
    rec.num_shapes = std::max(ns_main, ns_cut);
    rec.trajectory.assign(static_cast<size_t>(F) * rec.num_shapes * 2, -1.0f);

    const int ss = 3;  // supersampling grid per axis
    for (int f = 0; f < F; ++f) {
        const ShotSpec& shot =
            (scene.cut_frame >= 0 && f >= scene.cut_frame) ? *scene.cut : scene.main;
        CameraXf xf = camera_at(shot.camera, f);
        double ccx = (W - 1) / 2.0, ccy = (H - 1) / 2.0;
        int ns = static_cast<int>(shot.shapes.size());
        std::vector<double> cxs(ns), cys(ns);
        for (int s = 0; s < ns; ++s) {
            analytic_centroid(shot, shot.shapes[static_cast<size_t>(s)], f, H, W, cxs[s], cys[s]);
            rec.trajectory[(static_cast<size_t>(f) * rec.num_shapes + s) * 2 + 0] =
                static_cast<float>(cxs[s]);
            rec.trajectory[(static_cast<size_t>(f) * rec.num_shapes + s) * 2 + 1] =
                static_cast<float>(cys[s]);
        }
        (void)ccx; (void)ccy;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double acc[3] = {0, 0, 0};
                for (int sy = 0; sy < ss; ++sy)
                    for (int sx = 0; sx < ss; ++sx) {
                        double px = x + (sx + 0.5) / ss - 0.5;
                        double py = y + (sy + 0.5) / ss - 0.5;
                        float rgb[3] = {static_cast<float>(shot.background),
                                        static_cast<float>(shot.background),
                                        static_cast<float>(shot.background)};
                        for (int s = 0; s < ns; ++s) {  // shape 0 on top
                            if (covers(shot.shapes[static_cast<size_t>(s)], cxs[s], cys[s], xf.s,
                                       px, py)) {
                                color_rgb(shot.shapes[static_cast<size_t>(s)].color, rgb);
                                break;
                            }
                        }
                        for (int c = 0; c < 3; ++c) acc[c] += rgb[c];
                    }
                for (int c = 0; c < 3; ++c) {
                    double v = acc[c] / (ss * ss);
                    int q = static_cast<int>(std::lround(v * 255.0));
                    q = std::min(255, std::max(0, q));
                    rec.frames.v[((static_cast<size_t>(f) * 3 + c) * H + y) * W + x] =
                        static_cast<float>(q) / 255.0f;
                }
            }
    }
    return rec;
}

// shard io ------------------------------------------------------------------

namespace {

template <typename T>
void put(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));  // little-endian host
}

template <typename T>
T get(std::ifstream& f, const char* what) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f)
        throw std::runtime_error(std::string("shard format error reading ") + what +
                                 " at byte offset " + std::to_string(f.tellg() == -1
                                     ? -1L : static_cast<long>(f.tellg())));
    return v;
}

}  // namespace

void write_shard(const std::vector<ClipRecord>& records, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open shard for writing: " + path);
    f.write("FDSH", 4);
    put<uint16_t>(f, 1);  // version
    put<uint32_t>(f, static_cast<uint32_t>(records.size()));
    for (const auto& r : records) {
        int F = r.frames.dim(0), H = r.frames.dim(2), W = r.frames.dim(3);
        put<uint16_t>(f, static_cast<uint16_t>(F));
        put<uint16_t>(f, static_cast<uint16_t>(H));
        put<uint16_t>(f, static_cast<uint16_t>(W));
        put<uint16_t>(f, static_cast<uint16_t>(r.num_shapes));
        for (float v : r.frames.v)
            put<uint8_t>(f, static_cast<uint8_t>(std::lround(v * 255.0f)));
        put<uint16_t>(f, static_cast<uint16_t>(r.caption.size()));
        for (int id : r.caption) put<uint16_t>(f, static_cast<uint16_t>(id));
        if (r.trajectory.size() != static_cast<size_t>(F) * r.num_shapes * 2)
            throw std::runtime_error("trajectory length does not match F * num_shapes");
        for (float v : r.trajectory) put<float>(f, v);
    }
    if (!f) throw std::runtime_error("write failure on shard: " + path);
}

std::vector<ClipRecord> read_shard(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open shard: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "FDSH", 4) != 0)
        throw std::runtime_error("shard format error: bad magic at byte offset 0");
    uint16_t version = get<uint16_t>(f, "version");
    if (version != 1)
        throw std::runtime_error("shard format error: unsupported version at byte offset 4");
    uint32_t count = get<uint32_t>(f, "record count");
    std::vector<ClipRecord> out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        ClipRecord r;
        int F = get<uint16_t>(f, "F");
        int H = get<uint16_t>(f, "H");
        int W = get<uint16_t>(f, "W");
        r.num_shapes = get<uint16_t>(f, "num_shapes");
        r.frames = Tensor<float>({F, 3, H, W});
        for (auto& v : r.frames.v) v = static_cast<float>(get<uint8_t>(f, "frame data")) / 255.0f;
        uint16_t clen = get<uint16_t>(f, "caption length");
        r.caption.resize(clen);
        for (auto& id : r.caption) id = get<uint16_t>(f, "caption token");
        r.trajectory.resize(static_cast<size_t>(F) * r.num_shapes * 2);
        for (auto& v : r.trajectory) v = get<float>(f, "trajectory");
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<ClipRecord> make_corpus(uint64_t seed, int count, const GrammarConfig& cfg,
                                    const Vocab& vocab) {
    std::vector<ClipRecord> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        auto rng = make_rng(seed, static_cast<uint64_t>(i));
        auto scene = sample_scene(rng, cfg);
        out.push_back(render_clip(scene, cfg.frames, cfg.height, cfg.width, vocab));
    }
    return out;
}

}  // namespace fd

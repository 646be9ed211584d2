#include "framediff/evalkit.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

namespace fd {

std::vector<std::pair<double, double>> track_color_centroids(const Tensor<float>& video,
                                                             ColorName color, double thresh) {
    if (video.ndim() != 4 || video.dim(1) != 3)
        throw std::invalid_argument("tracker expects [F,3,H,W], got " + shape_str(video.shape));
    int F = video.dim(0), H = video.dim(2), W = video.dim(3);
    float target[3];
    color_rgb(color, target);
    std::vector<std::pair<double, double>> out(static_cast<size_t>(F), {-1.0, -1.0});
    std::vector<int> label(static_cast<size_t>(H) * W);
    for (int f = 0; f < F; ++f) {
        auto px = [&](int c, int y, int x) {
            return video.v[((size_t(f) * 3 + c) * H + y) * W + x];
        };
        std::fill(label.begin(), label.end(), 0);  // 0 background, 1 match
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double d2 = 0;
                for (int c = 0; c < 3; ++c) {
                    double d = double(px(c, y, x)) - target[c];
                    d2 += d * d;
                }
                if (d2 < thresh * thresh) label[size_t(y) * W + x] = 1;
            }
        // largest 4-connected component
        int best_count = 0;
        double best_sx = 0, best_sy = 0;
        int next_label = 2;
        for (int y0 = 0; y0 < H; ++y0)
            for (int x0 = 0; x0 < W; ++x0) {
                if (label[size_t(y0) * W + x0] != 1) continue;
                int count = 0;
                double sx = 0, sy = 0;
                std::queue<std::pair<int, int>> q;
                label[size_t(y0) * W + x0] = next_label;
                q.push({y0, x0});
                while (!q.empty()) {
                    auto [y, x] = q.front();
                    q.pop();
                    ++count;
                    sx += x;
                    sy += y;
                    const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
                    for (int k = 0; k < 4; ++k) {
                        int ny = y + dy[k], nx = x + dx[k];
                        if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                        if (label[size_t(ny) * W + nx] == 1) {
                            label[size_t(ny) * W + nx] = next_label;
                            q.push({ny, nx});
                        }
                    }
                }
                if (count > best_count) {
                    best_count = count;
                    best_sx = sx;
                    best_sy = sy;
                }
                ++next_label;
            }
        if (best_count > 0) out[size_t(f)] = {best_sx / best_count, best_sy / best_count};
    }
    return out;
}

double psnr(const Tensor<float>& a, const Tensor<float>& b) {
    check_same_shape(a, b, "psnr");
    double mse = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = double(a.v[i]) - double(b.v[i]);
        mse += d * d;
    }
    mse /= double(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

std::string dominant_direction(const std::vector<std::pair<double, double>>& track,
                               double still_thresh) {
    // net displacement between first and last tracked frames
    int first = -1, last = -1;
    for (size_t i = 0; i < track.size(); ++i)
        if (track[i].first >= 0) {
            if (first < 0) first = int(i);
            last = int(i);
        }
    if (first < 0 || last <= first) return "still";
    double dx = track[size_t(last)].first - track[size_t(first)].first;
    double dy = track[size_t(last)].second - track[size_t(first)].second;
    if (std::abs(dx) < still_thresh && std::abs(dy) < still_thresh) return "still";
    return direction_token(dx, dy);
}

MotionAccuracy motion_accuracy(const std::vector<Tensor<float>>& clips,
                               const std::vector<std::vector<int>>& captions,
                               const Vocab& vocab) {
    if (clips.empty()) throw std::invalid_argument("motion_accuracy: empty clip set");
    if (clips.size() != captions.size())
        throw std::invalid_argument("motion_accuracy: clip/caption count mismatch");
    MotionAccuracy out;
    int correct = 0;
    for (size_t i = 0; i < clips.size(); ++i) {
        const auto& cap = captions[i];
        // caption template: color shape "moves" direction [...]
        if (cap.size() < 4) {
            ++out.excluded;
            continue;
        }
        std::string dir = vocab.token(cap[3]);
        bool undefined = dir == "still";
        for (int id : cap) {
            std::string tok = vocab.token(id);
            if (tok == "camera" || tok == "then") undefined = true;  // camera motion or cut
        }
        if (undefined) {
            ++out.excluded;
            continue;
        }
        std::string color = vocab.token(cap[0]);
        ColorName cn;
        if (color == "red") cn = ColorName::red;
        else if (color == "green") cn = ColorName::green;
        else if (color == "blue") cn = ColorName::blue;
        else if (color == "yellow") cn = ColorName::yellow;
        else {
            ++out.excluded;
            continue;
        }
        auto track = track_color_centroids(clips[i], cn);
        ++out.included;
        if (dominant_direction(track) == dir) ++correct;
    }
    if (out.included > 0) out.accuracy = double(correct) / out.included;
    return out;
}

std::vector<double> clip_features(const Tensor<float>& video) {
    if (video.ndim() != 4 || video.dim(1) != 3)
        throw std::invalid_argument("clip_features expects [F,3,H,W], got " +
                                    shape_str(video.shape));
    int F = video.dim(0), H = video.dim(2), W = video.dim(3);
    size_t per_frame = size_t(3) * H * W, per_chan = size_t(H) * W;
    std::vector<double> feat;
    feat.reserve(kFeatureDim);

    // 24: 8-bin intensity histogram per channel, averaged over frames
    for (int c = 0; c < 3; ++c) {
        double hist[8] = {0};
        for (int f = 0; f < F; ++f)
            for (size_t i = 0; i < per_chan; ++i) {
                double v = video.v[size_t(f) * per_frame + size_t(c) * per_chan + i];
                int b = std::min(7, std::max(0, int(v * 8.0)));
                hist[b] += 1.0;
            }
        for (double h : hist) feat.push_back(h / (double(F) * double(per_chan)));
    }
    // 6: per-channel mean and std
    for (int c = 0; c < 3; ++c) {
        double s = 0, s2 = 0;
        size_t n = size_t(F) * per_chan;
        for (int f = 0; f < F; ++f)
            for (size_t i = 0; i < per_chan; ++i) {
                double v = video.v[size_t(f) * per_frame + size_t(c) * per_chan + i];
                s += v;
                s2 += v * v;
            }
        double mean = s / double(n);
        feat.push_back(mean);
        feat.push_back(std::sqrt(std::max(0.0, s2 / double(n) - mean * mean)));
    }
    // 6: per-channel min and max
    for (int c = 0; c < 3; ++c) {
        double lo = 1e30, hi = -1e30;
        for (int f = 0; f < F; ++f)
            for (size_t i = 0; i < per_chan; ++i) {
                double v = video.v[size_t(f) * per_frame + size_t(c) * per_chan + i];
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        feat.push_back(lo);
        feat.push_back(hi);
    }
    // 6: per-channel temporal-difference mean and std of |x_{f+1}-x_f|
    for (int c = 0; c < 3; ++c) {
        double s = 0, s2 = 0;
        size_t n = std::max<size_t>(1, size_t(F - 1) * per_chan);
        for (int f = 0; f + 1 < F; ++f)
            for (size_t i = 0; i < per_chan; ++i) {
                double v = std::abs(
                    double(video.v[size_t(f + 1) * per_frame + size_t(c) * per_chan + i]) -
                    double(video.v[size_t(f) * per_frame + size_t(c) * per_chan + i]));
                s += v;
                s2 += v * v;
            }
        double mean = s / double(n);
        feat.push_back(mean);
        feat.push_back(std::sqrt(std::max(0.0, s2 / double(n) - mean * mean)));
    }
    // 8: histogram of temporal-difference magnitude (mean over channels)
    {
        double hist[8] = {0};
        size_t n = std::max<size_t>(1, size_t(std::max(1, F - 1)) * per_chan);
        for (int f = 0; f + 1 < F; ++f)
            for (size_t i = 0; i < per_chan; ++i) {
                double v = 0;
                for (int c = 0; c < 3; ++c)
                    v += std::abs(
                        double(video.v[size_t(f + 1) * per_frame + size_t(c) * per_chan + i]) -
                        double(video.v[size_t(f) * per_frame + size_t(c) * per_chan + i]));
                v /= 3.0;
                int b = std::min(7, std::max(0, int(v * 16.0)));
                hist[b] += 1.0;
            }
        for (double h : hist) feat.push_back(h / double(n));
    }
    // 6: spatial gradient magnitude mean and std per channel (first frame pair of axes)
    for (int c = 0; c < 3; ++c) {
        double s = 0, s2 = 0;
        size_t n = 0;
        for (int f = 0; f < F; ++f)
            for (int y = 0; y + 1 < H; ++y)
                for (int x = 0; x + 1 < W; ++x) {
                    size_t base = size_t(f) * per_frame + size_t(c) * per_chan;
                    double gx = double(video.v[base + size_t(y) * W + x + 1]) -
                                double(video.v[base + size_t(y) * W + x]);
                    double gy = double(video.v[base + size_t(y + 1) * W + x]) -
                                double(video.v[base + size_t(y) * W + x]);
                    double g = std::sqrt(gx * gx + gy * gy);
                    s += g;
                    s2 += g * g;
                    ++n;
                }
        double mean = s / double(std::max<size_t>(1, n));
        feat.push_back(mean);
        feat.push_back(std::sqrt(std::max(0.0, s2 / double(std::max<size_t>(1, n)) - mean * mean)));
    }
    // 8: luminance histogram over all frames
    {
        double hist[8] = {0};
        size_t n = size_t(F) * per_chan;
        for (int f = 0; f < F; ++f)
            for (size_t i = 0; i < per_chan; ++i) {
                double lum = 0;
                for (int c = 0; c < 3; ++c)
                    lum += video.v[size_t(f) * per_frame + size_t(c) * per_chan + i];
                lum /= 3.0;
                int b = std::min(7, std::max(0, int(lum * 8.0)));
                hist[b] += 1.0;
            }
        for (double h : hist) feat.push_back(h / double(n));
    }
    if (int(feat.size()) != kFeatureDim)
        throw std::logic_error("clip_features: expected 64 dims, got " +
                               std::to_string(feat.size()));
    return feat;
}

GaussianStats gaussian_stats(const std::vector<std::vector<double>>& features) {
    if (features.empty()) throw std::invalid_argument("gaussian_stats: empty feature set");
    size_t n = features.size(), d = features[0].size();
    GaussianStats g;
    g.mean.assign(d, 0.0);
    g.cov.assign(d, std::vector<double>(d, 0.0));
    for (const auto& f : features) {
        if (f.size() != d) throw std::invalid_argument("gaussian_stats: inconsistent dims");
        for (size_t i = 0; i < d; ++i) g.mean[i] += f[i];
    }
    for (size_t i = 0; i < d; ++i) g.mean[i] /= double(n);
    double denom = n > 1 ? double(n - 1) : 1.0;
    for (const auto& f : features)
        for (size_t i = 0; i < d; ++i)
            for (size_t j = 0; j < d; ++j)
                g.cov[i][j] += (f[i] - g.mean[i]) * (f[j] - g.mean[j]) / denom;
    return g;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b, bool* regularized) {
    size_t d = a.mean.size();
    if (b.mean.size() != d) throw std::invalid_argument("frechet_distance: dim mismatch");
    using Mat = Eigen::MatrixXd;
    Mat C1(d, d), C2(d, d);
    for (size_t i = 0; i < d; ++i)
        for (size_t j = 0; j < d; ++j) {
            C1(long(i), long(j)) = a.cov[i][j];
            C2(long(i), long(j)) = b.cov[i][j];
        }
    const double reg = 1e-6;
    C1.diagonal().array() += reg;
    C2.diagonal().array() += reg;

    bool clipped = false;
    // C1^{1/2} via symmetric eigendecomposition
    Eigen::SelfAdjointEigenSolver<Mat> es1(0.5 * (C1 + C1.transpose()));
    Eigen::VectorXd ev1 = es1.eigenvalues();
    for (long i = 0; i < ev1.size(); ++i)
        if (ev1(i) < 0) {
            ev1(i) = 0;
            clipped = true;
        }
    Mat sqrt1 = es1.eigenvectors() * ev1.cwiseSqrt().asDiagonal() *
                es1.eigenvectors().transpose();
    Mat inner = sqrt1 * C2 * sqrt1;
    Eigen::SelfAdjointEigenSolver<Mat> es2(0.5 * (inner + inner.transpose()));
    Eigen::VectorXd ev2 = es2.eigenvalues();
    double tr_sqrt = 0;
    for (long i = 0; i < ev2.size(); ++i) {
        if (ev2(i) < 0) {
            if (ev2(i) < -1e-9) clipped = true;
            ev2(i) = 0;
        }
        tr_sqrt += std::sqrt(ev2(i));
    }
    double md = 0;
    for (size_t i = 0; i < d; ++i) {
        double diff = a.mean[i] - b.mean[i];
        md += diff * diff;
    }
    if (regularized) *regularized = clipped;
    double fd2 = md + C1.trace() + C2.trace() - 2.0 * tr_sqrt;
    return fd2 < 0 ? 0.0 : fd2;
}

}  // namespace fd

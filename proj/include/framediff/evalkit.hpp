#pragma once

// Evaluation toolkit: color-blob centroid tracker, PSNR, hand-crafted clip
// features, and a Frechet distance between Gaussian feature summaries.

#include <string>
#include <utility>
#include <vector>

#include "framediff/synthdata.hpp"
#include "framediff/tensor.hpp"

namespace fd {

constexpr int kFeatureDim = 64;

// per-frame centroid of the largest connected blob of the target color;
// (-1,-1) sentinel when no pixel matches
std::vector<std::pair<double, double>> track_color_centroids(const Tensor<float>& video,
                                                             ColorName color,
                                                             double thresh = 0.30);

// peak signal-to-noise ratio in dB over all elements; +inf for identical input
double psnr(const Tensor<float>& a, const Tensor<float>& b);

// dominant screen-space direction of a centroid track ("left/right/up/down/
// still"); sentinel frames are skipped
std::string dominant_direction(const std::vector<std::pair<double, double>>& track,
                               double still_thresh = 1.0);

// deterministic 64-d descriptor of one [F,3,H,W] clip
std::vector<double> clip_features(const Tensor<float>& video);

// fraction of clips whose tracked displacement direction matches the caption's
// direction token; clips with undefined motion (still, camera, cuts) excluded
struct MotionAccuracy {
    double accuracy = 0.0;
    int included = 0;
    int excluded = 0;
};

MotionAccuracy motion_accuracy(const std::vector<Tensor<float>>& clips,
                               const std::vector<std::vector<int>>& captions,
                               const Vocab& vocab);

struct GaussianStats {
    std::vector<double> mean;                // [d]
    std::vector<std::vector<double>> cov;    // [d][d]
};

GaussianStats gaussian_stats(const std::vector<std::vector<double>>& features);

// Frechet distance between two Gaussians; `regularized` is set when the
// covariance square root needed eigenvalue clipping
double frechet_distance(const GaussianStats& a, const GaussianStats& b,
                        bool* regularized = nullptr);

}  // namespace fd

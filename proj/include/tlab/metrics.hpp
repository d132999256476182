#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "classifier.hpp"
#include "errors.hpp"
#include "tensor.hpp"

namespace tlab {

// All values on the 0-255 pixel scale. psnr_db is +inf for identical inputs.
struct DistortionStats {
    double psnr_db = std::numeric_limits<double>::infinity();
    double l1_mean = 0.0;
    double max_abs = 0.0;
};

// Inputs are on the [0,1] model scale and are multiplied by 255 before
// differencing.
inline DistortionStats distortion(const Tensor& original, const Tensor& final_sample) {
    require_same_shape(original, final_sample, "distortion");
    double sq = 0.0, abs_sum = 0.0, mx = 0.0;
    for (std::size_t i = 0; i < original.size(); ++i) {
        const double d = std::fabs(double(final_sample[i]) * 255.0 - double(original[i]) * 255.0);
        sq += d * d;
        abs_sum += d;
        mx = std::max(mx, d);
    }
    const double n = double(original.size());
    DistortionStats s;
    s.l1_mean = abs_sum / n;
    s.max_abs = mx;
    const double mse = sq / n;
    s.psnr_db = mse > 0.0 ? 20.0 * std::log10(255.0 / std::sqrt(mse)) : std::numeric_limits<double>::infinity();
    if (mx == 0.0) s.psnr_db = std::numeric_limits<double>::infinity();
    return s;
}

inline double asr(const std::vector<bool>& flags) {
    if (flags.empty()) throw DataError("attack success rate of an empty sample set");
    std::size_t hits = 0;
    for (bool f : flags) hits += f ? 1 : 0;
    return double(hits) / double(flags.size());
}

// Flag i is true iff the target model misclassifies sample i.
template <Classifier C>
std::vector<bool> transfer_success(const C& target, std::span<const Tensor> samples,
                                   std::span<const std::size_t> labels) {
    if (samples.size() != labels.size()) {
        throw DimensionError("transfer_success: " + std::to_string(samples.size()) + " samples vs " +
                             std::to_string(labels.size()) + " labels");
    }
    std::vector<bool> flags;
    flags.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) flags.push_back(misclassifies(target, samples[i], labels[i]));
    return flags;
}

struct MeanPsnr {
    double mean_db = std::numeric_limits<double>::infinity();
    std::size_t excluded = 0;  // identical pairs left out of the mean
};

// Arithmetic mean of finite per-sample PSNR values.
inline MeanPsnr mean_psnr(std::span<const DistortionStats> stats) {
    MeanPsnr r;
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : stats) {
        if (std::isfinite(s.psnr_db)) {
            sum += s.psnr_db;
            ++n;
        } else {
            ++r.excluded;
        }
    }
    if (n > 0) r.mean_db = sum / double(n);
    return r;
}

} // namespace tlab

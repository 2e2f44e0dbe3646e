#pragma once

#include "racam/tensor.hpp"

namespace racam {

/// Strictly binary mask, [1,H,W], 1 = defect.
struct BinaryMask {
    Tensor values;

    std::int64_t positive_count() const { return values.count_nonzero(); }
};

/// Otsu threshold over a [0,1] map: values are quantized to 256 bins
/// (bin = floor(255*v)), the split {bins <= t} / {bins > t} maximizing
/// the between-class variance is found by exhaustive search (smallest t
/// among ties), and (t+0.5)/255 is returned. The comparison is done in
/// exact integer arithmetic.
float otsu_threshold(const Tensor& map);

/// mask = map >= otsu_threshold(map). An all-zero map yields an empty
/// mask.
BinaryMask to_mask(const Tensor& heatmap_values);

/// Drops 8-connected components smaller than min_area pixels.
BinaryMask filter_min_area(const BinaryMask& mask, int min_area);

}  // namespace racam

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "racam/postprocess.hpp"
#include "racam/tensor.hpp"

namespace racam {

struct SampleRecord {
    Tensor image;     // [1,H,W] in [0,1]
    BinaryMask mask;  // all-zero for defect-free samples
    int label = 0;    // 1 = defective
    std::string id;
};

struct GenParams {
    std::uint64_t seed = 7;
    int count = 300;
    double defect_rate = 0.5;
    int height = 96;
    int width = 288;
    int scratch_width_min = 1;
    int scratch_width_max = 3;
    float offset_min = 0.2f;
    float offset_max = 0.5f;
};

/// Seeded synthetic surface images: smoothed value-noise texture plus,
/// on defective samples, 1-2 thin polyline scratches whose exact raster
/// support is the ground-truth mask. Byte-deterministic for fixed
/// params; sample i draws from its own stream seeded with seed ^ i.
std::vector<SampleRecord> generate(const GenParams& params);

/// Binary PGM (P5, maxval 255). Values scale to [0,1] on read.
Tensor read_pgm(const std::string& path);
void write_pgm(const Tensor& image, const std::string& path);

/// Directory layout: images/*.pgm, masks/*.pgm (defective samples only),
/// labels.csv with header id,label.
void save_dataset(const std::vector<SampleRecord>& samples, const std::string& dir);
std::vector<SampleRecord> load_dataset(const std::string& dir);

enum class Split { Train, Val, Test };

/// 70/15/15 bucketing by id hash; adding samples never moves existing
/// ones between splits.
Split split_of(const std::string& id);
std::vector<SampleRecord> filter_split(const std::vector<SampleRecord>& samples, Split split);
const char* split_name(Split split);

}  // namespace racam

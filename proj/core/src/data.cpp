#include "racam/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "racam/rng.hpp"

namespace fs = std::filesystem;

namespace racam {

namespace {

void validate(const GenParams& p) {
    if (p.count < 0) throw std::invalid_argument("generate: count must be non-negative");
    if (!(p.defect_rate > 0.0 && p.defect_rate < 1.0)) {
        throw std::invalid_argument(fmt::format("generate: defect_rate {} outside (0,1)", p.defect_rate));
    }
    if (p.height % 4 != 0 || p.width % 4 != 0 || p.height <= 0 || p.width <= 0) {
        throw std::invalid_argument(
            fmt::format("generate: size {}x{} must be positive multiples of 4", p.height, p.width));
    }
    if (p.scratch_width_min < 1 || p.scratch_width_max < p.scratch_width_min) {
        throw std::invalid_argument("generate: bad scratch width range");
    }
    if (!(p.offset_min > 0.0f) || p.offset_max < p.offset_min) {
        throw std::invalid_argument("generate: bad intensity offset range");
    }
}

// One value-noise octave: random grid values interpolated bilinearly.
void add_octave(Tensor& img, SplitMix64& rng, int cell, float amp) {
    const int h = img.dim(1), w = img.dim(2);
    const int gh = h / cell + 2, gw = w / cell + 2;
    std::vector<float> grid(std::size_t(gh) * gw);
    for (auto& v : grid) v = rng.next_float();
    for (int i = 0; i < h; ++i) {
        const double fy = double(i) / cell;
        const int y0 = int(fy);
        const double ty = fy - y0;
        for (int j = 0; j < w; ++j) {
            const double fx = double(j) / cell;
            const int x0 = int(fx);
            const double tx = fx - x0;
            const double a = grid[std::size_t(y0) * gw + x0];
            const double b = grid[std::size_t(y0) * gw + x0 + 1];
            const double c = grid[std::size_t(y0 + 1) * gw + x0];
            const double d = grid[std::size_t(y0 + 1) * gw + x0 + 1];
            const double v = (1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * c + tx * d);
            img[std::int64_t(i) * w + j] += amp * float(v);
        }
    }
}

void stamp(Tensor& mask, int cy, int cx, int width, int h, int w) {
    const int r0 = width / 2;
    for (int dy = -r0; dy < width - r0; ++dy) {
        for (int dx = -r0; dx < width - r0; ++dx) {
            const int y = std::clamp(cy + dy, 0, h - 1);
            const int x = std::clamp(cx + dx, 0, w - 1);
            mask[std::int64_t(y) * w + x] = 1.0f;
        }
    }
}

void draw_scratch(Tensor& image, Tensor& mask, SplitMix64& rng, const GenParams& p) {
    const int h = p.height, w = p.width;
    const int width = rng.uniform_int(p.scratch_width_min, p.scratch_width_max);
    const float magnitude = rng.uniform(p.offset_min, p.offset_max);
    const float offset = rng.next_bool() ? magnitude : -magnitude;
    const int segments = rng.uniform_int(3, 4);

    double y = rng.uniform(4.0f, float(h - 5));
    double x = rng.uniform(4.0f, float(w - 5));
    double heading = rng.uniform(0.0f, float(2.0 * M_PI));

    Tensor support({1, h, w});
    for (int s = 0; s < segments; ++s) {
        const int len = rng.uniform_int(20, 50);
        heading += double(rng.uniform(-0.6f, 0.6f));
        for (int step = 0; step < len; ++step) {
            y = std::clamp(y + std::sin(heading), 1.0, double(h - 2));
            x = std::clamp(x + std::cos(heading), 1.0, double(w - 2));
            stamp(support, int(std::lround(y)), int(std::lround(x)), width, h, w);
        }
    }
    for (std::int64_t i = 0; i < support.numel(); ++i) {
        if (support[i] != 0.0f) {
            image[i] = std::clamp(image[i] + offset, 0.0f, 1.0f);
            mask[i] = 1.0f;
        }
    }
}

}  // namespace

std::vector<SampleRecord> generate(const GenParams& p) {
    validate(p);

    // Exactly round(count * rate) defective samples, scattered by a
    // seeded permutation.
    const auto n_defect = std::int64_t(std::llround(double(p.count) * p.defect_rate));
    std::vector<int> order(std::size_t(p.count));
    for (int i = 0; i < p.count; ++i) order[std::size_t(i)] = i;
    SplitMix64 perm_rng(mix64(p.seed ^ 0xdefec7ULL));
    for (int i = p.count - 1; i > 0; --i) {
        std::swap(order[std::size_t(i)], order[std::size_t(perm_rng.uniform_int(0, i))]);
    }
    std::vector<char> defective(std::size_t(p.count), 0);
    for (std::int64_t i = 0; i < n_defect; ++i) defective[std::size_t(order[std::size_t(i)])] = 1;

    std::vector<SampleRecord> out;
    out.reserve(std::size_t(p.count));
    for (int i = 0; i < p.count; ++i) {
        SplitMix64 rng(p.seed ^ std::uint64_t(i));
        SampleRecord rec;
        rec.id = fmt::format("img_{:05d}", i);
        rec.image = Tensor({1, p.height, p.width});
        rec.mask.values = Tensor({1, p.height, p.width});

        add_octave(rec.image, rng, 24, 0.55f);
        add_octave(rec.image, rng, 12, 0.45f);
        // map the noise sum (~[0,1]) into a mid-gray band
        for (std::int64_t k = 0; k < rec.image.numel(); ++k) {
            rec.image[k] = std::clamp(0.30f + 0.40f * rec.image[k], 0.0f, 1.0f);
        }

        if (defective[std::size_t(i)]) {
            const int scratches = rng.uniform_int(1, 2);
            for (int s = 0; s < scratches; ++s) draw_scratch(rec.image, rec.mask.values, rng, p);
            rec.label = 1;
        }
        out.push_back(std::move(rec));
    }
    return out;
}

namespace {

int read_header_int(const std::vector<unsigned char>& buf, std::size_t& pos, const std::string& path,
                    const char* what) {
    // skip whitespace and comments
    while (pos < buf.size()) {
        if (std::isspace(buf[pos])) {
            ++pos;
        } else if (buf[pos] == '#') {
            while (pos < buf.size() && buf[pos] != '\n') ++pos;
        } else {
            break;
        }
    }
    if (pos >= buf.size() || !std::isdigit(buf[pos])) {
        throw std::runtime_error(
            fmt::format("{}: malformed header at byte {} while reading {}", path, pos, what));
    }
    long v = 0;
    while (pos < buf.size() && std::isdigit(buf[pos])) {
        v = v * 10 + (buf[pos] - '0');
        ++pos;
        if (v > 1 << 20) throw std::runtime_error(fmt::format("{}: {} too large at byte {}", path, what, pos));
    }
    return int(v);
}

}  // namespace

Tensor read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path));
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5') {
        throw std::runtime_error(fmt::format("{}: wrong magic at byte 0, expected P5", path));
    }
    std::size_t pos = 2;
    const int w = read_header_int(buf, pos, path, "width");
    const int h = read_header_int(buf, pos, path, "height");
    const int maxval = read_header_int(buf, pos, path, "maxval");
    if (maxval != 255) {
        throw std::runtime_error(fmt::format("{}: unsupported maxval {} at byte {}", path, maxval, pos));
    }
    if (pos >= buf.size() || !std::isspace(buf[pos])) {
        throw std::runtime_error(fmt::format("{}: missing separator at byte {}", path, pos));
    }
    ++pos;
    const std::size_t need = std::size_t(w) * std::size_t(h);
    if (buf.size() - pos < need) {
        throw std::runtime_error(fmt::format("{}: payload short at byte {}: need {} bytes, have {}",
                                             path, pos, need, buf.size() - pos));
    }
    Tensor t({1, h, w});
    for (std::size_t i = 0; i < need; ++i) t[std::int64_t(i)] = float(buf[pos + i]) / 255.0f;
    return t;
}

void write_pgm(const Tensor& image, const std::string& path) {
    if (image.ndim() != 3 || image.dim(0) != 1) {
        throw std::invalid_argument(
            fmt::format("write_pgm: expected [1,H,W], got {}", image.shape_str()));
    }
    const int h = image.dim(1), w = image.dim(2);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot open '{}' for writing", path));
    out << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(std::size_t(w), 0);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const float v = std::clamp(image.at(0, i, j), 0.0f, 1.0f);
            row[std::size_t(j)] = static_cast<unsigned char>(std::lround(255.0f * v));
        }
        out.write(reinterpret_cast<const char*>(row.data()), w);
    }
    if (!out) throw std::runtime_error(fmt::format("write failed for '{}'", path));
}

void save_dataset(const std::vector<SampleRecord>& samples, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "masks");
    std::ofstream labels(fs::path(dir) / "labels.csv", std::ios::trunc);
    if (!labels) throw std::runtime_error(fmt::format("cannot write labels.csv under '{}'", dir));
    labels << "id,label\n";
    for (const SampleRecord& s : samples) {
        write_pgm(s.image, (fs::path(dir) / "images" / (s.id + ".pgm")).string());
        if (s.label == 1) {
            write_pgm(s.mask.values, (fs::path(dir) / "masks" / (s.id + ".pgm")).string());
        }
        labels << s.id << "," << s.label << "\n";
    }
}

std::vector<SampleRecord> load_dataset(const std::string& dir) {
    const fs::path root(dir);
    const fs::path manifest = root / "labels.csv";
    std::ifstream in(manifest);
    if (!in) throw std::runtime_error(fmt::format("missing manifest '{}'", manifest.string()));

    std::string line;
    if (!std::getline(in, line) || line != "id,label") {
        throw std::runtime_error(fmt::format("{}: expected header 'id,label'", manifest.string()));
    }

    std::vector<SampleRecord> out;
    std::set<std::string> ids;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw std::runtime_error(fmt::format("{}: malformed line '{}'", manifest.string(), line));
        }
        SampleRecord rec;
        rec.id = line.substr(0, comma);
        const std::string label_str = line.substr(comma + 1);
        if (label_str != "0" && label_str != "1") {
            throw std::runtime_error(
                fmt::format("{}: label '{}' for id '{}' must be 0 or 1", manifest.string(), label_str, rec.id));
        }
        rec.label = label_str == "1" ? 1 : 0;
        ids.insert(rec.id);

        rec.image = read_pgm((root / "images" / (rec.id + ".pgm")).string());
        const fs::path mask_path = root / "masks" / (rec.id + ".pgm");
        if (fs::exists(mask_path)) {
            Tensor m = read_pgm(mask_path.string());
            if (!m.same_shape(rec.image)) {
                throw std::runtime_error(fmt::format("mask size mismatch for id '{}'", rec.id));
            }
            for (std::int64_t i = 0; i < m.numel(); ++i) m[i] = m[i] >= 0.5f ? 1.0f : 0.0f;
            rec.mask.values = std::move(m);
        } else {
            rec.mask.values = Tensor(rec.image.shape());
        }

        const bool has_positive = rec.mask.positive_count() > 0;
        if (rec.label == 1 && !has_positive) {
            throw std::runtime_error(
                fmt::format("id '{}' is labeled defective but its mask is empty", rec.id));
        }
        if (rec.label == 0 && has_positive) {
            throw std::runtime_error(
                fmt::format("id '{}' is labeled defect-free but its mask has positives", rec.id));
        }
        out.push_back(std::move(rec));
    }

    if (fs::exists(root / "masks")) {
        for (const auto& entry : fs::directory_iterator(root / "masks")) {
            const std::string stem = entry.path().stem().string();
            if (!ids.count(stem)) {
                throw std::runtime_error(
                    fmt::format("dangling mask for id '{}' not present in labels.csv", stem));
            }
        }
    }
    return out;
}

Split split_of(const std::string& id) {
    const std::uint64_t h = mix64(fnv1a64(id.data(), id.size()));
    const std::uint64_t bucket = h % 100;
    if (bucket < 70) return Split::Train;
    if (bucket < 85) return Split::Val;
    return Split::Test;
}

std::vector<SampleRecord> filter_split(const std::vector<SampleRecord>& samples, Split split) {
    std::vector<SampleRecord> out;
    for (const SampleRecord& s : samples) {
        if (split_of(s.id) == split) out.push_back(s);
    }
    return out;
}

const char* split_name(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

}  // namespace racam

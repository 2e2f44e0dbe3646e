#include "racam/serialize.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>
#include <zlib.h>

namespace racam {

namespace {

constexpr char kMagic[4] = {'R', 'C', 'M', 'W'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::vector<unsigned char>& buf, std::uint16_t v) {
    buf.push_back(static_cast<unsigned char>(v & 0xff));
    buf.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

struct Reader {
    const std::vector<unsigned char>& buf;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) const {
        if (pos + n > buf.size()) {
            throw std::runtime_error(
                fmt::format("weight file truncated at byte {} while reading {}", pos, what));
        }
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return buf[pos++];
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = std::uint16_t(buf[pos]) | (std::uint16_t(buf[pos + 1]) << 8);
        pos += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(buf[pos + std::size_t(i)]) << (8 * i);
        pos += 4;
        return v;
    }
};

void append_tensor(std::vector<unsigned char>& buf, const std::string& name, const Tensor& t) {
    put_u16(buf, std::uint16_t(name.size()));
    buf.insert(buf.end(), name.begin(), name.end());
    buf.push_back(static_cast<unsigned char>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) put_u32(buf, std::uint32_t(t.dim(i)));
    const std::size_t off = buf.size();
    buf.resize(off + std::size_t(t.numel()) * 4);
    std::memcpy(buf.data() + off, t.data(), std::size_t(t.numel()) * 4);
}

ModelState rebuild_arch(std::uint32_t arch_id) {
    // Architectures are fixed; parameters get overwritten by the file.
    switch (ArchId(arch_id)) {
        case ArchId::TinyVgg:
            return tiny_vgg_init(0);
        case ArchId::MiniSegNet:
            return mini_segnet_init(0);
    }
    throw std::runtime_error(fmt::format("unknown architecture id {} in weight file", arch_id));
}

}  // namespace

std::vector<unsigned char> serialize_model(const ModelState& state) {
    std::vector<unsigned char> buf;
    buf.insert(buf.end(), kMagic, kMagic + 4);
    put_u32(buf, kVersion);
    put_u32(buf, std::uint32_t(state.params.size() + 1));
    append_tensor(buf, "arch", Tensor::from_data({1}, {float(std::uint32_t(state.spec.arch))}));
    for (std::size_t i = 0; i < state.params.size(); ++i) {
        append_tensor(buf, state.param_names[i], state.params[i]);
    }
    const auto crc = std::uint32_t(
        crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), uInt(buf.size())));
    put_u32(buf, crc);
    return buf;
}

ModelState deserialize_model(const std::vector<unsigned char>& bytes) {
    Reader r{bytes};
    r.need(4, "magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw std::runtime_error("bad magic bytes at offset 0; not a RCMW weight file");
    }
    r.pos = 4;
    const std::uint32_t version = r.u32("version");
    if (version != kVersion) {
        throw std::runtime_error(fmt::format("unsupported weight file version {} at byte 4", version));
    }
    const std::uint32_t count = r.u32("tensor count");

    if (bytes.size() < 4) throw std::runtime_error("weight file truncated before checksum");
    const std::size_t crc_pos = bytes.size() - 4;
    const auto stored_crc = std::uint32_t(bytes[crc_pos]) | (std::uint32_t(bytes[crc_pos + 1]) << 8) |
                            (std::uint32_t(bytes[crc_pos + 2]) << 16) |
                            (std::uint32_t(bytes[crc_pos + 3]) << 24);
    const auto actual_crc =
        std::uint32_t(crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), uInt(crc_pos)));
    if (stored_crc != actual_crc) {
        throw std::runtime_error(fmt::format(
            "checksum mismatch at byte {}: stored {:08x}, computed {:08x}", crc_pos, stored_crc,
            actual_crc));
    }

    ModelState state;
    bool have_arch = false;
    std::vector<std::pair<std::string, Tensor>> tensors;
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint16_t name_len = r.u16("name length");
        r.need(name_len, "tensor name");
        std::string name(reinterpret_cast<const char*>(bytes.data() + r.pos), name_len);
        r.pos += name_len;
        const std::uint8_t ndim = r.u8("ndim");
        std::vector<int> shape;
        for (std::uint8_t d = 0; d < ndim; ++d) shape.push_back(int(r.u32("dimension")));
        const std::int64_t numel = shape_numel(shape);
        r.need(std::size_t(numel) * 4, "tensor payload");
        std::vector<float> data(std::size_t(numel), 0.0f);
        std::memcpy(data.data(), bytes.data() + r.pos, std::size_t(numel) * 4);
        r.pos += std::size_t(numel) * 4;

        if (name == "arch") {
            state = rebuild_arch(std::uint32_t(data.at(0)));
            have_arch = true;
        } else {
            tensors.emplace_back(std::move(name), Tensor::from_data(std::move(shape), std::move(data)));
        }
    }
    if (r.pos != crc_pos) {
        throw std::runtime_error(
            fmt::format("trailing bytes after tensor {} at byte {}", count, r.pos));
    }
    if (!have_arch) throw std::runtime_error("weight file missing 'arch' tensor");

    std::size_t matched = 0;
    for (auto& [name, tensor] : tensors) {
        bool found = false;
        for (std::size_t i = 0; i < state.param_names.size(); ++i) {
            if (state.param_names[i] == name) {
                if (!state.params[i].same_shape(tensor)) {
                    throw std::runtime_error(fmt::format("tensor '{}' has shape {}, expected {}", name,
                                                         tensor.shape_str(),
                                                         state.params[i].shape_str()));
                }
                state.params[i] = std::move(tensor);
                found = true;
                ++matched;
                break;
            }
        }
        if (!found) throw std::runtime_error(fmt::format("unexpected tensor '{}' in weight file", name));
    }
    if (matched != state.params.size()) {
        throw std::runtime_error(fmt::format("weight file has {} parameter tensors, expected {}",
                                             matched, state.params.size()));
    }
    return state;
}

void save_model(const ModelState& state, const std::string& path) {
    const std::vector<unsigned char> buf = serialize_model(state);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot open '{}' for writing", path));
    out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
    if (!out) throw std::runtime_error(fmt::format("write failed for '{}'", path));
}

ModelState load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(fmt::format("cannot open '{}'", path));
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    try {
        return deserialize_model(buf);
    } catch (const std::exception& e) {
        throw std::runtime_error(fmt::format("{}: {}", path, e.what()));
    }
}

}  // namespace racam

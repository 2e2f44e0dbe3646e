#pragma once

#include <string>
#include <vector>

#include "racam/model.hpp"

namespace racam {

/// Little-endian weight file: magic "RCMW", version u32, tensor count
/// u32; per tensor: name length u16, UTF-8 name, ndim u8, dims u32 each,
/// raw f32 payload; trailing CRC32 of all preceding bytes.
void save_model(const ModelState& state, const std::string& path);
ModelState load_model(const std::string& path);

std::vector<unsigned char> serialize_model(const ModelState& state);
ModelState deserialize_model(const std::vector<unsigned char>& bytes);

}  // namespace racam

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stacktrack/tensor.hpp"

namespace stacktrack {

// Flat container of named arrays plus an optional metadata string.
// Binary layout (little-endian) is documented in docs/formats.md.
struct Checkpoint {
    std::string meta; // free-form text, used for a config echo
    std::vector<std::pair<std::string, Tensor>> arrays;

    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

} // namespace stacktrack

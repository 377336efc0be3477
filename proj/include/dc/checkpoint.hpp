#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <string>

#include "dc/tensor.hpp"

namespace dc {

// Versioned binary container for a trained model.
//
// Layout (all integers little-endian):
//   "DCCKPT01"                      8-byte magic
//   u32 version                     currently 1
//   u32 len, bytes                  model kind ("language-model", "cnn")
//   u64 vocab fingerprint
//   u32 len, bytes                  architecture config, compact JSON
//   u32 count                       number of parameters, then per parameter:
//     u32 len, bytes                name
//     u8 trainable
//     u32 rank, u64 dims[rank]
//     f64 values[prod(dims)]        IEEE-754 binary64, little-endian
struct Checkpoint {
    std::string kind;
    nlohmann::json config;
    std::uint64_t vocab_fingerprint = 0;
    ParameterStore params;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string fingerprint_hex(std::uint64_t fp);

} // namespace dc

#pragma once

// Checkpoint bundle.
//
// Little-endian binary layout:
//
//     magic    "DSFB"                    4 bytes
//     version  u32                       currently 1
//     count    u32                       number of sections
//     section  tag[4] | u64 length | payload | u32 crc32(payload)   (count times)
//     trailer  u32 crc32 of every preceding byte
//
// Section tags: CODC (codec), UNET (denoiser), COND (conditioning vector),
// DISC (discriminator), SCHD (noise schedule), CONF (config echo, text),
// LOSS (training loss curve). Every section is optional, so the same format
// holds a codec-only checkpoint and a full trained model. Reals are stored
// as IEEE-754 doubles.

#include "dsf/adversary.hpp"
#include "dsf/codec.hpp"
#include "dsf/diffusion.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dsf {

inline constexpr std::uint32_t kBundleVersion = 1;

struct ModelBundle {
    std::optional<LatentCodec> codec;
    std::optional<Generator> generator;
    std::optional<Discriminator> discriminator;
    std::optional<NoiseSchedule> schedule;
    std::string config_text;
    std::vector<EpochLosses> loss_log;
};

std::vector<std::uint8_t> serialize_bundle(const ModelBundle& bundle);
/// Throws FormatError on bad magic, unsupported version or truncation and
/// CorruptionError on a checksum mismatch.
ModelBundle deserialize_bundle(const std::vector<std::uint8_t>& bytes);

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);

/// CRC-32 (zlib polynomial).
std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size);

} // namespace dsf

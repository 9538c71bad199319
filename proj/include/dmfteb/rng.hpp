#pragma once

#include <cstdint>
#include <random>

namespace dmfteb {

using Rng = std::mt19937_64;

// Independent stream for (seed, tag, index); the same triple always gives the same stream.
inline Rng make_stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return Rng(seq);
}

namespace stream {
constexpr std::uint64_t dmft_init = 0x11;
constexpr std::uint64_t dmft_step = 0x12;
constexpr std::uint64_t instance = 0x21;
constexpr std::uint64_t chain_init = 0x22;
constexpr std::uint64_t chain_noise = 0x23;
constexpr std::uint64_t probe = 0x24;
constexpr std::uint64_t check = 0x31;
}  // namespace stream

}  // namespace dmfteb

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace ste {

using Engine = std::mt19937_64;

/// Independent engine for a (master seed, path) pair. Paths name the consumer,
/// e.g. {row, stream::measurement, detector}, so any draw can be regenerated
/// without replaying the draws that precede it.
Engine derive_engine(std::uint64_t master, std::initializer_list<std::uint64_t> path);

namespace stream {
inline constexpr std::uint64_t scenario = 1;
inline constexpr std::uint64_t measurement = 2;
inline constexpr std::uint64_t weights = 3;
inline constexpr std::uint64_t init = 4;
inline constexpr std::uint64_t shuffle = 5;
inline constexpr std::uint64_t chain = 6;
}  // namespace stream

}  // namespace ste

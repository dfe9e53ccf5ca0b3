#pragma once

#include <cstdint>
#include <filesystem>

#include "lpn/icnn.hpp"

namespace lpn {

/// On-disk network snapshot.
///
/// Byte layout:
///   1. One line of compact JSON terminated by '\n':
///        {"format":"lpn-checkpoint","version":1,"seed":S,
///         "arch":{"input_dim":n,"hidden_widths":[...],"alpha":a,"beta":b},
///         "count":N,"dtype":"f64le","layout":"row-major",
///         "order":"H1,b1,W2,H2,b2,...,WK,HK,bK,w,b"}
///   2. N little-endian IEEE-754 binary64 values in that order, each
///      matrix stored row-major.
/// Save followed by load reproduces every parameter bit for bit.
struct Checkpoint {
  IcnnArch arch;
  IcnnParams params;
  std::uint64_t seed = 0;
};

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lpn

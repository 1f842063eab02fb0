#pragma once

#include <filesystem>
#include <iosfwd>

#include "ep2t/net.hpp"

namespace ep2t {

// EP2T: "EP2T" | u16 version | u16 tensor count | per tensor:
//   u16 name length | name (UTF-8) | u8 rank | rank x u32 dims | f32 data (row-major)
inline constexpr std::uint16_t kWeightsVersion = 1;

void write_weights(std::ostream& out, const NetWeights<float>& weights);

/// Channel count and hidden widths are recovered from the tensor shapes; every
/// expected tensor must be present exactly once.
NetWeights<float> read_weights(std::istream& in);

NetWeights<float> load_weights(const std::filesystem::path& path);
void save_weights(const std::filesystem::path& path, const NetWeights<float>& weights);

}  // namespace ep2t

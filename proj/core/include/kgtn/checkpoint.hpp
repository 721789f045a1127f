#pragma once

#include <filesystem>
#include <map>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "kgtn/matrix.hpp"

namespace kgtn {

/// A binary file does not follow its declared layout.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using TensorMap = std::map<std::string, Matrix, std::less<>>;

inline constexpr char kCheckpointMagic[4] = {'K', 'G', 'T', 'N'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

/// Layout: magic "KGTN", version byte, then one record per tensor until EOF:
/// u32 name length, name bytes, u32 rows, u32 cols, rows*cols f64. All
/// integers and floats little-endian. Records are written in name order.
void save_checkpoint(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap load_checkpoint(const std::filesystem::path& path);

}  // namespace kgtn

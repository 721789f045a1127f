#include "kgtn/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include "binary_io.hpp"

namespace kgtn {

void save_checkpoint(const std::filesystem::path& path, const TensorMap& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_u8(out, kCheckpointVersion);
  for (const auto& [name, m] : tensors) {
    detail::write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u32(out, static_cast<std::uint32_t>(m.rows()));
    detail::write_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (double v : m.data()) detail::write_f64(out, v);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

TensorMap load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || !std::equal(magic, magic + 4, kCheckpointMagic)) {
    throw FormatError(path.string() + ": not a KGTN checkpoint (bad magic)");
  }
  const std::uint8_t version = detail::read_u8(in, "version");
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  TensorMap tensors;
  while (in.peek() != std::char_traits<char>::eof()) {
    const std::uint32_t len = detail::read_u32(in, "tensor name length");
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (static_cast<std::uint32_t>(in.gcount()) != len) throw FormatError(path.string() + ": truncated tensor name");
    const std::uint32_t rows = detail::read_u32(in, "rows of " + name);
    const std::uint32_t cols = detail::read_u32(in, "cols of " + name);
    std::vector<double> data(static_cast<std::size_t>(rows) * cols);
    for (double& v : data) v = detail::read_f64(in, "values of " + name);
    if (!tensors.emplace(name, Matrix(rows, cols, std::move(data))).second) {
      throw FormatError(path.string() + ": duplicate tensor '" + name + "'");
    }
  }
  return tensors;
}

}  // namespace kgtn

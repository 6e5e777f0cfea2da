#pragma once

#include <filesystem>
#include <string>

#include "dnae/tensor.hpp"

namespace dnae {

/// Binary tensor container:
///   bytes 0..3   magic "DNT1"
///   byte  4      dtype  (0x02 = float64, the only supported value)
///   byte  5      ndim   (1..4)
///   bytes 6..7   reserved, zero
///   then ndim little-endian uint32 dims
///   then row-major little-endian IEEE-754 float64 payload
void write_tensor(const std::filesystem::path& path, const Tensor& t);
TensorPtr read_tensor(const std::filesystem::path& path);

// small helpers shared by container formats
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

/// Format a double with enough digits to round-trip exactly ("%.17g").
std::string fmt_double(double v);

} // namespace dnae

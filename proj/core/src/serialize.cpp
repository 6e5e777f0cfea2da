#include "dnae/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "dnae/errors.hpp"

namespace dnae {

static_assert(std::endian::native == std::endian::little,
              "tensor container I/O assumes a little-endian host");
static_assert(sizeof(double) == 8 && std::numeric_limits<double>::is_iec559,
              "tensor container I/O assumes IEEE-754 float64");

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + path.string());
    unsigned char header[8] = {'D', 'N', 'T', '1', 0x02, 0, 0, 0};
    header[5] = static_cast<unsigned char>(t.shape.size());
    out.write(reinterpret_cast<const char*>(header), 8);
    for (int d : t.shape) {
        std::uint32_t v = static_cast<std::uint32_t>(d);
        out.write(reinterpret_cast<const char*>(&v), 4);
    }
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!out) throw IoError("short write: " + path.string());
}

TensorPtr read_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    unsigned char header[8];
    in.read(reinterpret_cast<char*>(header), 8);
    if (!in) throw IoError("truncated header: " + path.string());
    if (std::memcmp(header, "DNT1", 4) != 0)
        throw IoError("bad magic (expected DNT1): " + path.string());
    if (header[4] != 0x02)
        throw IoError("unsupported dtype " + std::to_string(header[4]) + ": " + path.string());
    const int ndim = header[5];
    if (ndim < 1 || ndim > 4)
        throw IoError("bad rank " + std::to_string(ndim) + ": " + path.string());
    std::vector<int> shape(static_cast<std::size_t>(ndim));
    for (int i = 0; i < ndim; ++i) {
        std::uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 4);
        if (!in) throw IoError("truncated dims: " + path.string());
        if (v == 0 || v > (1u << 30)) throw IoError("bad dim " + std::to_string(v) + ": " + path.string());
        shape[static_cast<std::size_t>(i)] = static_cast<int>(v);
    }
    auto t = Tensor::make(shape);
    in.read(reinterpret_cast<char*>(t->data.data()),
            static_cast<std::streamsize>(t->data.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(t->data.size() * sizeof(double)))
        throw IoError("truncated payload: " + path.string());
    return t;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for write: " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("short write: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return s;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace dnae

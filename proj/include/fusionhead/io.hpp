#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fusionhead::io {

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// Little-endian encoding helpers for the binary formats.
void put_u32(std::string& out, std::uint32_t v);
void put_f32(std::string& out, float v);
void put_f64(std::string& out, double v);

class ByteReader {
public:
    ByteReader(std::string_view bytes, std::string context)
        : bytes_(bytes), context_(std::move(context)) {}

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
    std::string_view take(std::size_t n);
    std::uint32_t u32();
    float f32();
    double f64();

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
    std::string context_;
};

// Shortest decimal form that round-trips a double (17 significant digits).
std::string format_double(double v);

}  // namespace fusionhead::io

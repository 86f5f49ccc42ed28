#pragma once

// Little-endian binary primitives shared by the dataset cache and checkpoints.

#include "mclet/autograd.hpp"

#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mclet::io {

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_i32(std::ostream& os, std::int32_t v);
void write_f64(std::ostream& os, double v);
void write_string(std::ostream& os, std::string_view s);
void write_matrix(std::ostream& os, const Matrix& m);
void write_ints(std::ostream& os, const std::vector<int>& v);

std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
std::int32_t read_i32(std::istream& is);
double read_f64(std::istream& is);
std::string read_string(std::istream& is);
Matrix read_matrix(std::istream& is);
std::vector<int> read_ints(std::istream& is);

/// Writes the 8-byte magic followed by a u32 format version.
void write_header(std::ostream& os, std::string_view magic, std::uint32_t version);
/// Validates magic and version; throws FormatError on mismatch.
void read_header(std::istream& is, std::string_view magic, std::uint32_t version);

/// 64-bit FNV-1a over the labels, each terminated by a NUL byte.
std::uint64_t fingerprint(const std::vector<std::string>& labels);

} // namespace mclet::io

#include "mclet/binary_io.hpp"

#include <array>
#include <bit>
#include <cstring>

namespace mclet::io {

namespace {

static_assert(std::endian::native == std::endian::little, "binary format assumes little-endian hosts");

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
    if (!os) {
        throw std::runtime_error("binary write failed");
    }
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) {
        throw FormatError("unexpected end of binary stream");
    }
    return v;
}

// Guards against absurd sizes from a corrupt file before allocating.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 34;

} // namespace

void write_u32(std::ostream& os, std::uint32_t v) { put(os, v); }
void write_u64(std::ostream& os, std::uint64_t v) { put(os, v); }
void write_i32(std::ostream& os, std::int32_t v) { put(os, v); }
void write_f64(std::ostream& os, double v) { put(os, v); }

void write_string(std::ostream& os, std::string_view s) {
    write_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void write_matrix(std::ostream& os, const Matrix& m) {
    write_u64(os, static_cast<std::uint64_t>(m.rows()));
    write_u64(os, static_cast<std::uint64_t>(m.cols()));
    // Column-major, as Eigen stores it.
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(m.size() * sizeof(double)));
}

void write_ints(std::ostream& os, const std::vector<int>& v) {
    write_u64(os, v.size());
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(int)));
}

std::uint32_t read_u32(std::istream& is) { return get<std::uint32_t>(is); }
std::uint64_t read_u64(std::istream& is) { return get<std::uint64_t>(is); }
std::int32_t read_i32(std::istream& is) { return get<std::int32_t>(is); }
double read_f64(std::istream& is) { return get<double>(is); }

std::string read_string(std::istream& is) {
    const std::uint64_t n = read_u64(is);
    if (n > kMaxElements) {
        throw FormatError("string length out of range");
    }
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) {
        throw FormatError("truncated string");
    }
    return s;
}

Matrix read_matrix(std::istream& is) {
    const std::uint64_t rows = read_u64(is);
    const std::uint64_t cols = read_u64(is);
    if (rows > kMaxElements || cols > kMaxElements || rows * cols > kMaxElements) {
        throw FormatError("matrix shape out of range");
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!is) {
        throw FormatError("truncated matrix");
    }
    return m;
}

std::vector<int> read_ints(std::istream& is) {
    const std::uint64_t n = read_u64(is);
    if (n > kMaxElements) {
        throw FormatError("int array length out of range");
    }
    std::vector<int> v(n);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(int)));
    if (!is) {
        throw FormatError("truncated int array");
    }
    return v;
}

void write_header(std::ostream& os, std::string_view magic, std::uint32_t version) {
    std::array<char, 8> buf{};
    std::memcpy(buf.data(), magic.data(), std::min<std::size_t>(magic.size(), buf.size()));
    os.write(buf.data(), buf.size());
    write_u32(os, version);
}

void read_header(std::istream& is, std::string_view magic, std::uint32_t version) {
    std::array<char, 8> want{};
    std::memcpy(want.data(), magic.data(), std::min<std::size_t>(magic.size(), want.size()));
    std::array<char, 8> got{};
    is.read(got.data(), got.size());
    if (!is || got != want) {
        throw FormatError("bad magic header, expected " + std::string(magic));
    }
    const std::uint32_t v = read_u32(is);
    if (v != version) {
        throw FormatError("unsupported format version " + std::to_string(v) + " (expected " +
                          std::to_string(version) + ")");
    }
}

std::uint64_t fingerprint(const std::vector<std::string>& labels) {
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&h](unsigned char c) {
        h ^= c;
        h *= 1099511628211ull;
    };
    for (const auto& s : labels) {
        for (unsigned char c : s) mix(c);
        mix(0);
    }
    return h;
}

} // namespace mclet::io

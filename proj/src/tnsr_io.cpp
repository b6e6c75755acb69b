#include "stylepipe/tnsr_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace stylepipe {

static_assert(std::endian::native == std::endian::little,
              "TNSR1 writer assumes a little-endian host");

namespace {
constexpr char kMagic[5] = {'T', 'N', 'S', 'R', '1'};
}

void write_tnsr(std::ostream& os, const Tensor& t) {
    os.write(kMagic, 5);
    const uint32_t rank = static_cast<uint32_t>(t.rank());
    os.write(reinterpret_cast<const char*>(&rank), 4);
    for (int i = 0; i < t.rank(); ++i) {
        const uint64_t e = static_cast<uint64_t>(t.extent(i));
        os.write(reinterpret_cast<const char*>(&e), 8);
    }
    if constexpr (sizeof(real) == 8) {
        os.write(reinterpret_cast<const char*>(t.data()), 8 * t.numel());
    } else {
        std::vector<double> buf(t.data(), t.data() + t.numel());
        os.write(reinterpret_cast<const char*>(buf.data()), 8 * t.numel());
    }
    if (!os) throw IoError("TNSR1 write failed");
}

Tensor read_tnsr(std::istream& is) {
    char magic[5];
    is.read(magic, 5);
    if (!is || std::memcmp(magic, kMagic, 5) != 0) throw IoError("bad TNSR1 magic");
    uint32_t rank = 0;
    is.read(reinterpret_cast<char*>(&rank), 4);
    if (!is || rank > 16) throw IoError("bad TNSR1 rank");
    Shape shape(rank);
    for (uint32_t i = 0; i < rank; ++i) {
        uint64_t e = 0;
        is.read(reinterpret_cast<char*>(&e), 8);
        shape[i] = static_cast<int64_t>(e);
    }
    const int64_t n = numel_of(shape);
    std::vector<double> buf(static_cast<size_t>(n));
    is.read(reinterpret_cast<char*>(buf.data()), 8 * n);
    if (!is) throw IoError("truncated TNSR1 payload");
    std::vector<real> vals(buf.begin(), buf.end());
    return Tensor::from_vector(std::move(shape), std::move(vals));
}

void save_tnsr(const std::string& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path);
    write_tnsr(f, t);
}

Tensor load_tnsr(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    return read_tnsr(f);
}

}  // namespace stylepipe

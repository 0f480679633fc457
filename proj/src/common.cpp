#include "paml/common.hpp"

#include <cstring>

namespace paml {

namespace {
void hash_bytes(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
}
}  // namespace

std::uint64_t checksum(const std::vector<const Matrix*>& mats) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const Matrix* m : mats) {
        const Index r = m->rows(), c = m->cols();
        hash_bytes(h, &r, sizeof(r));
        hash_bytes(h, &c, sizeof(c));
        hash_bytes(h, m->data(), sizeof(double) * static_cast<std::size_t>(m->size()));
    }
    return h;
}

std::uint64_t checksum(const std::vector<Matrix*>& mats) {
    return checksum(std::vector<const Matrix*>(mats.begin(), mats.end()));
}

std::uint64_t checksum(const Matrix& m) { return checksum({&m}); }

}  // namespace paml

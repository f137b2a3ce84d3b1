#include "gradmesh/serialize.hpp"

#include "gradmesh/errors.hpp"

#include <bit>
#include <cstring>

namespace gradmesh {

namespace {

void put_u64_le(std::uint8_t* dst, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) dst[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t get_u64_le(const std::uint8_t* src) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(src[i]) << (8 * i);
    return v;
}

} // namespace

std::vector<std::uint8_t> serialize_f64(const Eigen::VectorXd& values) {
    const auto n = static_cast<std::uint64_t>(values.size());
    std::vector<std::uint8_t> out(kHeaderBytes + 8 * n);
    put_u64_le(out.data(), n);
    static_assert(std::endian::native == std::endian::little,
                  "encoder assumes a little-endian host");
    std::memcpy(out.data() + kHeaderBytes, values.data(), 8 * n);
    return out;
}

Eigen::VectorXd deserialize_f64(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kHeaderBytes)
        throw ContractError("f64 payload shorter than its length header");
    const std::uint64_t n = get_u64_le(bytes.data());
    if (bytes.size() != kHeaderBytes + 8 * n)
        throw ContractError("f64 payload length does not match its header");
    Eigen::VectorXd values(static_cast<Eigen::Index>(n));
    std::memcpy(values.data(), bytes.data() + kHeaderBytes, 8 * n);
    return values;
}

} // namespace gradmesh

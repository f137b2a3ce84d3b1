#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace gradmesh {

// Wire format for every value that crosses a substrate boundary:
// an 8-byte little-endian element count followed by the elements as
// little-endian IEEE-754 doubles. Byte lengths are therefore a pure
// function of element count, which the traffic counters rely on.
inline constexpr std::size_t kHeaderBytes = 8;

std::vector<std::uint8_t> serialize_f64(const Eigen::VectorXd& values);
Eigen::VectorXd deserialize_f64(const std::vector<std::uint8_t>& bytes);

// Serialized size of an n-element vector.
inline std::size_t serialized_size(std::size_t n) { return kHeaderBytes + 8 * n; }

// Data bytes exclusive of the length header (the "payload" the traffic
// closed forms are stated in).
inline std::size_t payload_size(std::size_t n) { return 8 * n; }

} // namespace gradmesh

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace slv::ip {

enum class Family { V4, V6 };

// Raw network-order address bytes; IPv4 uses the first four.
struct Address {
  Family family{Family::V4};
  std::array<std::uint8_t, 16> bytes{};

  [[nodiscard]] int bit_width() const noexcept { return family == Family::V4 ? 32 : 128; }
  friend bool operator==(const Address &, const Address &) = default;
};

std::optional<Address> parse_address(std::string_view text);
bool is_valid_address(std::string_view text);
std::string to_string(const Address &addr);

// Zero every bit after the first `prefix_len`.
Address masked(const Address &addr, int prefix_len);

struct Cidr {
  Address network; // already masked
  int prefix_len{0};
};

// "10.0.0.0/8", "2001:db8::/32"; a bare address is a host route.
std::optional<Cidr> parse_cidr(std::string_view text);

struct HostPort {
  std::string host;
  std::uint16_t port{0};
};

// "1.2.3.4", "1.2.3.4:8080", "[::1]:8080", "::1". The port is
// `default_port` when absent. Host must be a literal address.
std::optional<HostPort> parse_host_port(std::string_view text, std::uint16_t default_port);

} // namespace slv::ip

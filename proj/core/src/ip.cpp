#include "slv/ip.hpp"

#include <arpa/inet.h>

#include <charconv>
#include <cstring>

namespace slv::ip {

std::optional<Address> parse_address(std::string_view text) {
  if (text.empty() || text.size() > INET6_ADDRSTRLEN) {
    return std::nullopt;
  }
  const std::string s(text);
  Address addr;
  if (s.find(':') == std::string::npos) {
    in_addr v4{};
    if (inet_pton(AF_INET, s.c_str(), &v4) != 1) {
      return std::nullopt;
    }
    addr.family = Family::V4;
    std::memcpy(addr.bytes.data(), &v4, 4);
    return addr;
  }
  in6_addr v6{};
  if (inet_pton(AF_INET6, s.c_str(), &v6) != 1) {
    return std::nullopt;
  }
  addr.family = Family::V6;
  std::memcpy(addr.bytes.data(), &v6, 16);
  return addr;
}

bool is_valid_address(std::string_view text) { return parse_address(text).has_value(); }

std::string to_string(const Address &addr) {
  char buf[INET6_ADDRSTRLEN] = {};
  const int af = addr.family == Family::V4 ? AF_INET : AF_INET6;
  inet_ntop(af, addr.bytes.data(), buf, sizeof(buf));
  return buf;
}

Address masked(const Address &addr, int prefix_len) {
  Address out = addr;
  const int width = addr.bit_width();
  for (int bit = prefix_len; bit < width; ++bit) {
    out.bytes[static_cast<std::size_t>(bit / 8)] &= static_cast<std::uint8_t>(~(0x80u >> (bit % 8)));
  }
  return out;
}

std::optional<Cidr> parse_cidr(std::string_view text) {
  const auto slash = text.find('/');
  const auto addr = parse_address(text.substr(0, slash));
  if (!addr) {
    return std::nullopt;
  }
  int len = addr->bit_width();
  if (slash != std::string_view::npos) {
    const std::string_view digits = text.substr(slash + 1);
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), len);
    if (ec != std::errc{} || ptr != digits.data() + digits.size() || len < 0 ||
        len > addr->bit_width()) {
      return std::nullopt;
    }
  }
  return Cidr{masked(*addr, len), len};
}

std::optional<HostPort> parse_host_port(std::string_view text, std::uint16_t default_port) {
  std::string_view host = text;
  std::string_view port_text;
  bool has_port = false;
  if (!text.empty() && text.front() == '[') {
    const auto close = text.find(']');
    if (close == std::string_view::npos) {
      return std::nullopt;
    }
    host = text.substr(1, close - 1);
    const std::string_view rest = text.substr(close + 1);
    if (!rest.empty()) {
      if (rest.front() != ':') {
        return std::nullopt;
      }
      port_text = rest.substr(1);
      has_port = true;
    }
  } else if (text.find(':') == text.rfind(':') && text.find(':') != std::string_view::npos) {
    // exactly one colon: IPv4 with port
    const auto colon = text.find(':');
    host = text.substr(0, colon);
    port_text = text.substr(colon + 1);
    has_port = true;
  }
  if (!is_valid_address(host)) {
    return std::nullopt;
  }
  std::uint16_t port = default_port;
  if (has_port) {
    unsigned value = 0;
    const auto [ptr, ec] =
        std::from_chars(port_text.data(), port_text.data() + port_text.size(), value);
    if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || value == 0 ||
        value > 65535) {
      return std::nullopt;
    }
    port = static_cast<std::uint16_t>(value);
  }
  return HostPort{std::string(host), port};
}

} // namespace slv::ip

#pragma once

#include <chrono>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "slv/geo.hpp"
#include "slv/ip.hpp"

namespace slv {

// Source of asserted (unverified) server locations.
class Locator {
public:
  virtual ~Locator() = default;
  // Throws UnknownAddress when there is no assertion for `address` and
  // ProviderUnavailable when the backing service fails.
  virtual geo::Location locate(std::string_view address) = 0;
};

// Longest-prefix match over CIDR rows. One hash table per (family, prefix
// length); lookups probe lengths from longest to shortest.
class PrefixTable {
public:
  // Re-inserting an identical prefix replaces its location.
  void insert(const ip::Cidr &prefix, const geo::Location &loc);
  [[nodiscard]] std::optional<geo::Location> lookup(const ip::Address &addr) const;
  [[nodiscard]] std::size_t size() const noexcept { return size_; }

private:
  struct BytesHash {
    std::size_t operator()(const std::array<std::uint8_t, 16> &b) const noexcept;
  };
  using Bucket = std::unordered_map<std::array<std::uint8_t, 16>, geo::Location, BytesHash>;
  // key: prefix length, longest first
  std::map<int, Bucket, std::greater<>> v4_;
  std::map<int, Bucket, std::greater<>> v6_;
  std::size_t size_{0};
};

// Rows `cidr,lat,lon`; blank lines and '#' comments skipped. Throws
// ParseError with the offending line.
PrefixTable parse_prefix_table(std::istream &in);

class StaticTableLocator final : public Locator {
public:
  explicit StaticTableLocator(PrefixTable table) : table_(std::move(table)) {}
  static StaticTableLocator from_file(const std::filesystem::path &path);

  geo::Location locate(std::string_view address) override;

private:
  PrefixTable table_;
};

// GETs `url_template` with "{ip}" substituted and reads numeric `lat` and
// `lon` from the JSON body. 404 maps to UnknownAddress; transport errors,
// other statuses and malformed bodies to ProviderUnavailable.
class HttpLocator final : public Locator {
public:
  explicit HttpLocator(std::string url_template,
                       std::chrono::milliseconds timeout = std::chrono::seconds{5});

  geo::Location locate(std::string_view address) override;

private:
  std::string base_;  // scheme://host[:port]
  std::string path_;  // path and query, still templated
  std::chrono::milliseconds timeout_;
};

} // namespace slv

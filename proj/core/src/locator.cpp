#include "slv/locator.hpp"

#include <charconv>
#include <fstream>

#include "httplib.h"
#include "json.hpp"

#include "slv/error.hpp"

namespace slv {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::optional<double> parse_double(std::string_view text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    return std::nullopt;
  }
  return v;
}

} // namespace

std::size_t PrefixTable::BytesHash::operator()(const std::array<std::uint8_t, 16> &b) const noexcept {
  // FNV-1a
  std::uint64_t h = 1469598103934665603ULL;
  for (auto byte : b) {
    h ^= byte;
    h *= 1099511628211ULL;
  }
  return static_cast<std::size_t>(h);
}

void PrefixTable::insert(const ip::Cidr &prefix, const geo::Location &loc) {
  auto &by_len = prefix.network.family == ip::Family::V4 ? v4_ : v6_;
  auto &bucket = by_len[prefix.prefix_len];
  const auto key = ip::masked(prefix.network, prefix.prefix_len).bytes;
  if (bucket.insert_or_assign(key, loc).second) {
    ++size_;
  }
}

std::optional<geo::Location> PrefixTable::lookup(const ip::Address &addr) const {
  const auto &by_len = addr.family == ip::Family::V4 ? v4_ : v6_;
  for (const auto &[len, bucket] : by_len) {
    const auto it = bucket.find(ip::masked(addr, len).bytes);
    if (it != bucket.end()) {
      return it->second;
    }
  }
  return std::nullopt;
}

PrefixTable parse_prefix_table(std::istream &in) {
  PrefixTable table;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') {
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string_view::npos || line.find(',', c2 + 1) != std::string_view::npos) {
      throw ParseError(line_no, "expected 3 fields (cidr,lat,lon)");
    }
    const auto cidr = ip::parse_cidr(trim(line.substr(0, c1)));
    if (!cidr) {
      throw ParseError(line_no, "invalid CIDR '" + std::string(line.substr(0, c1)) + "'");
    }
    const auto lat = parse_double(trim(line.substr(c1 + 1, c2 - c1 - 1)));
    const auto lon = parse_double(trim(line.substr(c2 + 1)));
    if (!lat || !lon || *lat < -90.0 || *lat > 90.0 || *lon < -180.0 || *lon > 180.0) {
      throw ParseError(line_no, "invalid coordinates");
    }
    table.insert(*cidr, geo::Location(*lat, *lon));
  }
  return table;
}

StaticTableLocator StaticTableLocator::from_file(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open location table '" + path.string() + "'");
  }
  return StaticTableLocator(parse_prefix_table(in));
}

geo::Location StaticTableLocator::locate(std::string_view address) {
  const auto addr = ip::parse_address(address);
  if (!addr) {
    throw InvalidArgument("not an IP address: '" + std::string(address) + "'");
  }
  const auto loc = table_.lookup(*addr);
  if (!loc) {
    throw UnknownAddress("no location assertion for " + std::string(address));
  }
  return *loc;
}

HttpLocator::HttpLocator(std::string url_template, std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  const auto scheme_end = url_template.find("://");
  if (scheme_end == std::string::npos || url_template.compare(0, scheme_end, "http") != 0) {
    throw InvalidArgument("locator URL must start with http://: " + url_template);
  }
  const auto path_start = url_template.find('/', scheme_end + 3);
  base_ = url_template.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url_template.substr(path_start);
  if (path_.find("{ip}") == std::string::npos) {
    throw InvalidArgument("locator URL template lacks an {ip} placeholder: " + url_template);
  }
}

geo::Location HttpLocator::locate(std::string_view address) {
  if (!ip::is_valid_address(address)) {
    throw InvalidArgument("not an IP address: '" + std::string(address) + "'");
  }
  std::string path = path_;
  for (auto pos = path.find("{ip}"); pos != std::string::npos; pos = path.find("{ip}")) {
    path.replace(pos, 4, address);
  }

  httplib::Client client(base_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());

  const auto res = client.Get(path);
  if (!res) {
    throw ProviderUnavailable("location provider " + base_ + " unreachable: " +
                              httplib::to_string(res.error()));
  }
  if (res->status == 404) {
    throw UnknownAddress("location provider has no entry for " + std::string(address));
  }
  if (res->status != 200) {
    throw ProviderUnavailable("location provider returned HTTP " + std::to_string(res->status));
  }
  try {
    const auto body = nlohmann::json::parse(res->body);
    return geo::Location(body.at("lat").get<double>(), body.at("lon").get<double>());
  } catch (const std::exception &e) {
    throw ProviderUnavailable(std::string("location provider sent an unusable body: ") + e.what());
  }
}

} // namespace slv

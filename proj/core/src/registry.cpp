#include "slv/registry.hpp"

#include <charconv>
#include <fstream>
#include <set>

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

double parse_degrees(std::string_view text, std::size_t line, const char *what) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ParseError(line, std::string("invalid ") + what + " '" + std::string(text) + "'");
  }
  return value;
}

} // namespace

VerifierRegistry::VerifierRegistry(std::vector<VerifierEntry> entries)
    : entries_(std::move(entries)) {
  if (entries_.size() < 3) {
    throw InsufficientVerifiers("need at least 3 verifiers, got " +
                                std::to_string(entries_.size()));
  }
  std::set<std::string> ids;
  for (const auto &e : entries_) {
    if (!ids.insert(e.id).second) {
      throw InvalidArgument("duplicate verifier id '" + e.id + "'");
    }
  }
}

const VerifierEntry *VerifierRegistry::find(const std::string &id) const {
  for (const auto &e : entries_) {
    if (e.id == id) {
      return &e;
    }
  }
  return nullptr;
}

std::vector<VerifierSite> VerifierRegistry::sites() const {
  std::vector<VerifierSite> out;
  out.reserve(entries_.size());
  for (const auto &e : entries_) {
    out.push_back({e.id, e.loc});
  }
  return out;
}

VerifierRegistry parse_verifier_registry(std::istream &in, std::uint16_t agent_port) {
  std::vector<VerifierEntry> entries;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty()) {
      continue;
    }
    std::vector<std::string_view> cols;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      cols.push_back(trim(line.substr(start, comma - start)));
      if (comma == std::string_view::npos) {
        break;
      }
      start = comma + 1;
    }
    if (cols.size() != 3) {
      throw ParseError(line_no, "expected 3 fields (ip,lat,lon), got " +
                                    std::to_string(cols.size()));
    }
    const auto address = ip::parse_host_port(cols[0], agent_port);
    if (!address) {
      throw ParseError(line_no, "invalid IP address '" + std::string(cols[0]) + "'");
    }
    const double lat = parse_degrees(cols[1], line_no, "latitude");
    const double lon = parse_degrees(cols[2], line_no, "longitude");
    if (lat < -90.0 || lat > 90.0) {
      throw ParseError(line_no, "latitude out of range: " + std::string(cols[1]));
    }
    if (lon < -180.0 || lon > 180.0) {
      throw ParseError(line_no, "longitude out of range: " + std::string(cols[2]));
    }
    entries.push_back({"v" + std::to_string(entries.size() + 1), *address, geo::Location(lat, lon)});
  }
  return VerifierRegistry(std::move(entries));
}

VerifierRegistry load_verifier_registry(const std::filesystem::path &path,
                                        std::uint16_t agent_port) {
  std::ifstream in(path);
  if (!in) {
    throw Error("cannot open verifier registry '" + path.string() + "'");
  }
  return parse_verifier_registry(in, agent_port);
}

} // namespace slv

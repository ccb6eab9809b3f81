#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <vector>

#include "slv/geo.hpp"
#include "slv/ip.hpp"
#include "slv/verify.hpp"

namespace slv {

struct VerifierEntry {
  std::string id;
  ip::HostPort address;
  geo::Location loc;
};

class VerifierRegistry {
public:
  VerifierRegistry() = default;
  // Throws InsufficientVerifiers below three entries, InvalidArgument on
  // duplicate ids.
  explicit VerifierRegistry(std::vector<VerifierEntry> entries);

  [[nodiscard]] const std::vector<VerifierEntry> &entries() const noexcept { return entries_; }
  [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
  [[nodiscard]] const VerifierEntry *find(const std::string &id) const;
  [[nodiscard]] std::vector<VerifierSite> sites() const;

private:
  std::vector<VerifierEntry> entries_;
};

// One verifier per line: `ip,lat,lon`. Blank lines are skipped and ids
// are assigned "v1", "v2", ... in line order. The address may carry an
// agent port ("10.0.0.1:7708", "[::1]:7708"); `agent_port` otherwise.
VerifierRegistry parse_verifier_registry(std::istream &in,
                                         std::uint16_t agent_port = 7707);
VerifierRegistry load_verifier_registry(const std::filesystem::path &path,
                                        std::uint16_t agent_port = 7707);

} // namespace slv

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slv/geo.hpp"
#include "slv/json_io.hpp"
#include "slv/time.hpp"
#include "slv/verify.hpp"

namespace slv::pinning {

inline constexpr int kDefaultRmax = 3;

enum class Outcome { Critical, Suspicious, Unsuspicious };

std::string_view to_string(Outcome outcome);

// Server locations pinned for one domain.
struct PinEntry {
  std::string name;
  std::vector<IpInfo> ips;
  std::vector<geo::Circle> ver_regs;
  int rmax{kDefaultRmax};
  Timestamp when_veri{};
  Timestamp when_pin{};

  friend bool operator==(const PinEntry &, const PinEntry &) = default;
};

// Pins keyed by exact lowercase domain name. Not internally synchronized:
// callers hold exclusive access while evaluating.
class PinStore {
public:
  [[nodiscard]] const PinEntry *find(std::string_view domain) const;
  [[nodiscard]] PinEntry *find(std::string_view domain);
  void upsert(PinEntry entry);
  bool erase(std::string_view domain);
  [[nodiscard]] std::size_t size() const noexcept { return pins_.size(); }
  [[nodiscard]] bool empty() const noexcept { return pins_.empty(); }
  [[nodiscard]] const std::map<std::string, PinEntry> &entries() const noexcept { return pins_; }

  // Throws InvalidArgument if n < 1 or n is below the number of regions
  // already pinned, and Error if the domain is not pinned.
  void set_rmax(std::string_view domain, int n);

  friend bool operator==(const PinStore &, const PinStore &) = default;

private:
  std::map<std::string, PinEntry> pins_;
};

std::string normalize_domain(std::string_view domain);

// Index of the first region whose centre is within its radius of `loc`.
std::optional<std::size_t> containment_check(const geo::Location &loc,
                                             std::span<const geo::Circle> regs);

// Called after every evaluation; a policy layer decides what to do with
// the outcome.
using OutcomeHook =
    std::function<void(std::string_view domain, Outcome, const VerificationResult &)>;

struct EvaluateOptions {
  // rmax for a pin created by this call.
  int rmax_for_new_pin{kDefaultRmax};
  OutcomeHook hook;
};

// Cross-checks a verification result against the domain's pins:
//   pinned,   not verified                 -> Critical
//   pinned,   verified, inside a region    -> record/refresh IP, Unsuspicious
//   pinned,   verified, outside, room left -> add region, Unsuspicious
//   pinned,   verified, outside, full      -> Critical
//   unpinned, verified                     -> create pin, Unsuspicious
//   unpinned, not verified                 -> Suspicious
// Critical and Suspicious never modify the store.
Outcome evaluate_pin(PinStore &store, std::string_view domain, const VerificationResult &r,
                     Timestamp now, const EvaluateOptions &opts = {});

// JSON array of PinEntry objects.
Json encode(const PinStore &store);
PinStore decode_store(const Json &doc);

// Atomic replace through a temporary file in the same directory.
void persist_store(const PinStore &store, const std::filesystem::path &path);
// A missing file is an empty store; unreadable content throws CorruptStore
// and leaves the file untouched.
PinStore load_store(const std::filesystem::path &path);

} // namespace slv::pinning

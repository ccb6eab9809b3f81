#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "slv/geo.hpp"
#include "slv/time.hpp"
#include "slv/verify.hpp"

namespace slv {

// Manager-side record: <IP, asserted location, when verified, result,
// centre, radius>, plus the expiry derived from the TTL.
struct CacheEntry {
  std::string ip;
  geo::Location asserted_loc;
  Timestamp when_veri{};
  bool veri_passed{false};
  std::optional<geo::Circle> region;
  std::optional<FailureReason> reason;
  Timestamp expires_at{};

  [[nodiscard]] VerificationResult to_result() const;
  friend bool operator==(const CacheEntry &, const CacheEntry &) = default;
};

// Durable backing for the in-memory cache.
class CacheStore {
public:
  virtual ~CacheStore() = default;
  virtual std::vector<CacheEntry> load_all() = 0;
  virtual void put(const CacheEntry &entry) = 0;
  virtual void erase(const std::string &ip) = 0;
};

// Single-table SQLite file keyed by IP address.
class SqliteCacheStore final : public CacheStore {
public:
  explicit SqliteCacheStore(const std::filesystem::path &path);
  ~SqliteCacheStore() override;
  SqliteCacheStore(const SqliteCacheStore &) = delete;
  SqliteCacheStore &operator=(const SqliteCacheStore &) = delete;

  std::vector<CacheEntry> load_all() override;
  void put(const CacheEntry &entry) override;
  void erase(const std::string &ip) override;

private:
  struct Db;
  std::mutex mutex_;
  std::unique_ptr<Db> db_;
};

// Verification results keyed by IP address (never by domain). Positive and
// negative results share one TTL. Many readers, one writer.
class VerificationCache {
public:
  explicit VerificationCache(std::chrono::seconds ttl, std::unique_ptr<CacheStore> store = nullptr);

  // Unexpired entry for `ip`, if any.
  [[nodiscard]] std::optional<CacheEntry> find(const std::string &ip, Timestamp now) const;
  // Insert or replace; expires at result.when_veri + ttl.
  void put(const VerificationResult &result);
  // Drops entries with expires_at <= now and returns how many.
  std::size_t evict_expired(Timestamp now);

  [[nodiscard]] std::size_t size() const;
  [[nodiscard]] std::chrono::seconds ttl() const noexcept { return ttl_; }

private:
  std::chrono::seconds ttl_;
  std::unique_ptr<CacheStore> store_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, CacheEntry> entries_;
};

} // namespace slv

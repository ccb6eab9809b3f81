#include "slv/cache.hpp"

#include <sqlite3.h>

#include "slv/error.hpp"

namespace slv {

VerificationResult CacheEntry::to_result() const {
  VerificationResult r;
  r.ip = {ip, asserted_loc};
  r.veri_passed = veri_passed;
  r.region = region;
  r.when_veri = when_veri;
  r.reason = reason;
  return r;
}

// ---------------------------------------------------------------------------
// SqliteCacheStore

struct SqliteCacheStore::Db {
  sqlite3 *handle{nullptr};

  ~Db() { sqlite3_close(handle); }

  void exec(const char *sql) {
    char *err = nullptr;
    if (sqlite3_exec(handle, sql, nullptr, nullptr, &err) != SQLITE_OK) {
      std::string message = err ? err : "unknown error";
      sqlite3_free(err);
      throw Error("cache store: " + message);
    }
  }

  struct Statement {
    sqlite3_stmt *stmt{nullptr};
    Statement(sqlite3 *db, const char *sql) {
      if (sqlite3_prepare_v2(db, sql, -1, &stmt, nullptr) != SQLITE_OK) {
        throw Error(std::string("cache store: ") + sqlite3_errmsg(db));
      }
    }
    ~Statement() { sqlite3_finalize(stmt); }
    Statement(const Statement &) = delete;
    Statement &operator=(const Statement &) = delete;
  };
};

SqliteCacheStore::SqliteCacheStore(const std::filesystem::path &path) : db_(std::make_unique<Db>()) {
  if (sqlite3_open(path.c_str(), &db_->handle) != SQLITE_OK) {
    throw Error("cannot open cache store '" + path.string() + "': " +
                sqlite3_errmsg(db_->handle));
  }
  db_->exec("PRAGMA journal_mode=WAL;");
  db_->exec("CREATE TABLE IF NOT EXISTS verification_cache ("
            " ip TEXT PRIMARY KEY,"
            " lat REAL NOT NULL, lon REAL NOT NULL,"
            " when_veri INTEGER NOT NULL,"
            " veri_passed INTEGER NOT NULL,"
            " centre_lat REAL, centre_lon REAL, radius REAL,"
            " reason TEXT,"
            " expires_at INTEGER NOT NULL);");
}

SqliteCacheStore::~SqliteCacheStore() = default;

std::vector<CacheEntry> SqliteCacheStore::load_all() {
  std::lock_guard lock(mutex_);
  Db::Statement q(db_->handle,
                  "SELECT ip, lat, lon, when_veri, veri_passed, centre_lat, centre_lon, radius,"
                  " reason, expires_at FROM verification_cache;");
  std::vector<CacheEntry> out;
  while (sqlite3_step(q.stmt) == SQLITE_ROW) {
    try {
      CacheEntry e;
      e.ip = reinterpret_cast<const char *>(sqlite3_column_text(q.stmt, 0));
      e.asserted_loc = geo::Location(sqlite3_column_double(q.stmt, 1), sqlite3_column_double(q.stmt, 2));
      e.when_veri = Timestamp{std::chrono::seconds{sqlite3_column_int64(q.stmt, 3)}};
      e.veri_passed = sqlite3_column_int(q.stmt, 4) != 0;
      if (sqlite3_column_type(q.stmt, 7) != SQLITE_NULL) {
        e.region = geo::Circle(
            geo::Location(sqlite3_column_double(q.stmt, 5), sqlite3_column_double(q.stmt, 6)),
            sqlite3_column_double(q.stmt, 7));
      }
      if (sqlite3_column_type(q.stmt, 8) != SQLITE_NULL) {
        e.reason = failure_reason_from_string(
            reinterpret_cast<const char *>(sqlite3_column_text(q.stmt, 8)));
      }
      e.expires_at = Timestamp{std::chrono::seconds{sqlite3_column_int64(q.stmt, 9)}};
      if (e.veri_passed == e.region.has_value()) {
        out.push_back(std::move(e));
      }
    } catch (const InvalidArgument &) {
      // unusable row; re-verification will overwrite it
    }
  }
  return out;
}

void SqliteCacheStore::put(const CacheEntry &e) {
  std::lock_guard lock(mutex_);
  Db::Statement q(db_->handle,
                  "INSERT OR REPLACE INTO verification_cache (ip, lat, lon, when_veri,"
                  " veri_passed, centre_lat, centre_lon, radius, reason, expires_at)"
                  " VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10);");
  sqlite3_bind_text(q.stmt, 1, e.ip.c_str(), -1, SQLITE_TRANSIENT);
  sqlite3_bind_double(q.stmt, 2, e.asserted_loc.lat());
  sqlite3_bind_double(q.stmt, 3, e.asserted_loc.lon());
  sqlite3_bind_int64(q.stmt, 4, e.when_veri.time_since_epoch().count());
  sqlite3_bind_int(q.stmt, 5, e.veri_passed ? 1 : 0);
  if (e.region) {
    sqlite3_bind_double(q.stmt, 6, e.region->centre().lat());
    sqlite3_bind_double(q.stmt, 7, e.region->centre().lon());
    sqlite3_bind_double(q.stmt, 8, e.region->radius());
  }
  if (e.reason) {
    const std::string reason(to_string(*e.reason));
    sqlite3_bind_text(q.stmt, 9, reason.c_str(), -1, SQLITE_TRANSIENT);
  }
  sqlite3_bind_int64(q.stmt, 10, e.expires_at.time_since_epoch().count());
  if (sqlite3_step(q.stmt) != SQLITE_DONE) {
    throw Error(std::string("cache store write failed: ") + sqlite3_errmsg(db_->handle));
  }
}

void SqliteCacheStore::erase(const std::string &ip) {
  std::lock_guard lock(mutex_);
  Db::Statement q(db_->handle, "DELETE FROM verification_cache WHERE ip = ?1;");
  sqlite3_bind_text(q.stmt, 1, ip.c_str(), -1, SQLITE_TRANSIENT);
  sqlite3_step(q.stmt);
}

// ---------------------------------------------------------------------------
// VerificationCache

VerificationCache::VerificationCache(std::chrono::seconds ttl, std::unique_ptr<CacheStore> store)
    : ttl_(ttl), store_(std::move(store)) {
  if (ttl_.count() <= 0) {
    throw InvalidArgument("cache TTL must be positive");
  }
  if (store_) {
    for (auto &e : store_->load_all()) {
      entries_.insert_or_assign(e.ip, e);
    }
  }
}

std::optional<CacheEntry> VerificationCache::find(const std::string &ip, Timestamp now) const {
  std::shared_lock lock(mutex_);
  const auto it = entries_.find(ip);
  if (it == entries_.end() || it->second.expires_at <= now) {
    return std::nullopt;
  }
  return it->second;
}

void VerificationCache::put(const VerificationResult &result) {
  CacheEntry e;
  e.ip = result.ip.value;
  e.asserted_loc = result.ip.loc;
  e.when_veri = result.when_veri;
  e.veri_passed = result.veri_passed;
  e.region = result.region;
  e.reason = result.reason;
  e.expires_at = result.when_veri + ttl_;

  std::unique_lock lock(mutex_);
  if (store_) {
    store_->put(e);
  }
  entries_.insert_or_assign(e.ip, std::move(e));
}

std::size_t VerificationCache::evict_expired(Timestamp now) {
  std::unique_lock lock(mutex_);
  std::size_t removed = 0;
  for (auto it = entries_.begin(); it != entries_.end();) {
    if (it->second.expires_at <= now) {
      if (store_) {
        store_->erase(it->first);
      }
      it = entries_.erase(it);
      ++removed;
    } else {
      ++it;
    }
  }
  return removed;
}

std::size_t VerificationCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

} // namespace slv

#include "slv/pinning.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <system_error>

#include <unistd.h>

#include "slv/error.hpp"

namespace slv::pinning {

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
  case Outcome::Critical:
    return "Critical";
  case Outcome::Suspicious:
    return "Suspicious";
  case Outcome::Unsuspicious:
    return "Unsuspicious";
  }
  return "Unknown";
}

std::string normalize_domain(std::string_view domain) {
  std::string out(domain);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  while (!out.empty() && out.back() == '.') {
    out.pop_back();
  }
  return out;
}

const PinEntry *PinStore::find(std::string_view domain) const {
  const auto it = pins_.find(normalize_domain(domain));
  return it == pins_.end() ? nullptr : &it->second;
}

PinEntry *PinStore::find(std::string_view domain) {
  const auto it = pins_.find(normalize_domain(domain));
  return it == pins_.end() ? nullptr : &it->second;
}

void PinStore::upsert(PinEntry entry) {
  entry.name = normalize_domain(entry.name);
  if (entry.name.empty()) {
    throw InvalidArgument("pin domain name must not be empty");
  }
  if (entry.rmax < 1) {
    throw InvalidArgument("rmax must be >= 1");
  }
  if (entry.ver_regs.size() > static_cast<std::size_t>(entry.rmax)) {
    throw InvalidArgument("pin for '" + entry.name + "' holds more regions than rmax");
  }
  for (std::size_t i = 0; i < entry.ips.size(); ++i) {
    for (std::size_t j = i + 1; j < entry.ips.size(); ++j) {
      if (entry.ips[i].value == entry.ips[j].value) {
        throw InvalidArgument("pin for '" + entry.name + "' lists " + entry.ips[i].value + " twice");
      }
    }
  }
  auto key = entry.name;
  pins_.insert_or_assign(std::move(key), std::move(entry));
}

bool PinStore::erase(std::string_view domain) { return pins_.erase(normalize_domain(domain)) > 0; }

void PinStore::set_rmax(std::string_view domain, int n) {
  PinEntry *pin = find(domain);
  if (!pin) {
    throw Error("domain '" + std::string(domain) + "' is not pinned");
  }
  if (n < 1) {
    throw InvalidArgument("rmax must be >= 1");
  }
  if (static_cast<std::size_t>(n) < pin->ver_regs.size()) {
    throw InvalidArgument("rmax " + std::to_string(n) + " is below the " +
                          std::to_string(pin->ver_regs.size()) + " regions already pinned");
  }
  pin->rmax = n;
}

std::optional<std::size_t> containment_check(const geo::Location &loc,
                                             std::span<const geo::Circle> regs) {
  for (std::size_t i = 0; i < regs.size(); ++i) {
    if (geo::great_circle_distance(loc, regs[i].centre()) <= regs[i].radius()) {
      return i;
    }
  }
  return std::nullopt;
}

namespace {

Outcome decide(PinStore &store, std::string_view domain, const VerificationResult &r,
               Timestamp now, const EvaluateOptions &opts) {
  if (PinEntry *pin = store.find(domain)) {
    if (!r.veri_passed) {
      return Outcome::Critical;
    }
    if (containment_check(r.ip.loc, pin->ver_regs)) {
      const auto it = std::find_if(pin->ips.begin(), pin->ips.end(),
                                   [&](const IpInfo &known) { return known.value == r.ip.value; });
      if (it != pin->ips.end()) {
        it->loc = r.ip.loc;
      } else {
        pin->ips.push_back(r.ip);
      }
      pin->when_veri = r.when_veri;
      return Outcome::Unsuspicious;
    }
    if (pin->ver_regs.size() < static_cast<std::size_t>(pin->rmax)) {
      pin->ver_regs.push_back(*r.region);
      return Outcome::Unsuspicious;
    }
    return Outcome::Critical;
  }

  if (!r.veri_passed) {
    return Outcome::Suspicious;
  }
  PinEntry pin;
  pin.name = normalize_domain(domain);
  pin.ips = {r.ip};
  pin.ver_regs = {*r.region};
  pin.rmax = opts.rmax_for_new_pin;
  pin.when_veri = r.when_veri;
  pin.when_pin = now;
  store.upsert(std::move(pin));
  return Outcome::Unsuspicious;
}

} // namespace

Outcome evaluate_pin(PinStore &store, std::string_view domain, const VerificationResult &r,
                     Timestamp now, const EvaluateOptions &opts) {
  if (r.veri_passed && !r.region) {
    throw InvalidArgument("verified result without a region");
  }
  const Outcome outcome = decide(store, domain, r, now, opts);
  if (opts.hook) {
    opts.hook(normalize_domain(domain), outcome, r);
  }
  return outcome;
}

Json encode(const PinStore &store) {
  Json doc = Json::array();
  for (const auto &[name, pin] : store.entries()) {
    Json ips = Json::array();
    for (const auto &ip : pin.ips) {
      ips.push_back(slv::encode(ip));
    }
    Json regs = Json::array();
    for (const auto &c : pin.ver_regs) {
      regs.push_back(slv::encode(c));
    }
    doc.push_back({{"name", pin.name},
                   {"ips", std::move(ips)},
                   {"ver_regs", std::move(regs)},
                   {"rmax", pin.rmax},
                   {"when_veri", format_rfc3339(pin.when_veri)},
                   {"when_pin", format_rfc3339(pin.when_pin)}});
  }
  return doc;
}

PinStore decode_store(const Json &doc) {
  if (!doc.is_array()) {
    throw CorruptStore("pin store must be a JSON array");
  }
  PinStore store;
  try {
    for (const auto &item : doc) {
      PinEntry pin;
      pin.name = item.at("name").get<std::string>();
      for (const auto &ip : item.at("ips")) {
        pin.ips.push_back(decode_ip_info(ip));
      }
      for (const auto &c : item.at("ver_regs")) {
        pin.ver_regs.push_back(decode_circle(c));
      }
      pin.rmax = item.at("rmax").get<int>();
      pin.when_veri = parse_rfc3339(item.at("when_veri").get<std::string>());
      pin.when_pin = parse_rfc3339(item.at("when_pin").get<std::string>());
      if (store.find(pin.name)) {
        throw CorruptStore("duplicate pin for '" + pin.name + "'");
      }
      store.upsert(std::move(pin));
    }
  } catch (const CorruptStore &) {
    throw;
  } catch (const std::exception &e) {
    throw CorruptStore(std::string("invalid pin entry: ") + e.what());
  }
  return store;
}

void persist_store(const PinStore &store, const std::filesystem::path &path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) {
      throw Error("cannot write pin store '" + tmp.string() + "'");
    }
    out << encode(store).dump(2) << '\n';
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw Error("short write to pin store '" + tmp.string() + "'");
    }
  }
  std::filesystem::rename(tmp, path);
}

PinStore load_store(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) {
    if (!std::filesystem::exists(path)) {
      return {};
    }
    throw CorruptStore("cannot read pin store '" + path.string() + "'");
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  Json doc;
  try {
    doc = Json::parse(buffer.str());
  } catch (const Json::exception &e) {
    throw CorruptStore("pin store '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return decode_store(doc);
}

} // namespace slv::pinning

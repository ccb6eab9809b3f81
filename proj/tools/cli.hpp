#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "slv/pinning.hpp"
#include "slv/verify.hpp"

namespace slv::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitSuspicious = 2;
inline constexpr int kExitCritical = 3;

int exit_code_for(pinning::Outcome outcome);

enum class OutputFormat { Table, Json };

struct CliConfig {
  std::string manager_url{"http://127.0.0.1:8080"};
  std::filesystem::path pin_store_path;
  OutputFormat format{OutputFormat::Table};
};

// Accepts http://host[:port] with an optional trailing slash.
bool is_valid_manager_url(const std::string &url);

// Literal addresses pass through; names go through the system resolver,
// IPv4 answers first. nullopt if the name does not resolve.
std::optional<std::string> resolve_host(const std::string &host);

// Entry point shared by the `slv` binary and the tests. `args` excludes
// argv[0].
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace slv::cli

#pragma once

#include <iosfwd>
#include <string>

#include "attviz/aggregate.hpp"
#include "attviz/schema.hpp"

namespace attviz::cli {

// Exit status shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitDataError = 1;   // validation or parse failure
inline constexpr int kExitUsageError = 2;  // bad flags, unreadable files, busy port

/// One row per (document, token) in file order; columns
/// doc_id,token_index,token followed by the requested schemes in table order.
std::string render_aggregates_csv(const Dataset& ds, SchemeSet schemes);
std::string render_aggregates_json(const Dataset& ds, SchemeSet schemes);

/// RFC 4180 quoting, only when needed.
std::string csv_field(const std::string& s);

/// Entry point for the attviz binary. argv[0] is the program name.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace attviz::cli

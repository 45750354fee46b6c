#pragma once

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

namespace jdd::cli {

// Runs one command line (without the program name) and returns the exit
// status. Errors are reported as a single JSON line on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Parses "0..4" (inclusive range) or "0,2,5".
std::vector<std::size_t> parse_index_list(const std::string& text, const std::string& field);

// Parallel decode sessions allowed by JDD2_THREADS (default 1).
std::size_t session_threads();

}  // namespace jdd::cli

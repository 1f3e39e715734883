#pragma once

#include <ostream>

namespace eclip {

/// Entry point of the `eclip` tool. Exit codes: 0 ok, 1 runtime failure,
/// 2 bad configuration or usage.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace eclip

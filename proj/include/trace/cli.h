#pragma once

#include <ostream>

namespace trace {

// Exit codes: 0 success, 1 usage, 2 data or format error, 3 internal error.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace trace

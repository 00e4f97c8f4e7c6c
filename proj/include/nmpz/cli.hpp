#pragma once

#include <ostream>

namespace nmpz {

// Exit codes: 0 success or stable verdict, 1 input or computation error,
// 2 assess verdict other than stable.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace nmpz

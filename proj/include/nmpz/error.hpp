#pragma once

#include <stdexcept>
#include <string>

namespace nmpz {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Prefixes a stage label so pipeline failures say where they happened.
inline Error staged(const std::string& stage, const std::exception& e)
{
    return Error(stage + ": " + e.what());
}

} // namespace nmpz

#pragma once

#include <stdexcept>
#include <string>

namespace polarsdf {

// Two failure families map onto the CLI exit codes: bad inputs (2) and
// numerical breakdown (3).
class InvalidInput : public std::runtime_error {
public:
    explicit InvalidInput(const std::string& what) : std::runtime_error(what) {}
};

class NumericalFailure : public std::runtime_error {
public:
    explicit NumericalFailure(const std::string& what) : std::runtime_error(what) {}
};

} // namespace polarsdf

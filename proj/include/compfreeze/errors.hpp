#pragma once

#include <stdexcept>
#include <string>

namespace compfreeze {

// Invalid arguments are reported as std::invalid_argument throughout.

/// Malformed or out-of-vocabulary input data.
class InvalidData : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training loss became non-finite.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace compfreeze

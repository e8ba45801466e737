#pragma once

#include <stdexcept>
#include <string>

namespace nbv {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MathError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Fitter diverged (non-finite loss).
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace nbv

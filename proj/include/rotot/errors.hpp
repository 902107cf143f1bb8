#pragma once

#include <stdexcept>
#include <string>

namespace rotot {

// Thrown on unreadable or structurally invalid data files (CLI exit code 2).
struct FileFormatError : std::runtime_error {
  explicit FileFormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when tensor shapes, mode partitions, or rank requests are inconsistent
// (CLI exit code 3).
struct ShapeError : std::invalid_argument {
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Thrown when a fit cannot proceed (all cases down-weighted, degenerate scale,
// too few usable cases). CLI exit code 4.
struct FitError : std::runtime_error {
  explicit FitError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace rotot

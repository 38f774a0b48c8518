#pragma once

#include <stdexcept>
#include <string>

namespace strcgp {

// Base class for every error thrown by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidMatrix : Error { using Error::Error; };
struct NotHurwitz : Error { using Error::Error; };
struct SingularMatrix : Error { using Error::Error; };
struct NotPositiveSemidefinite : Error { using Error::Error; };
struct UnsupportedKernel : Error { using Error::Error; };
struct DegenerateGrid : Error { using Error::Error; };
struct InvalidTimeStep : Error { using Error::Error; };
struct InvalidShrinkage : Error { using Error::Error; };
struct InvalidInput : Error { using Error::Error; };
struct SingularInnovation : Error { using Error::Error; };
struct InvalidStart : Error { using Error::Error; };

// File ingestion errors.
struct IoError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct DuplicatePoint : Error { using Error::Error; };
struct GridMismatch : Error { using Error::Error; };

}  // namespace strcgp

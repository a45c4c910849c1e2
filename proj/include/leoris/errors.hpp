#pragma once

#include <stdexcept>
#include <string>

namespace leoris {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};
struct MeanNotConverged : Error {
  using Error::Error;
};
struct NotPsd : Error {
  using Error::Error;
};
struct CoincidentPoints : Error {
  using Error::Error;
};
struct IndexOutOfRange : Error {
  using Error::Error;
};
struct SingularNoise : Error {
  using Error::Error;
};
struct StepUnderflow : Error {
  using Error::Error;
};
struct NoRisLinks : Error {
  using Error::Error;
};
struct DegenerateSpread : Error {
  using Error::Error;
};
struct InnovationSingular : Error {
  using Error::Error;
};
struct LengthMismatch : Error {
  using Error::Error;
};

}  // namespace leoris

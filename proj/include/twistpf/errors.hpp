#pragma once

#include <stdexcept>
#include <string>

namespace twistpf {

struct NotPositiveDefinite : std::runtime_error {
  explicit NotPositiveDefinite(const std::string& what) : std::runtime_error(what) {}
};

struct AllNegInf : std::runtime_error {
  explicit AllNegInf(const std::string& what) : std::runtime_error(what) {}
};

struct DegenerateWeights : std::runtime_error {
  explicit DegenerateWeights(const std::string& what) : std::runtime_error(what) {}
};

struct ParticleDegeneracy : std::runtime_error {
  explicit ParticleDegeneracy(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidParameter : std::invalid_argument {
  explicit InvalidParameter(const std::string& what) : std::invalid_argument(what) {}
};

struct ShapeMismatch : std::invalid_argument {
  explicit ShapeMismatch(const std::string& what) : std::invalid_argument(what) {}
};

struct SingularGeometry : std::runtime_error {
  explicit SingularGeometry(const std::string& what) : std::runtime_error(what) {}
};

struct NonLinearModel : std::runtime_error {
  explicit NonLinearModel(const std::string& what) : std::runtime_error(what) {}
};

struct TooFewSamples : std::invalid_argument {
  explicit TooFewSamples(const std::string& what) : std::invalid_argument(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct EstimatorFailure : std::runtime_error {
  explicit EstimatorFailure(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace twistpf

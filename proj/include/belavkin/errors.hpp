// belavkin-lab: error taxonomy shared by the library, the CLI and the bindings.
#pragma once

#include <stdexcept>
#include <string>

namespace belavkin {

// One exception class with a code keeps the CLI exit-code mapping in a single
// place: validation-type problems exit 2, runtime model problems exit 3.
enum class ErrorCode {
  dimension,     // shape mismatch in a matrix operation
  validation,    // an invariant of a domain type is violated
  assumption,    // a model-building assumption does not hold
  covariance,    // derived noise covariance is not PSD
  construction,  // a constructed object failed its postcondition check
  resonance,     // eigenvalue gap in 2*pi*Z: phi_iD not invertible
  degeneracy,    // all measurement outcomes have vanishing probability
  divergence,    // an integrator state left its admissible region
  config,        // scenario file malformed or contradictory
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const { return code_; }

  // true for problems detectable before any simulation work starts
  bool is_validation_class() const {
    switch (code_) {
      case ErrorCode::degeneracy:
      case ErrorCode::divergence:
        return false;
      default:
        return true;
    }
  }

  static const char* code_name(ErrorCode c) {
    switch (c) {
      case ErrorCode::dimension: return "dimension";
      case ErrorCode::validation: return "validation";
      case ErrorCode::assumption: return "assumption";
      case ErrorCode::covariance: return "covariance";
      case ErrorCode::construction: return "construction";
      case ErrorCode::resonance: return "resonance";
      case ErrorCode::degeneracy: return "degeneracy";
      case ErrorCode::divergence: return "divergence";
      case ErrorCode::config: return "config";
    }
    return "unknown";
  }

 private:
  ErrorCode code_;
};

}  // namespace belavkin

#ifndef VOTKIT_ERRORS_HPP
#define VOTKIT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace votkit {

// Invalid configuration or run manifest (bad levels, missing provider
// fields, unreadable config file).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Remote request failed after all retries (carries the last HTTP status
// or transport condition in the message).
struct TransportError : std::runtime_error {
  explicit TransportError(const std::string& msg) : std::runtime_error(msg) {}
};

// Remote endpoint rejected the request with a non-retryable status.
struct RequestError : std::runtime_error {
  explicit RequestError(const std::string& msg) : std::runtime_error(msg) {}
};

// Stored data is inconsistent with the manifest (unknown package label,
// corrupt record).
struct DataIntegrityError : std::runtime_error {
  explicit DataIntegrityError(const std::string& msg)
      : std::runtime_error(msg) {}
};

// Model coefficients are not identified by the data (names the offending
// attribute column).
struct IdentificationError : std::runtime_error {
  explicit IdentificationError(const std::string& msg)
      : std::runtime_error(msg) {}
};

// A package has no time/cost trade-off pairs to average over.
struct UndefinedRatioError : std::runtime_error {
  explicit UndefinedRatioError(const std::string& msg)
      : std::runtime_error(msg) {}
};

}  // namespace votkit

#endif  // VOTKIT_ERRORS_HPP

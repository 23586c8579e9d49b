#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace vortex {

/// Rejected input: a precondition on user-supplied data failed.
class InvalidInput : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Scenario/manifest text that failed to parse; carries line and column.
class ParseError : public std::runtime_error {
  public:
    ParseError(std::string msg, std::size_t line, std::size_t column)
        : std::runtime_error("parse error at line " + std::to_string(line) + ", column " +
                             std::to_string(column) + ": " + msg),
          line_(line),
          column_(column) {}

    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }

  private:
    std::size_t line_;
    std::size_t column_;
};

/// Integration produced a non-finite or runaway position.
class BlowUpError : public std::runtime_error {
  public:
    BlowUpError(std::size_t particle, double time)
        : std::runtime_error("integration blow-up: particle " + std::to_string(particle) +
                             " at t = " + std::to_string(time)),
          particle_(particle),
          time_(time) {}

    std::size_t particle() const { return particle_; }
    double time() const { return time_; }

  private:
    std::size_t particle_;
    double time_;
};

/// Requested snapshot time is not stored; names the bracketing stored times.
class SnapshotLookupError : public std::runtime_error {
  public:
    SnapshotLookupError(double requested, std::vector<double> nearest, std::string msg)
        : std::runtime_error(std::move(msg)), requested_(requested), nearest_(std::move(nearest)) {}

    double requested() const { return requested_; }
    const std::vector<double>& nearest() const { return nearest_; }

  private:
    double requested_;
    std::vector<double> nearest_;
};

/// Resume was attempted with a different integrator configuration; lists the
/// offending fields.
class ConfigMismatchError : public std::runtime_error {
  public:
    ConfigMismatchError(std::vector<std::string> fields, std::string diff)
        : std::runtime_error("configuration mismatch:\n" + diff), fields_(std::move(fields)) {}

    const std::vector<std::string>& fields() const { return fields_; }

  private:
    std::vector<std::string> fields_;
};

}  // namespace vortex

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace veilkit {

/// Base of every error the library throws.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Inputs are readable but violate a contract (shapes, ranges, names).
/// The CLI maps these to exit code 1.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Missing, unreadable or unwritable files. The CLI maps these to exit code 2.
class IoError : public Error {
public:
  using Error::Error;
};

/// A binary container could not be decoded.
class ParseError : public IoError {
public:
  ParseError(const std::string& source, std::size_t offset, const std::string& detail)
      : IoError(source + ": " + detail + " at offset " + std::to_string(offset)),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

private:
  std::size_t offset_;
};

/// Runs `fn`, prefixing any veilkit error message with `stage` while keeping
/// the error category.
template <class Fn>
decltype(auto) with_stage(const std::string& stage, Fn&& fn) {
  try {
    return fn();
  } catch (const ParseError& e) {
    throw IoError("[" + stage + "] " + e.what());
  } catch (const IoError& e) {
    throw IoError("[" + stage + "] " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError("[" + stage + "] " + e.what());
  }
}

}  // namespace veilkit

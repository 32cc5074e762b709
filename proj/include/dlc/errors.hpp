#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dlc {

// Broad failure classes. The CLI maps each one to its own exit status.
enum class ErrorKind {
  Validation,
  Shape,
  EnumerationTooLarge,
  Degenerate,
  UnseenPatch,
  Io,
  Usage,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class EnumerationTooLarge : public Error {
 public:
  EnumerationTooLarge(double outcomes, double bound)
      : Error(ErrorKind::EnumerationTooLarge,
              "enumeration would produce " + std::to_string(outcomes) +
                  " outcomes, above the bound of " + std::to_string(bound)),
        bound_(bound) {}
  double bound() const noexcept { return bound_; }

 private:
  double bound_;
};

class UnseenPatch : public Error {
 public:
  UnseenPatch(std::size_t patch_index, std::size_t block_index = 0)
      : Error(ErrorKind::UnseenPatch,
              "patch " + std::to_string(patch_index) + " (block " +
                  std::to_string(block_index) + ") is farther than gamma from every representative"),
        patch_index_(patch_index),
        block_index_(block_index) {}
  std::size_t patch_index() const noexcept { return patch_index_; }
  std::size_t block_index() const noexcept { return block_index_; }

 private:
  std::size_t patch_index_;
  std::size_t block_index_;
};

}  // namespace dlc

#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace svr {

// Malformed or missing user input: files, configs, arguments.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by the trainer when a loss or parameter turns non-finite.
class NumericalAbort : public std::runtime_error {
 public:
  NumericalAbort(const std::string& what, long iteration, std::string term,
                 long voxel)
      : std::runtime_error(what),
        iteration_(iteration),
        term_(std::move(term)),
        voxel_(voxel) {}

  long iteration() const noexcept { return iteration_; }
  const std::string& term() const noexcept { return term_; }
  // -1 when no single voxel could be blamed.
  long voxel() const noexcept { return voxel_; }

 private:
  long iteration_;
  std::string term_;
  long voxel_;
};

}  // namespace svr

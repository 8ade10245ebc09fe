#ifndef CRFORGE_ERRORS_HPP_
#define CRFORGE_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace crforge {

// Error taxonomy shared across the library. The CLI maps these onto
// process exit codes (usage=1, dataset=2, divergence=3, io=4).
class DegenerateInput : public std::runtime_error {
 public:
  explicit DegenerateInput(const std::string& what) : std::runtime_error(what) {}
};

class InvalidState : public std::logic_error {
 public:
  explicit InvalidState(const std::string& what) : std::logic_error(what) {}
};

class DatasetError : public std::runtime_error {
 public:
  explicit DatasetError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::string snapshot_path)
      : std::runtime_error(what), snapshot_path_(std::move(snapshot_path)) {}
  const std::string& snapshot_path() const { return snapshot_path_; }

 private:
  std::string snapshot_path_;
};

}  // namespace crforge

#endif  // CRFORGE_ERRORS_HPP_

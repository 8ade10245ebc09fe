#ifndef CRFORGE_CHECKPOINT_HPP_
#define CRFORGE_CHECKPOINT_HPP_

#include <Eigen/Core>
#include <string>
#include <vector>

namespace crforge {

// Single-file archive of named double tensors plus a JSON metadata blob.
// Doubles are stored raw (little-endian, column-major), so a save/load
// round-trip is bit-exact.
struct NamedTensor {
  std::string name;
  Eigen::MatrixXd data;
};

struct Archive {
  std::string meta_json;
  std::vector<NamedTensor> tensors;

  const Eigen::MatrixXd& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;
};

void write_archive(const std::string& path, const Archive& archive);
Archive read_archive(const std::string& path);

}  // namespace crforge

#endif  // CRFORGE_CHECKPOINT_HPP_

#ifndef CRFORGE_MEMORY_BANK_HPP_
#define CRFORGE_MEMORY_BANK_HPP_

#include <Eigen/Core>
#include <vector>

#include "crforge/rng.hpp"

namespace crforge {

// Fixed-capacity FIFO queue of unit-norm embeddings backed by a ring
// buffer. push normalizes incoming vectors, so the unit-norm invariant is
// self-enforcing regardless of caller discipline.
class MemoryBank {
 public:
  MemoryBank(int capacity, int dim);

  void push(const Eigen::MatrixXd& batch_rows);
  void push(const Eigen::VectorXd& v);

  // Live entries in FIFO order (oldest first), as an owning copy.
  Eigen::MatrixXd snapshot() const;

  // Fills an empty bank to capacity with random unit vectors so the relation
  // and contrastive losses are computable from step 1.
  void prefill(Rng& rng);

  int capacity() const { return capacity_; }
  int dim() const { return dim_; }
  int live() const { return filled_ ? capacity_ : cursor_; }
  bool filled() const { return filled_; }
  int cursor() const { return cursor_; }

  // Raw ring storage access for checkpointing.
  const Eigen::MatrixXd& storage() const { return storage_; }
  void restore(const Eigen::MatrixXd& storage, int cursor, bool filled);

 private:
  int capacity_;
  int dim_;
  Eigen::MatrixXd storage_;  // capacity x dim
  int cursor_ = 0;
  bool filled_ = false;
};

// Row-concatenation of both banks' live entries, real rows first.
Eigen::MatrixXd combined_anchors(const MemoryBank& bank_real, const MemoryBank& bank_fake);

}  // namespace crforge

#endif  // CRFORGE_MEMORY_BANK_HPP_

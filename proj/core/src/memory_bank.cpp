#include "crforge/memory_bank.hpp"

#include <stdexcept>

#include "crforge/embedding.hpp"
#include "crforge/errors.hpp"

namespace crforge {

MemoryBank::MemoryBank(int capacity, int dim) : capacity_(capacity), dim_(dim) {
  if (capacity <= 0 || dim <= 0) {
    throw std::invalid_argument("MemoryBank capacity and dim must be positive");
  }
  storage_ = Eigen::MatrixXd::Zero(capacity, dim);
}

void MemoryBank::push(const Eigen::MatrixXd& batch_rows) {
  if (batch_rows.cols() != dim_) {
    throw std::invalid_argument("MemoryBank::push: dimension mismatch");
  }
  for (Eigen::Index r = 0; r < batch_rows.rows(); ++r) {
    const double n = batch_rows.row(r).norm();
    if (n == 0.0) throw DegenerateInput("MemoryBank::push: zero embedding");
    storage_.row(cursor_) = batch_rows.row(r) / n;
    cursor_ = (cursor_ + 1) % capacity_;
    if (cursor_ == 0) filled_ = true;
  }
}

void MemoryBank::push(const Eigen::VectorXd& v) { push(Eigen::MatrixXd(v.transpose())); }

Eigen::MatrixXd MemoryBank::snapshot() const {
  const int n = live();
  Eigen::MatrixXd out(n, dim_);
  if (n == 0) return out;
  if (!filled_) {
    out = storage_.topRows(n);
  } else {
    // Oldest entry sits at the cursor once the ring has wrapped.
    const int tail = capacity_ - cursor_;
    out.topRows(tail) = storage_.bottomRows(tail);
    out.bottomRows(cursor_) = storage_.topRows(cursor_);
  }
  return out;
}

void MemoryBank::prefill(Rng& rng) {
  if (live() != 0) throw InvalidState("MemoryBank::prefill: bank is not empty");
  Eigen::MatrixXd rows(capacity_, dim_);
  for (int r = 0; r < capacity_; ++r) {
    for (int c = 0; c < dim_; ++c) rows(r, c) = rng.normal();
  }
  push(rows);
}

void MemoryBank::restore(const Eigen::MatrixXd& storage, int cursor, bool filled) {
  if (storage.rows() != capacity_ || storage.cols() != dim_) {
    throw std::invalid_argument("MemoryBank::restore: storage shape mismatch");
  }
  if (cursor < 0 || cursor >= capacity_) {
    throw std::invalid_argument("MemoryBank::restore: cursor out of range");
  }
  storage_ = storage;
  cursor_ = cursor;
  filled_ = filled;
}

Eigen::MatrixXd combined_anchors(const MemoryBank& bank_real, const MemoryBank& bank_fake) {
  if (bank_real.dim() != bank_fake.dim()) {
    throw std::invalid_argument("combined_anchors: banks disagree on dimension");
  }
  Eigen::MatrixXd real = bank_real.snapshot();
  Eigen::MatrixXd fake = bank_fake.snapshot();
  Eigen::MatrixXd out(real.rows() + fake.rows(), bank_real.dim());
  out.topRows(real.rows()) = real;
  out.bottomRows(fake.rows()) = fake;
  return out;
}

}  // namespace crforge

#ifndef CRFORGE_COMPRESSION_HPP_
#define CRFORGE_COMPRESSION_HPP_

#include <Eigen/Core>

#include "crforge/frame.hpp"

namespace crforge {

// 8x8 quantization step matrix; entries in [1, 255].
struct QuantizationTable {
  Eigen::Matrix<int, 8, 8> values;
};

struct CompressionConfig {
  int weak_quality = 80;
  int strong_quality = 25;
};

// Standard luminance quantization base table scaled by the usual quality
// convention: scale = 5000/q for q < 50, else 200 - 2q; each entry becomes
// clamp(round(entry * scale / 100), 1, 255). quality must lie in [1,100].
QuantizationTable quant_table_for_quality(int quality);

// Forward orthonormal type-II DCT, entrywise quantization (divide, round,
// multiply back), inverse DCT, clamp to [-128, 127]. Input values are
// expected in the centered pixel range [-128, 127].
Eigen::Matrix<double, 8, 8> dct_roundtrip_block(const Eigen::Matrix<double, 8, 8>& block,
                                                const QuantizationTable& table);

// Maps WEAK/STRONG onto their configured qualities; EXPLICIT passes its own
// quality through. RAW has no quality and is rejected.
int quality_for_level(const CompressionLevel& level, const CompressionConfig& config = {});

// RAW returns the frame untouched (bit-equal). Other levels run every
// channel through per-block DCT quantization on pixels scaled to
// [-128, 127], then map back into [0,1]. Frame dimensions must be
// multiples of 8.
FrameImage compress_frame(const FrameImage& frame, const CompressionLevel& level,
                          const CompressionConfig& config = {});

// Same pipeline for a single channel; exposed for tests and the synthetic
// data generator.
Eigen::MatrixXd compress_channel(const Eigen::MatrixXd& channel, const QuantizationTable& table);

// Orthonormal 8-point DCT-II basis (row u = basis function u). The synthetic
// data generator builds its high-frequency payload directly from it.
const Eigen::Matrix<double, 8, 8>& dct_basis_matrix();

}  // namespace crforge

#endif  // CRFORGE_COMPRESSION_HPP_

#include "crforge/compression.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace crforge {
namespace {

// Annex-K luminance table.
const int kBaseTable[8][8] = {
    {16, 11, 10, 16, 24, 40, 51, 61},   {12, 12, 14, 19, 26, 58, 60, 55},
    {14, 13, 16, 24, 40, 57, 69, 56},   {14, 17, 22, 29, 51, 87, 80, 62},
    {18, 22, 37, 56, 68, 109, 103, 77}, {24, 35, 55, 64, 81, 104, 113, 92},
    {49, 64, 78, 87, 103, 121, 120, 101}, {72, 92, 95, 98, 112, 100, 103, 99}};

using Block = Eigen::Matrix<double, 8, 8>;

const Block& dct_basis() {
  static const Block basis = [] {
    Block m;
    for (int u = 0; u < 8; ++u) {
      const double alpha = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) {
        m(u, x) = alpha * std::cos((2 * x + 1) * u * M_PI / 16.0);
      }
    }
    return m;
  }();
  return basis;
}

}  // namespace

const Eigen::Matrix<double, 8, 8>& dct_basis_matrix() { return dct_basis(); }

QuantizationTable quant_table_for_quality(int quality) {
  if (quality < 1 || quality > 100) {
    throw std::invalid_argument("quality must be in [1,100], got " + std::to_string(quality));
  }
  const double scale = quality < 50 ? 5000.0 / quality : 200.0 - 2.0 * quality;
  QuantizationTable table;
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) {
      const double scaled = std::round(kBaseTable[r][c] * scale / 100.0);
      table.values(r, c) = static_cast<int>(std::min(255.0, std::max(1.0, scaled)));
    }
  }
  return table;
}

Eigen::Matrix<double, 8, 8> dct_roundtrip_block(const Block& block, const QuantizationTable& table) {
  const Block& d = dct_basis();
  Block coeffs = d * block * d.transpose();
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) {
      const double q = static_cast<double>(table.values(r, c));
      coeffs(r, c) = std::round(coeffs(r, c) / q) * q;
    }
  }
  Block out = d.transpose() * coeffs * d;
  return out.cwiseMax(-128.0).cwiseMin(127.0);
}

int quality_for_level(const CompressionLevel& level, const CompressionConfig& config) {
  switch (level.kind) {
    case CompressionKind::kWeak:
      return config.weak_quality;
    case CompressionKind::kStrong:
      return config.strong_quality;
    case CompressionKind::kExplicit:
      return level.quality;
    case CompressionKind::kRaw:
      break;
  }
  throw std::invalid_argument("RAW has no compression quality");
}

Eigen::MatrixXd compress_channel(const Eigen::MatrixXd& channel, const QuantizationTable& table) {
  const Eigen::Index h = channel.rows();
  const Eigen::Index w = channel.cols();
  if (h % 8 != 0 || w % 8 != 0) {
    throw std::invalid_argument("channel dimensions must be multiples of 8");
  }
  // [0,1] -> centered [-128,127], per-block roundtrip, back to [0,1].
  Eigen::MatrixXd centered = channel.array() * 255.0 - 128.0;
  Eigen::MatrixXd out(h, w);
  for (Eigen::Index br = 0; br < h; br += 8) {
    for (Eigen::Index bc = 0; bc < w; bc += 8) {
      Block block = centered.block<8, 8>(br, bc);
      out.block<8, 8>(br, bc) = dct_roundtrip_block(block, table);
    }
  }
  return ((out.array() + 128.0) / 255.0).cwiseMax(0.0).cwiseMin(1.0);
}

FrameImage compress_frame(const FrameImage& frame, const CompressionLevel& level,
                          const CompressionConfig& config) {
  if (level.kind == CompressionKind::kRaw) return frame;
  if (frame.height() % 8 != 0 || frame.width() % 8 != 0) {
    throw std::invalid_argument("frame dimensions must be multiples of 8");
  }
  const QuantizationTable table = quant_table_for_quality(quality_for_level(level, config));
  FrameImage out = frame;
  for (auto& channel : out.channels) channel = compress_channel(channel, table);
  return out;
}

std::string to_string(const CompressionLevel& level) {
  switch (level.kind) {
    case CompressionKind::kRaw:
      return "raw";
    case CompressionKind::kWeak:
      return "weak";
    case CompressionKind::kStrong:
      return "strong";
    case CompressionKind::kExplicit:
      return std::to_string(level.quality);
  }
  return "?";
}

CompressionLevel parse_compression_level(const std::string& text) {
  if (text == "raw") return CompressionLevel::raw();
  if (text == "weak" || text == "c23") return CompressionLevel::weak();
  if (text == "strong" || text == "c40") return CompressionLevel::strong();
  try {
    size_t consumed = 0;
    const int q = std::stoi(text, &consumed);
    if (consumed == text.size()) return CompressionLevel::explicit_quality(q);
  } catch (const std::exception&) {
  }
  throw std::invalid_argument("unknown compression level: " + text);
}

}  // namespace crforge

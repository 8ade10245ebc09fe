#ifndef CRFORGE_FRAME_HPP_
#define CRFORGE_FRAME_HPP_

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace crforge {

enum class Label : std::uint8_t { kReal = 0, kFake = 1 };

inline int label_index(Label l) { return l == Label::kReal ? 0 : 1; }
inline const char* label_name(Label l) { return l == Label::kReal ? "real" : "fake"; }

// A single 3-channel face-crop image with pixels in [0,1]. Channels are
// stored as column-major H x W matrices. Height and width must be positive
// multiples of 8 so the block-DCT compression path applies cleanly.
struct FrameImage {
  std::array<Eigen::MatrixXd, 3> channels;
  std::string source_id;
  int frame_index = 0;

  int height() const { return static_cast<int>(channels[0].rows()); }
  int width() const { return static_cast<int>(channels[0].cols()); }

  static FrameImage zeros(int height, int width) {
    if (height <= 0 || width <= 0 || height % 8 != 0 || width % 8 != 0) {
      throw std::invalid_argument("FrameImage: dimensions must be positive multiples of 8");
    }
    FrameImage f;
    for (auto& c : f.channels) c = Eigen::MatrixXd::Zero(height, width);
    return f;
  }
};

enum class CompressionKind : std::uint8_t { kRaw, kWeak, kStrong, kExplicit };

struct CompressionLevel {
  CompressionKind kind = CompressionKind::kRaw;
  int quality = 0;  // meaningful only for kExplicit, in [1,100]

  static CompressionLevel raw() { return {CompressionKind::kRaw, 0}; }
  static CompressionLevel weak() { return {CompressionKind::kWeak, 0}; }
  static CompressionLevel strong() { return {CompressionKind::kStrong, 0}; }
  static CompressionLevel explicit_quality(int q) {
    if (q < 1 || q > 100) throw std::invalid_argument("explicit quality must be in [1,100]");
    return {CompressionKind::kExplicit, q};
  }

  bool operator==(const CompressionLevel&) const = default;
};

std::string to_string(const CompressionLevel& level);
// Parses "raw", "weak", "strong", or an integer quality like "75".
CompressionLevel parse_compression_level(const std::string& text);

}  // namespace crforge

#endif  // CRFORGE_FRAME_HPP_

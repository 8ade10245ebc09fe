#include <cmath>

#include "crforge/compression.hpp"
#include "crforge/rng.hpp"
#include "doctest.h"

using namespace crforge;

namespace {

// Annex-K luminance table, restated here as the oracle.
const int kLuminanceBase[8][8] = {
    {16, 11, 10, 16, 24, 40, 51, 61},   {12, 12, 14, 19, 26, 58, 60, 55},
    {14, 13, 16, 24, 40, 57, 69, 56},   {14, 17, 22, 29, 51, 87, 80, 62},
    {18, 22, 37, 56, 68, 109, 103, 77}, {24, 35, 55, 64, 81, 104, 113, 92},
    {49, 64, 78, 87, 103, 121, 120, 101}, {72, 92, 95, 98, 112, 100, 103, 99}};

FrameImage random_frame(int size, Rng& rng) {
  FrameImage f = FrameImage::zeros(size, size);
  for (auto& ch : f.channels) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) ch(y, x) = rng.uniform();
    }
  }
  return f;
}

// Band-limited waves plus faint sensor noise, the kind of content the
// pipeline actually sees. Pure white noise is not meaningful here: its DCT
// coefficients sit at the quantizer threshold where rounding can snap small
// values up onto the grid.
FrameImage textured_frame(int size, Rng& rng) {
  FrameImage f = FrameImage::zeros(size, size);
  struct Wave {
    double a, fx, fy, phase;
  };
  std::vector<Wave> waves;
  for (int j = 0; j < 5; ++j) {
    const double angle = rng.uniform(0.0, 2.0 * M_PI);
    const double freq = rng.uniform(0.01, 0.07);
    waves.push_back({rng.uniform(0.04, 0.1), freq * std::cos(angle), freq * std::sin(angle),
                     rng.uniform(0.0, 2.0 * M_PI)});
  }
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double v = 0.5;
        for (const auto& w : waves) {
          v += w.a * std::sin(2.0 * M_PI * (w.fx * x + w.fy * y) + w.phase);
        }
        v += rng.normal(0.0, 0.006);
        f.channels[c](y, x) = std::min(0.95, std::max(0.05, v));
      }
    }
  }
  return f;
}

double frame_mse(const FrameImage& a, const FrameImage& b) {
  double sum = 0.0;
  for (int c = 0; c < 3; ++c) sum += (a.channels[c] - b.channels[c]).array().square().sum();
  return sum / (3.0 * a.height() * a.width());
}

double high_freq_energy(const FrameImage& f) {
  const auto& basis = dct_basis_matrix();
  double energy = 0.0;
  for (int c = 0; c < 3; ++c) {
    const Eigen::MatrixXd centered = f.channels[c].array() * 255.0 - 128.0;
    for (int by = 0; by < f.height(); by += 8) {
      for (int bx = 0; bx < f.width(); bx += 8) {
        Eigen::Matrix<double, 8, 8> block = centered.block<8, 8>(by, bx);
        Eigen::Matrix<double, 8, 8> coeffs = basis * block * basis.transpose();
        for (int u = 0; u < 8; ++u) {
          for (int v = 0; v < 8; ++v) {
            if (u + v >= 4) energy += coeffs(u, v) * coeffs(u, v);
          }
        }
      }
    }
  }
  return energy;
}

}  // namespace

TEST_CASE("quality 50 reproduces the base table") {
  const QuantizationTable t = quant_table_for_quality(50);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) CHECK(t.values(r, c) == kLuminanceBase[r][c]);
  }
}

TEST_CASE("quality 100 clamps every entry to 1") {
  const QuantizationTable t = quant_table_for_quality(100);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) CHECK(t.values(r, c) == 1);
  }
}

TEST_CASE("lower quality dominates entrywise") {
  const QuantizationTable coarse = quant_table_for_quality(25);
  const QuantizationTable fine = quant_table_for_quality(80);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) CHECK(coarse.values(r, c) >= fine.values(r, c));
  }
}

TEST_CASE("quality out of range is rejected") {
  CHECK_THROWS_AS(quant_table_for_quality(0), std::invalid_argument);
  CHECK_THROWS_AS(quant_table_for_quality(101), std::invalid_argument);
}

TEST_CASE("dct roundtrip of the zero block is zero") {
  const QuantizationTable t = quant_table_for_quality(25);
  Eigen::Matrix<double, 8, 8> block = Eigen::Matrix<double, 8, 8>::Zero();
  CHECK(dct_roundtrip_block(block, t).cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("constant block survives an all-ones table") {
  QuantizationTable ones;
  ones.values.setOnes();
  Eigen::Matrix<double, 8, 8> block = Eigen::Matrix<double, 8, 8>::Constant(60.0);
  const auto out = dct_roundtrip_block(block, ones);
  CHECK((out.array() - 60.0).abs().maxCoeff() < 1e-6);
}

TEST_CASE("all-ones table bounds the roundtrip error by coefficient rounding") {
  QuantizationTable ones;
  ones.values.setOnes();
  Rng rng = seeded_rng(RngSeed{21}, "blocks");
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::Matrix<double, 8, 8> block;
    for (int r = 0; r < 8; ++r) {
      for (int c = 0; c < 8; ++c) block(r, c) = rng.uniform(-128.0, 127.0);
    }
    const auto out = dct_roundtrip_block(block, ones);
    CHECK((out - block).cwiseAbs().maxCoeff() <= 4.0);
  }
}

TEST_CASE("RAW compression is bit-identity") {
  Rng rng = seeded_rng(RngSeed{4}, "raw");
  const FrameImage f = random_frame(16, rng);
  const FrameImage out = compress_frame(f, CompressionLevel::raw());
  for (int c = 0; c < 3; ++c) CHECK(out.channels[c] == f.channels[c]);
}

TEST_CASE("constant frames stay constant; DC shift bounded by its quant step") {
  for (int quality : {80, 50, 25}) {
    const QuantizationTable table = quant_table_for_quality(quality);
    for (double value : {0.0, 60.0 / 255.0, 128.0 / 255.0, 130.0 / 255.0, 200.0 / 255.0, 1.0}) {
      FrameImage f = FrameImage::zeros(16, 16);
      for (auto& ch : f.channels) ch.setConstant(value);
      const FrameImage out = compress_frame(
          f, CompressionLevel::explicit_quality(quality));
      for (int c = 0; c < 3; ++c) {
        // Output is uniform: only the DC coefficient is nonzero.
        CHECK(out.channels[c].maxCoeff() - out.channels[c].minCoeff() < 1.0 / 255.0);
        // And the DC shift is at most (table_DC/2)/8 in centered pixel units.
        const double bound = table.values(0, 0) / 16.0 / 255.0 + 1e-9;
        CHECK(std::abs(out.channels[c](0, 0) - value) <= bound);
      }
    }
  }
}

TEST_CASE("weak quality survives constants within one 8-bit level") {
  Rng rng = seeded_rng(RngSeed{40}, "const");
  for (int trial = 0; trial < 10; ++trial) {
    const double value = std::floor(rng.uniform(0.0, 256.0)) / 255.0;
    FrameImage f = FrameImage::zeros(8, 8);
    for (auto& ch : f.channels) ch.setConstant(std::min(value, 1.0));
    const FrameImage out = compress_frame(f, CompressionLevel::weak());
    for (int c = 0; c < 3; ++c) {
      CHECK((out.channels[c].array() - f.channels[c].array()).abs().maxCoeff() <=
            1.0 / 255.0 + 1e-12);
    }
  }
}

TEST_CASE("stronger compression degrades textured frames more") {
  Rng rng = seeded_rng(RngSeed{6}, "texture");
  double mse25 = 0.0, mse80 = 0.0;
  for (int i = 0; i < 20; ++i) {
    const FrameImage f = textured_frame(16, rng);
    mse25 += frame_mse(f, compress_frame(f, CompressionLevel::explicit_quality(25)));
    mse80 += frame_mse(f, compress_frame(f, CompressionLevel::explicit_quality(80)));
  }
  CHECK(mse25 / 20.0 >= mse80 / 20.0);
}

TEST_CASE("recompression at the same quality does not add more error") {
  Rng rng = seeded_rng(RngSeed{8}, "idem");
  for (int quality : {80, 25}) {
    double first = 0.0, second = 0.0;
    for (int i = 0; i < 20; ++i) {
      const FrameImage f = random_frame(16, rng);
      const FrameImage once = compress_frame(f, CompressionLevel::explicit_quality(quality));
      const FrameImage twice = compress_frame(once, CompressionLevel::explicit_quality(quality));
      first += frame_mse(f, once);
      second += frame_mse(once, twice);
    }
    CHECK(second <= first);
  }
}

TEST_CASE("high-frequency energy is non-increasing as quality drops") {
  Rng rng = seeded_rng(RngSeed{10}, "energy");
  double e_raw = 0.0, e80 = 0.0, e50 = 0.0, e25 = 0.0;
  for (int i = 0; i < 20; ++i) {
    const FrameImage f = textured_frame(16, rng);
    e_raw += high_freq_energy(f);
    e80 += high_freq_energy(compress_frame(f, CompressionLevel::explicit_quality(80)));
    e50 += high_freq_energy(compress_frame(f, CompressionLevel::explicit_quality(50)));
    e25 += high_freq_energy(compress_frame(f, CompressionLevel::explicit_quality(25)));
  }
  const double eps = 1e-9;  // fully-erased bands compare as numeric zero
  CHECK(e_raw >= e80 - eps);
  CHECK(e80 >= e50 - eps);
  CHECK(e50 >= e25 - eps);
}

TEST_CASE("quality_for_level maps levels onto configured qualities") {
  CHECK(quality_for_level(CompressionLevel::weak()) == 80);
  CHECK(quality_for_level(CompressionLevel::strong()) == 25);
  CHECK(quality_for_level(CompressionLevel::explicit_quality(10)) == 10);
  CompressionConfig custom{90, 35};
  CHECK(quality_for_level(CompressionLevel::weak(), custom) == 90);
  CHECK(quality_for_level(CompressionLevel::strong(), custom) == 35);
  CHECK_THROWS_AS(quality_for_level(CompressionLevel::raw()), std::invalid_argument);
}

TEST_CASE("non-multiple-of-8 frames are rejected") {
  CHECK_THROWS_AS(FrameImage::zeros(12, 16), std::invalid_argument);
}

TEST_CASE("level strings round-trip") {
  CHECK(to_string(CompressionLevel::weak()) == "weak");
  CHECK(parse_compression_level("strong") == CompressionLevel::strong());
  CHECK(parse_compression_level("75") == CompressionLevel::explicit_quality(75));
  CHECK_THROWS_AS(parse_compression_level("banana"), std::invalid_argument);
}

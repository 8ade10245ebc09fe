#include <benchmark/benchmark.h>

#include "crforge/compression.hpp"
#include "crforge/losses.hpp"
#include "crforge/memory_bank.hpp"
#include "crforge/model.hpp"
#include "crforge/rng.hpp"

using namespace crforge;

namespace {

FrameImage random_frame(int size, Rng& rng) {
  FrameImage f = FrameImage::zeros(size, size);
  for (auto& ch : f.channels) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) ch(y, x) = rng.uniform();
    }
  }
  return f;
}

Eigen::MatrixXd random_rows(int n, int d, Rng& rng, bool unit = false) {
  Eigen::MatrixXd m(n, d);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < d; ++c) m(r, c) = rng.normal();
    if (unit) m.row(r).normalize();
  }
  return m;
}

void BM_CompressFrame64(benchmark::State& state) {
  Rng rng = seeded_rng(RngSeed{1}, "bench/compress");
  const FrameImage f = random_frame(64, rng);
  const CompressionLevel level =
      CompressionLevel::explicit_quality(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(compress_frame(f, level));
  }
}
BENCHMARK(BM_CompressFrame64)->Arg(80)->Arg(25);

void BM_RelationDistribution(benchmark::State& state) {
  Rng rng = seeded_rng(RngSeed{2}, "bench/relation");
  const int k = static_cast<int>(state.range(0));
  const Eigen::MatrixXd anchors = random_rows(k, 512, rng, true);
  const Eigen::MatrixXd z = random_rows(8, 512, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(relation_distribution_rows(z, anchors, 0.04));
  }
}
BENCHMARK(BM_RelationDistribution)->Arg(512)->Arg(4096)->Arg(32768);

void BM_BankPush(benchmark::State& state) {
  Rng rng = seeded_rng(RngSeed{3}, "bench/bank");
  MemoryBank bank(16384, 512);
  bank.prefill(rng);
  const Eigen::MatrixXd batch = random_rows(32, 512, rng);
  for (auto _ : state) {
    bank.push(batch);
  }
}
BENCHMARK(BM_BankPush);

void BM_EncoderForward(benchmark::State& state) {
  ModelConfig mc;
  mc.encoder.input_height = 64;
  mc.encoder.input_width = 64;
  mc.encoder.channel_widths = {16, 32, 64, 128};
  mc.encoder.feature_dim = 128;
  ModelBundle bundle = ModelBundle::create(mc, RngSeed{4}, false, 0.999);
  Rng rng = seeded_rng(RngSeed{5}, "bench/enc");
  std::vector<FrameImage> frames;
  for (int i = 0; i < 8; ++i) frames.push_back(random_frame(64, rng));
  const Eigen::MatrixXd rows = frames_to_rows(frames);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        encode_project_values(bundle.encoder_online, bundle.projector_online, rows));
  }
}
BENCHMARK(BM_EncoderForward);

void BM_VideoContrastive(benchmark::State& state) {
  Rng rng = seeded_rng(RngSeed{6}, "bench/nce");
  const Eigen::MatrixXd zw = random_rows(8, 512, rng);
  const Eigen::MatrixXd zp = random_rows(8, 512, rng);
  const Eigen::MatrixXd bank_r = random_rows(static_cast<int>(state.range(0)), 512, rng, true);
  const Eigen::MatrixXd bank_f = random_rows(static_cast<int>(state.range(0)), 512, rng, true);
  std::vector<Label> labels;
  for (int i = 0; i < 8; ++i) labels.push_back(i % 2 == 0 ? Label::kReal : Label::kFake);
  for (auto _ : state) {
    ad::Tape tape;
    ad::Value loss = video_contrastive_loss_graph(tape, tape.input(zw), zp, labels, bank_r,
                                                  bank_f, 0.07, ContrastiveReduction::kMean);
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.scalar());
  }
}
BENCHMARK(BM_VideoContrastive)->Arg(512)->Arg(16384);

}  // namespace

BENCHMARK_MAIN();

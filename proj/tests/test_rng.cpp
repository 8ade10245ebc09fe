#include <set>
#include <vector>

#include "crforge/rng.hpp"
#include "doctest.h"

using namespace crforge;

namespace {

std::vector<std::uint64_t> draws(Rng rng, int n) {
  std::vector<std::uint64_t> out;
  for (int i = 0; i < n; ++i) out.push_back(rng.next_u64());
  return out;
}

}  // namespace

TEST_CASE("identical (seed, tag) gives identical streams") {
  CHECK(draws(seeded_rng(RngSeed{7}, "pairs"), 100) == draws(seeded_rng(RngSeed{7}, "pairs"), 100));
}

TEST_CASE("distinct tags give distinct streams") {
  CHECK(draws(seeded_rng(RngSeed{7}, "pairs"), 100) != draws(seeded_rng(RngSeed{7}, "banks"), 100));
}

TEST_CASE("distinct seeds give distinct streams") {
  CHECK(draws(seeded_rng(RngSeed{7}, "pairs"), 100) != draws(seeded_rng(RngSeed{8}, "pairs"), 100));
}

TEST_CASE("uniform stays in [0,1) and uniform_index in range") {
  Rng rng = seeded_rng(RngSeed{3}, "u");
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(rng.uniform_index(17) < 17);
  }
}

TEST_CASE("uniform_index covers all residues") {
  Rng rng = seeded_rng(RngSeed{11}, "cover");
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 500; ++i) seen.insert(rng.uniform_index(8));
  CHECK(seen.size() == 8);
}

TEST_CASE("normal moments are roughly standard") {
  Rng rng = seeded_rng(RngSeed{5}, "n");
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("state round-trip resumes the stream") {
  Rng rng = seeded_rng(RngSeed{9}, "resume");
  rng.next_u64();
  const Rng::State st = rng.state();
  const auto expected = draws(rng, 10);
  Rng other;
  other.set_state(st);
  CHECK(draws(other, 10) == expected);
}

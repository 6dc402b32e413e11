#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "cace/rng.hpp"

using cace::RngStream;

TEST_CASE("same seed replays the same stream") {
  RngStream a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds and different keys give different streams") {
  RngStream a(1), b(2);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += (a.next_u64() == b.next_u64());
  CHECK(same == 0);

  RngStream k1 = RngStream::keyed(7, 100), k2 = RngStream::keyed(7, 101);
  same = 0;
  for (int i = 0; i < 64; ++i) same += (k1.next_u64() == k2.next_u64());
  CHECK(same == 0);
}

TEST_CASE("keyed streams do not depend on construction order") {
  const std::uint64_t x = RngStream::keyed(9, 5, 3).next_u64();
  RngStream other = RngStream::keyed(9, 5, 4);
  (void)other.next_u64();
  CHECK(RngStream::keyed(9, 5, 3).next_u64() == x);
}

TEST_CASE("combine is order-sensitive") {
  CHECK(RngStream::combine(1, 2) != RngStream::combine(2, 1));
}

TEST_CASE("uniform stays in [0,1) and uniform_open in (0,1)") {
  RngStream r(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double v = r.uniform_open();
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("uniform_int is unbiased across a small range") {
  RngStream r(11);
  const int n = 7;
  std::vector<long> hits(n, 0);
  const long draws = 70000;
  for (long i = 0; i < draws; ++i) ++hits[static_cast<size_t>(r.uniform_int(n))];
  const double expected = static_cast<double>(draws) / n;
  for (long h : hits) {
    // 5 sigma band around the binomial mean
    const double sd = std::sqrt(expected * (1.0 - 1.0 / n));
    CHECK(std::abs(h - expected) < 5.0 * sd);
  }
}

TEST_CASE("normal moments") {
  RngStream r(5);
  const long n = 200000;
  double sum = 0, sq = 0;
  for (long i = 0; i < n; ++i) {
    const double x = r.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("exponential and gamma moments") {
  RngStream r(6);
  const long n = 200000;
  double se = 0, sg = 0, sg2 = 0;
  for (long i = 0; i < n; ++i) {
    se += r.exponential(0.25);
    const double g = r.gamma(5.0, 1.0);
    sg += g;
    sg2 += g * g;
  }
  CHECK(std::abs(se / n - 4.0) < 0.05);        // mean 1/rate
  CHECK(std::abs(sg / n - 5.0) < 0.05);        // mean shape/rate
  const double gvar = sg2 / n - (sg / n) * (sg / n);
  CHECK(std::abs(gvar - 5.0) < 0.15);          // var shape/rate^2
}

TEST_CASE("gamma boost handles shape below one") {
  RngStream r(8);
  const long n = 200000;
  double s = 0;
  for (long i = 0; i < n; ++i) s += r.gamma(0.5, 2.0);
  CHECK(std::abs(s / n - 0.25) < 0.01);
}

TEST_CASE("student t is symmetric with heavier-than-normal tails") {
  RngStream r(9);
  const long n = 200000;
  double sum = 0;
  long beyond3 = 0;
  for (long i = 0; i < n; ++i) {
    const double x = r.student_t(4.0);
    sum += x;
    if (std::abs(x) > 3.0) ++beyond3;
  }
  CHECK(std::abs(sum / n) < 0.02);
  // P(|t4| > 3) ~ 0.040 vs 0.0027 for the normal
  CHECK(beyond3 > n * 0.02);
}

TEST_CASE("lognormal matches its closed-form mean") {
  RngStream r(10);
  const long n = 200000;
  double s = 0;
  for (long i = 0; i < n; ++i) s += r.lognormal(0.0, 1.0);
  CHECK(std::abs(s / n - std::exp(0.5)) < 0.05);
}

TEST_CASE("bernoulli frequency") {
  RngStream r(12);
  long hits = 0;
  const long n = 100000;
  for (long i = 0; i < n; ++i) hits += r.bernoulli(0.3);
  CHECK(std::abs(hits / static_cast<double>(n) - 0.3) < 0.01);
}

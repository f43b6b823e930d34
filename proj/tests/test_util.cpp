#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <portmon/util.hpp>

#include "support/tmpdir.hpp"

using namespace portmon;

TEST_CASE("splitmix64 is deterministic and sensitive to input") {
  CHECK(util::splitmix64(1) == util::splitmix64(1));
  CHECK(util::splitmix64(1) != util::splitmix64(2));
  CHECK(util::mix_key(1, 2) != util::mix_key(2, 1));
}

TEST_CASE("fnv1a distinguishes strings and is stable") {
  CHECK(util::fnv1a("sensor-1") == util::fnv1a("sensor-1"));
  CHECK(util::fnv1a("sensor-1") != util::fnv1a("sensor-2"));
  CHECK(util::fnv1a("") != util::fnv1a("a"));
}

TEST_CASE("counter-keyed stream gives random access equal to sequential") {
  const util::RandomStream stream(42);
  util::SeqRng seq(42);
  std::vector<double> forward;
  for (int i = 0; i < 100; ++i) forward.push_back(seq.uniform());
  for (int i = 99; i >= 0; --i) {
    CHECK(stream.uniform(static_cast<std::uint64_t>(i)) == forward[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("uniform values stay in [0,1) with a plausible mean") {
  util::SeqRng rng(7);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / 20000.0 == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("gauss has near-zero mean and unit variance") {
  util::SeqRng rng(11);
  double sum = 0.0;
  double sq = 0.0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gauss();
    sum += g;
    sq += g * g;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::fabs(mean) < 0.02);
  CHECK(var == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("poisson mean tracks lambda") {
  util::SeqRng rng(13);
  const double lambda = 2.5;
  long total = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) total += rng.poisson(lambda);
  CHECK(static_cast<double>(total) / n == doctest::Approx(lambda).epsilon(0.05));
  CHECK(rng.poisson(0.0) == 0);
  CHECK(rng.poisson(-1.0) == 0);
}

TEST_CASE("fmt_fixed renders fixed decimals with rounding") {
  CHECK(util::fmt_fixed(1.0, 3) == "1.000");
  CHECK(util::fmt_fixed(-0.0005, 6) == "-0.000500");
  CHECK(util::fmt_fixed(2.5, 0) == "2");  // bankers-agnostic: printf ties away or even
  CHECK(util::fmt_fixed(1.23456789, 3) == "1.235");
}

TEST_CASE("fmt_fixed round-trips through stod at its own precision") {
  util::SeqRng rng(17);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.uniform(-100.0, 100.0);
    const std::string s = util::fmt_fixed(v, 6);
    CHECK(std::fabs(std::stod(s) - v) <= 5e-7);
    CHECK(util::fmt_fixed(std::stod(s), 6) == s);
  }
}

TEST_CASE("split keeps empty fields") {
  const auto parts = util::split("a,,b,", ',');
  REQUIRE(parts.size() == 4);
  CHECK(parts[0] == "a");
  CHECK(parts[1] == "");
  CHECK(parts[2] == "b");
  CHECK(parts[3] == "");
}

TEST_CASE("json_escape guards quotes, backslashes, and control characters") {
  CHECK(util::json_escape("a\"b") == "a\\\"b");
  CHECK(util::json_escape("a\\b") == "a\\\\b");
  CHECK(util::json_escape("a\nb") == "a\\nb");
  CHECK(util::json_escape("plain") == "plain");
}

TEST_CASE("base64 round-trips arbitrary bytes and matches known vectors") {
  CHECK(util::base64_encode("Man") == "TWFu");
  CHECK(util::base64_encode("Ma") == "TWE=");
  CHECK(util::base64_encode("M") == "TQ==");
  CHECK(util::base64_decode("TWFu") == "Man");
  util::SeqRng rng(19);
  for (int i = 0; i < 200; ++i) {
    std::string s;
    const int len = static_cast<int>(rng.uniform(0.0, 64.0));
    for (int j = 0; j < len; ++j) s += static_cast<char>(rng.bits() & 0xFF);
    CHECK(util::base64_decode(util::base64_encode(s)) == s);
  }
  CHECK_THROWS_AS((void)util::base64_decode("ab!c"), std::invalid_argument);
}

TEST_CASE("text files round-trip bytes exactly") {
  testsup::TmpDir tmp("util");
  const std::string content("line1\nline2\r\nbinary\0tail", 24);  // embedded NUL included
  util::write_text_file(tmp.sub("f.txt"), content);
  CHECK(util::read_text_file(tmp.sub("f.txt")) == content);
  CHECK_THROWS_AS((void)util::read_text_file(tmp.sub("missing.txt")), std::runtime_error);
}

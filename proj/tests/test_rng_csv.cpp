#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "fedmap/io/csv.hpp"
#include "fedmap/rng.hpp"

using namespace fedmap;

TEST_CASE("rng streams are reproducible per seed") {
    Rng a(42), b(42), c(43);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 64; ++i) {
        const auto xa = a.next_u64(), xb = b.next_u64(), xc = c.next_u64();
        all_equal = all_equal && xa == xb;
        any_diff = any_diff || xa != xc;
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("uniform draws stay in range") {
    Rng rng(5);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        const double v = rng.uniform(-3.0, 7.0);
        REQUIRE(v >= -3.0);
        REQUIRE(v < 7.0);
    }
}

TEST_CASE("uniform_int covers its range roughly evenly") {
    Rng rng(11);
    constexpr int kBuckets = 10;
    std::vector<int> counts(kBuckets, 0);
    constexpr int kDraws = 100000;
    for (int i = 0; i < kDraws; ++i) {
        const auto v = rng.uniform_int(kBuckets);
        REQUIRE(v < static_cast<std::uint64_t>(kBuckets));
        ++counts[static_cast<int>(v)];
    }
    for (const int c : counts) {
        CHECK(c > kDraws / kBuckets - 1000);
        CHECK(c < kDraws / kBuckets + 1000);
    }
}

TEST_CASE("gaussian moments match the standard normal") {
    Rng rng(17);
    constexpr int kDraws = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < kDraws; ++i) {
        const double x = rng.gaussian();
        sum += x;
        sq += x * x;
    }
    const double mean = sum / kDraws;
    const double var = sq / kDraws - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);

    Rng rng2(17);
    double shifted = 0.0;
    for (int i = 0; i < kDraws; ++i) shifted += rng2.gaussian(3.0, 0.5);
    CHECK(std::abs(shifted / kDraws - 3.0) < 0.02);
}

TEST_CASE("derived streams are independent and reproducible") {
    Rng a = derive_rng(9, 1, 2);
    Rng b = derive_rng(9, 1, 2);
    Rng c = derive_rng(9, 1, 3);
    Rng d = derive_rng(9, 2, 2);
    bool ab_equal = true, ac_diff = false, ad_diff = false;
    for (int i = 0; i < 32; ++i) {
        const auto xa = a.next_u64();
        ab_equal = ab_equal && xa == b.next_u64();
        ac_diff = ac_diff || xa != c.next_u64();
        ad_diff = ad_diff || xa != d.next_u64();
    }
    CHECK(ab_equal);
    CHECK(ac_diff);
    CHECK(ad_diff);
}

TEST_CASE("csv formatting is locale-free and terse") {
    CHECK(csv::fmt(1.5) == "1.5");
    CHECK(csv::fmt(0.1) == "0.1");
    CHECK(csv::fmt(-2.0) == "-2");
    CHECK(csv::fmt(100000) == "100000");
    CHECK(csv::fmt(0.0) == "0");
    CHECK(csv::fmt(1.0 / 3.0, 17) == "0.33333333333333331");
}

TEST_CASE("csv quoting follows the usual rules") {
    CHECK(csv::quote_if_needed("plain") == "plain");
    CHECK(csv::quote_if_needed("a,b") == "\"a,b\"");
    CHECK(csv::quote_if_needed("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(csv::quote_if_needed("line\nbreak") == "\"line\nbreak\"");
}

TEST_CASE("csv rows end with CRLF and match a golden table") {
    std::ostringstream os;
    csv::write_row(os, {"round", "value", "note"});
    csv::write_row(os, {csv::fmt(1), csv::fmt(2.5), "ok"});
    csv::write_row(os, {csv::fmt(2), csv::fmt(-0.25), "a,b"});
    CHECK(os.str() ==
          "round,value,note\r\n"
          "1,2.5,ok\r\n"
          "2,-0.25,\"a,b\"\r\n");
}

#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include "doctest.h"

#include "citysig/csv.hpp"
#include "citysig/date.hpp"
#include "citysig/reference.hpp"
#include "citysig/rng.hpp"

using namespace citysig;

TEST_CASE("mix_seed decorrelates streams") {
    std::set<uint64_t> seen;
    for (uint64_t s = 0; s < 100; ++s) seen.insert(mix_seed(42, s));
    CHECK(seen.size() == 100);
    CHECK(mix_seed(42, 0) != mix_seed(43, 0));
    CHECK(mix_seed(1, 2) == mix_seed(1, 2));
}

TEST_CASE("uniform01 stays in [0,1)") {
    Rng rng(7);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform01();
        lo = std::min(lo, u);
        hi = std::max(hi, u);
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
    }
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);
}

TEST_CASE("below covers the full range without bias artifacts") {
    Rng rng(3);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) ++counts[rng.below(7)];
    for (int c : counts) {
        CHECK(c > 9000);
        CHECK(c < 11000);
    }
    CHECK(Rng(1).below(1) == 0);
}

TEST_CASE("normal has roughly standard moments") {
    Rng rng(11);
    double sum = 0.0, sumsq = 0.0;
    const int n = 40000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sumsq += x * x;
    }
    CHECK(std::abs(sum / n) < 0.02);
    CHECK(std::abs(sumsq / n - 1.0) < 0.05);
}

TEST_CASE("gamma matches its mean and handles edge shapes") {
    Rng rng(13);
    const double shape = 2.5;
    double sum = 0.0;
    const int n = 40000;
    for (int i = 0; i < n; ++i) sum += rng.gamma(shape);
    CHECK(sum / n == doctest::Approx(shape).epsilon(0.03));
    CHECK(rng.gamma(0.0) == 0.0);

    double small = 0.0;
    for (int i = 0; i < n; ++i) small += rng.gamma(0.3);
    CHECK(small / n == doctest::Approx(0.3).epsilon(0.05));
}

TEST_CASE("seeded rng reproduces its stream") {
    Rng a(99), b(99);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("pairwise_sum agrees with naive summation") {
    Rng rng(5);
    std::vector<double> v(1000);
    for (double& x : v) x = rng.uniform01() * 2.0 - 1.0;
    const double expected = serial::naive_sum(v);
    CHECK(pairwise_sum(v) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("pairwise_sum depends only on element values") {
    // Values written by parallel workers must sum identically to values
    // written serially; that is the property the reductions rely on.
    std::vector<double> v(257), w(257);
    for (size_t i = 0; i < v.size(); ++i) v[i] = 1.0 / static_cast<double>(i + 3);
#pragma omp parallel for schedule(dynamic)
    for (size_t i = 0; i < w.size(); ++i) w[i] = 1.0 / static_cast<double>(i + 3);
    CHECK(pairwise_sum(w) == pairwise_sum(v)); // bit-identical
}

TEST_CASE("date validation knows the calendar") {
    CHECK(is_valid_date(2016, 2, 29));
    CHECK_FALSE(is_valid_date(2017, 2, 29));
    CHECK(is_valid_date(2000, 2, 29));
    CHECK_FALSE(is_valid_date(1900, 2, 29));
    CHECK_FALSE(is_valid_date(2015, 4, 31));
    CHECK_FALSE(is_valid_date(2015, 13, 1));
    CHECK_FALSE(is_valid_date(2015, 0, 10));
}

TEST_CASE("civil day conversions round-trip") {
    CHECK(days_from_civil(Date{1970, 1, 1}) == 0);
    CHECK(days_from_civil(Date{1970, 1, 2}) == 1);
    CHECK(civil_from_days(0) == Date{1970, 1, 1});
    for (long d = -200000; d <= 200000; d += 137) {
        const Date date = civil_from_days(d);
        REQUIRE(days_from_civil(date) == d);
        REQUIRE(is_valid_date(date.year, date.month, date.day));
    }
    CHECK(add_days(Date{2016, 2, 28}, 1) == Date{2016, 2, 29});
    CHECK(add_days(Date{2016, 2, 28}, 2) == Date{2016, 3, 1});
    CHECK(add_days(Date{2013, 1, 1}, 1825) == Date{2017, 12, 31});
}

TEST_CASE("iso and us date parsing") {
    CHECK(parse_date("2015-07-09", DateFormat::iso) == Date{2015, 7, 9});
    CHECK(parse_date(" 2015-07-09 ", DateFormat::iso) == Date{2015, 7, 9});
    CHECK(parse_date("07/09/2015", DateFormat::us) == Date{2015, 7, 9});
    CHECK(parse_date("7/9/2015", DateFormat::us) == Date{2015, 7, 9});
    CHECK_FALSE(parse_date("2015-07-09", DateFormat::us).has_value());
    CHECK_FALSE(parse_date("2015-02-30", DateFormat::iso).has_value());
    CHECK_FALSE(parse_date("2015-07", DateFormat::iso).has_value());
    CHECK_FALSE(parse_date("garbage", DateFormat::iso).has_value());
    CHECK_FALSE(parse_date("", DateFormat::iso).has_value());
}

TEST_CASE("datetime parsing covers both clocks") {
    auto t = parse_datetime("2015-07-09 13:45:10", DateFormat::iso);
    REQUIRE(t.has_value());
    CHECK(t->hour == 13);
    CHECK(t->second == 10);

    auto us = parse_datetime("07/09/2015 01:45:10 PM", DateFormat::us);
    REQUIRE(us.has_value());
    CHECK(us->hour == 13);
    CHECK(parse_datetime("07/09/2015 12:00:00 AM", DateFormat::us)->hour == 0);
    CHECK(parse_datetime("07/09/2015 12:00:00 PM", DateFormat::us)->hour == 12);

    auto bare = parse_datetime("2015-07-09", DateFormat::iso);
    REQUIRE(bare.has_value());
    CHECK(bare->hour == 0);

    CHECK_FALSE(parse_datetime("2015-07-09 25:00:00", DateFormat::iso).has_value());
    CHECK_FALSE(parse_datetime("07/09/2015 13:45:10 PM", DateFormat::us).has_value());
    CHECK_FALSE(parse_datetime("2015-07-09 10:75:00", DateFormat::iso).has_value());
}

TEST_CASE("date formatting is zero-padded ISO") {
    CHECK(format_date(Date{2015, 7, 9}) == "2015-07-09");
    CHECK(format_datetime(DateTime{{2015, 7, 9}, 3, 4, 5}) == "2015-07-09 03:04:05");
}

TEST_CASE("csv reader handles quoting, embedded delimiters, and newlines") {
    std::istringstream in("a,b,c\r\n\"x,y\",\"he said \"\"hi\"\"\",\"two\nlines\"\n,,\n");
    CsvReader r(in);
    auto h = r.next();
    REQUIRE(h.has_value());
    CHECK(*h == std::vector<std::string>{"a", "b", "c"});
    auto row = r.next();
    REQUIRE(row.has_value());
    CHECK((*row)[0] == "x,y");
    CHECK((*row)[1] == "he said \"hi\"");
    CHECK((*row)[2] == "two\nlines");
    auto empty = r.next();
    REQUIRE(empty.has_value());
    CHECK(*empty == std::vector<std::string>{"", "", ""});
    CHECK_FALSE(r.next().has_value());
}

TEST_CASE("csv reader skips blank lines") {
    std::istringstream in("a,b\n\n1,2\n\n\n3,4\n");
    CsvReader r(in);
    CHECK(r.next().has_value());
    CHECK((*r.next())[0] == "1");
    CHECK((*r.next())[0] == "3");
    CHECK_FALSE(r.next().has_value());
}

TEST_CASE("csv writer round-trips through the reader") {
    std::ostringstream out;
    CsvWriter w(out);
    w.write_row({"plain", "with,comma", "with\"quote", "multi\nline", ""});
    std::istringstream in(out.str());
    CsvReader r(in);
    auto row = r.next();
    REQUIRE(row.has_value());
    CHECK(*row == std::vector<std::string>{"plain", "with,comma", "with\"quote", "multi\nline", ""});
}

TEST_CASE("format_double round-trips exact values") {
    Rng rng(17);
    for (int i = 0; i < 1000; ++i) {
        const double x = (rng.uniform01() - 0.5) * std::pow(10.0, static_cast<double>(i % 17) - 8.0);
        auto parsed = parse_double(format_double(x));
        REQUIRE(parsed.has_value());
        REQUIRE(*parsed == x); // bit-exact
    }
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(1.0) == "1");
}

TEST_CASE("parse_int requires a full integer match") {
    CHECK(parse_int("42") == 42);
    CHECK(parse_int(" 42 ") == 42);
    CHECK(parse_int("-7") == -7);
    CHECK_FALSE(parse_int("42x").has_value());
    CHECK_FALSE(parse_int("4.2").has_value());
    CHECK_FALSE(parse_int("").has_value());
}

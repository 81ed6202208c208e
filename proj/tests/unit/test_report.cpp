#include "khronos/report.hpp"

#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

using namespace khronos;

TEST_CASE("config hash is stable and sensitive") {
    const auto a = config_hash("epochs=1000,seed=7");
    const auto b = config_hash("epochs=1000,seed=7");
    const auto c = config_hash("epochs=1000,seed=8");
    CHECK(a == b);
    CHECK(a != c);
    CHECK(hash_hex(a).size() == 16);
}

TEST_CASE("csv writer embeds the config hash and round-trip numbers") {
    CsvWriter csv({"dof", "l2sq"}, config_hash("test"));
    csv.add_row({16.0, 5.3e-4});
    csv.add_row({32.0, 0.1 + 0.2});  // value without a short decimal form
    const std::string text = csv.str();
    CHECK(text.find("# config_hash=") == 0);
    CHECK(text.find("dof,l2sq\n") != std::string::npos);
    CHECK(text.find("16,") != std::string::npos);
    // %.17g output parses back to the identical double
    std::istringstream last(text.substr(text.rfind(",") + 1));
    double parsed = 0.0;
    last >> parsed;
    CHECK(parsed == 0.1 + 0.2);
}

TEST_CASE("csv writer validates row width") {
    CsvWriter csv({"a", "b"}, 0);
    CHECK_THROWS_AS(csv.add_row({1.0}), std::invalid_argument);
}

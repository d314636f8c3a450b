#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "tsception/gradsuite.hpp"

using namespace tsception;

TEST_CASE("the full gradient suite passes at the default seed") {
    const GradSuiteReport r = gradcheck_suite(0);
    CAPTURE(r.worst);
    CHECK(r.ok(1e-4));
    CHECK(r.coords_checked > 500);
}

TEST_CASE("seed variation does not change the verdict") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        const GradSuiteReport r = gradcheck_suite(seed);
        CAPTURE(seed);
        CAPTURE(r.worst);
        CHECK(r.ok(1e-4));
    }
}

TEST_CASE("an injected wrong convolution backward is caught") {
    const GradSuiteReport r = gradcheck_suite(0, true);
    CHECK_FALSE(r.ok(1e-4));
    CHECK(r.max_rel_err > 1e-3);
    CHECK(r.worst.find("conv2d") != std::string::npos);
}

#include <doctest.h>

#include "mfs/core.hpp"

using namespace mfs;

TEST_SUITE("core") {

TEST_CASE("per-unit base validation") {
    PerUnitBase b;
    CHECK(b.omega_b == doctest::Approx(kTwoPi * 60.0));
    b.validate();
    b.omega_b = -1.0;
    CHECK_THROWS_AS(b.validate(), ConfigError);
}

TEST_CASE("dq pair behaves as d + jq") {
    DqPair s{3.0, 4.0};
    CHECK(s.mag() == doctest::Approx(5.0));
    CHECK(DqPair::from(s.cx()).d == 3.0);
    CHECK(DqPair::from(s.cx()).q == 4.0);
}

TEST_CASE("empty layout") {
    StateLayout lay;
    CHECK(lay.size() == 0);
    CHECK(lay.differential_count() == 0);
    CHECK(lay.algebraic_count() == 0);
}

TEST_CASE("layout indices are a bijection, differential first") {
    StateLayout lay;
    CHECK(lay.add_differential("line-1-2", "i_d") == 0);
    CHECK(lay.add_differential("line-1-2", "i_q") == 1);
    CHECK(lay.add_differential("G1", "delta") == 2);
    CHECK(lay.add_algebraic("bus1", "v_d") == 3);
    CHECK(lay.add_algebraic("bus1", "v_q") == 4);
    CHECK(lay.size() == 5);
    CHECK(lay.differential_count() == 3);
    CHECK(lay.algebraic_count() == 2);
    CHECK(lay.index_of("G1", "delta") == 2);
    CHECK(lay.qualified_name(3) == "bus1.v_d");
    CHECK(lay.contains("bus1", "v_q"));
    CHECK_FALSE(lay.contains("bus9", "v_q"));
    CHECK_THROWS_AS(lay.index_of("bus9", "v_q"), ConfigError);
}

TEST_CASE("duplicate state rejected") {
    StateLayout lay;
    lay.add_differential("G1", "delta");
    CHECK_THROWS_AS(lay.add_differential("G1", "delta"), ConfigError);
}

TEST_CASE("differential after algebraic rejected") {
    StateLayout lay;
    lay.add_algebraic("bus1", "v_d");
    CHECK_THROWS_AS(lay.add_differential("G1", "delta"), ConfigError);
}

TEST_CASE("layout determinism: identical builds compare equal") {
    auto build = [] {
        StateLayout lay;
        lay.add_differential("a", "x");
        lay.add_differential("b", "y");
        lay.add_algebraic("c", "z");
        return lay;
    };
    CHECK(build() == build());
}

}  // TEST_SUITE

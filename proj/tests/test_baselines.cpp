#include <doctest.h>

#include "nrm/baselines.hpp"
#include "nrm/lp.hpp"

using namespace nrm;

namespace {

Vector v2(double a, double b) { return (Vector(2) << a, b).finished(); }

} // namespace

TEST_CASE("dense simplex") {
    // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18
    Matrix A(3, 2);
    A << 1, 0, 0, 2, 3, 2;
    auto s = solve_lp(v2(3, 5), A, (Vector(3) << 4, 12, 18).finished(), Matrix(0, 2), Vector(0));
    REQUIRE(s);
    CHECK(s->objective == doctest::Approx(36));
    CHECK(s->x(0) == doctest::Approx(2));
    CHECK(s->x(1) == doctest::Approx(6));

    // with x + y = 1
    auto e = solve_lp(v2(1, 2), Matrix::Identity(2, 2), v2(0.3, 0.8), Matrix::Ones(1, 2), Vector::Ones(1));
    REQUIRE(e);
    CHECK(e->x(1) == doctest::Approx(0.8));
    CHECK(e->x(0) == doctest::Approx(0.2));

    auto none = solve_lp(v2(1, 1), Matrix::Identity(2, 2), v2(0.3, 0.3), Matrix::Ones(1, 2), Vector::Ones(1));
    CHECK_FALSE(none);
    CHECK_THROWS_AS(solve_lp(v2(1, 1), Matrix(0, 2), Vector(0), Matrix(0, 2), Vector(0)), std::domain_error);
}

TEST_CASE("grid mixture") {
    std::vector<PriceVector> grid = {v2(1, 1), v2(2, 2), v2(3, 3)};
    std::vector<DemandVector> d = {v2(0.3, 0.3), v2(0.15, 0.1), v2(0.05, 0.02)};
    Matrix A = Matrix::Identity(2, 2);

    MixturePlan loose = solve_grid_mixture(grid, d, A, v2(1, 1), 100);
    REQUIRE(loose.prices.size() == 1);
    CHECK(loose.prices[0] == v2(1, 1));
    CHECK(loose.periods[0] == 100);
    CHECK(loose.value == doctest::Approx(0.6));

    MixturePlan tight = solve_grid_mixture(grid, d, A, v2(0.2, 0.2), 1001);
    long total = 0;
    for (long n : tight.periods) total += n;
    CHECK(total == 1001);
    CHECK_FALSE(tight.fallback);

    MixturePlan none = solve_grid_mixture(grid, d, A, v2(0.01, 0.01), 10);
    CHECK(none.fallback);
    CHECK(none.prices.back() == v2(3, 3));
}

TEST_CASE("explore-then-commit layout") {
    Instance inst = reference_instance(100000);
    ExploreThenCommitPolicy pol(inst, {});
    CHECK(pol.grid().size() == 64);
    CHECK(pol.grid().back() == v2(5, 5));
    CHECK(pol.grid().front() == v2(0.8, 0.8));
    CHECK(pol.exploration_periods() == static_cast<long>(0.05 * 100000));

    Instance small = reference_instance(100);
    ExploreThenCommitPolicy s(small, {});
    CHECK(s.exploration_periods() == 64);  // at least one visit per grid point

    EtcConfig bad;
    bad.grid_points_per_axis = 1;
    CHECK_THROWS_AS(ExploreThenCommitPolicy(inst, bad), std::invalid_argument);
    CHECK_THROWS_AS(etc_config_from_json({{"grid", 3}}), std::invalid_argument);
    CHECK(etc_config_from_json({{"exploration_fraction", 0.2}}).exploration_fraction == 0.2);
}

TEST_CASE("noiseless exploration recovers the grid-restricted fluid value") {
    Instance inst = reference_instance(50000, NoiseMode::None);
    EtcConfig cfg;
    cfg.exploration_fraction = 0.01;
    ExploreThenCommitPolicy pol(inst, cfg);
    run_episode(inst, pol, 1);
    // same LP, built directly from exact grid demand
    std::vector<DemandVector> exact;
    for (const auto& p : pol.grid()) exact.push_back(inst.model->mean(p));
    MixturePlan direct = solve_grid_mixture(pol.grid(), exact, inst.A, inst.gamma, 1000);
    FluidSolution sol = solve_fluid(inst);
    CHECK(direct.value <= sol.value + 1e-12);
    CHECK(pol.plan().value >= direct.value - 1e-3);
    CHECK(pol.plan().value <= sol.value + 1e-3);
}

TEST_CASE("full exploration never commits") {
    Instance inst = reference_instance(640);
    EtcConfig cfg;
    cfg.exploration_fraction = 1.0;
    ExploreThenCommitPolicy pol(inst, cfg);
    EpisodeTrace tr = run_episode(inst, pol, 3);
    CHECK(pol.exploration_periods() == 640);
    CHECK(pol.events().empty());
    CHECK(tr.audit.ok());
}

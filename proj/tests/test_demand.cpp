#include <doctest.h>

#include <cmath>

#include "nrm/demand.hpp"
#include "nrm/rng.hpp"

using namespace nrm;

namespace {

LogitDemand ref_logit() { return LogitDemand((Vector(2) << 0.4, 0.8).finished(), (Vector(2) << 1.5, 2.0).finished()); }

Vector v2(double a, double b) { return (Vector(2) << a, b).finished(); }

const PriceBox kBox{0.8, 5.0};

PriceVector random_price(Rng& rng, const PriceBox& box = kBox) {
    return v2(box.lo + box.width() * uniform01(rng), box.lo + box.width() * uniform01(rng));
}

} // namespace

TEST_CASE("logit mean at the reference prices") {
    LogitDemand m = ref_logit();
    DemandVector d = m.mean(v2(0.8, 0.8));
    CHECK(d(0) == doctest::Approx(0.2366560913555668).epsilon(1e-13));
    CHECK(d(1) == doctest::Approx(0.2366560913555668).epsilon(1e-13));
    DemandVector hi = m.mean(v2(5, 5));
    CHECK(hi(0) == doctest::Approx(8.24341464e-4).epsilon(1e-8));
    CHECK(hi(1) == doctest::Approx(1.00945911e-4).epsilon(1e-8));
    CHECK(d.sum() < 1.0);
}

TEST_CASE("logit jacobian") {
    LogitDemand m = ref_logit();
    Matrix J = m.jacobian(v2(0.8, 0.8));
    CHECK(J(0, 0) == doctest::Approx(-0.2709749787).epsilon(1e-9));

    SUBCASE("symmetric parameters give a symmetric jacobian") {
        LogitDemand s(v2(0.5, 0.5), v2(1.0, 1.0));
        Matrix Js = s.jacobian(v2(1.3, 1.3));
        CHECK(Js(0, 1) == doctest::Approx(Js(1, 0)));
        CHECK(Js(0, 0) == doctest::Approx(Js(1, 1)));
    }

    SUBCASE("matches central differences and own-price slopes are negative") {
        Rng rng(11);
        const double h = 1e-5;
        for (int k = 0; k < 100; ++k) {
            PriceVector p = random_price(rng);
            Matrix Ja = m.jacobian(p);
            Matrix Jfd(2, 2);
            for (int i = 0; i < 2; ++i) {
                PriceVector pp = p, pm = p;
                pp(i) += h;
                pm(i) -= h;
                Jfd.col(i) = (m.mean(pp) - m.mean(pm)) / (2 * h);
            }
            CHECK((Ja - Jfd).norm() / Ja.norm() < 1e-5);
            CHECK(Ja(0, 0) < 0);
            CHECK(Ja(1, 1) < 0);
        }
    }
}

TEST_CASE("logit inverse") {
    LogitDemand m = ref_logit();
    PriceVector p = m.inverse(v2(0.2, 0.2));
    CHECK(p(0) == doctest::Approx(0.999074859112073).epsilon(1e-12));
    CHECK(p(1) == doctest::Approx(0.949306144334055).epsilon(1e-12));
    CHECK((m.mean(p) - v2(0.2, 0.2)).norm() < 1e-12);

    PriceVector back = m.inverse(m.mean(v2(0.8, 0.8)));
    CHECK((back - v2(0.8, 0.8)).norm() < 1e-10);

    CHECK_THROWS_AS(m.inverse(v2(0.6, 0.4)), std::domain_error);
    CHECK_THROWS_AS(m.inverse(v2(0.0, 0.4)), std::domain_error);
    CHECK_FALSE(m.in_domain_of_inverse(v2(0.7, 0.4)));
    CHECK(m.in_domain_of_inverse(v2(0.2, 0.2)));

    Rng rng(12);
    for (int k = 0; k < 100; ++k) {
        PriceVector q = random_price(rng);
        CHECK((m.inverse(m.mean(q)) - q).lpNorm<Eigen::Infinity>() / q.lpNorm<Eigen::Infinity>() < 1e-8);
    }
}

TEST_CASE("revenue functions") {
    LogitDemand m = ref_logit();
    CHECK(revenue_f(m, v2(0.8, 0.8)) == doctest::Approx(0.3786497462).epsilon(1e-9));
    CHECK(revenue_phi(m, v2(0.2, 0.2)) == doctest::Approx(0.389676200689226).epsilon(1e-12));
    CHECK(revenue_f(m, v2(60, 60)) < 1e-30);

    Rng rng(13);
    const double h = 1e-6;
    for (int k = 0; k < 50; ++k) {
        PriceVector p = random_price(rng);
        CHECK(revenue_phi(m, m.mean(p)) == doctest::Approx(revenue_f(m, p)).epsilon(1e-10));
        Vector g = grad_f(m, p);
        Vector fd(2);
        for (int i = 0; i < 2; ++i) {
            PriceVector pp = p, pm = p;
            pp(i) += h;
            pm(i) -= h;
            fd(i) = (revenue_f(m, pp) - revenue_f(m, pm)) / (2 * h);
        }
        CHECK((g - fd).norm() <= 1e-6 * std::max(g.norm(), 1e-3));
    }
}

TEST_CASE("phi derivatives and concavity") {
    LogitDemand m = ref_logit();
    Rng rng(14);
    const double h = 1e-6;
    for (int k = 0; k < 50; ++k) {
        DemandVector d = m.mean(random_price(rng));
        Vector g = m.grad_phi(d);
        Matrix H = m.hessian_phi(d);
        Vector fd(2);
        Matrix Hfd(2, 2);
        for (int i = 0; i < 2; ++i) {
            DemandVector dp = d, dm = d;
            const double hi = h * d(i);
            dp(i) += hi;
            dm(i) -= hi;
            fd(i) = (revenue_phi(m, dp) - revenue_phi(m, dm)) / (2 * hi);
            Hfd.col(i) = (m.grad_phi(dp) - m.grad_phi(dm)) / (2 * hi);
        }
        CHECK((g - fd).norm() <= 1e-5 * g.norm() + 1e-7);
        CHECK((H - Hfd).norm() <= 1e-4 * H.norm());
        Eigen::SelfAdjointEigenSolver<Matrix> es(H);
        CHECK(es.eigenvalues().maxCoeff() < 0);
    }
}

TEST_CASE("linear demand") {
    Matrix B(2, 2);
    B << 2.0, 0.5, 0.5, 1.0;
    LinearDemand m(v2(10, 8), B);
    PriceVector p = v2(1.0, 2.0);
    DemandVector d = m.mean(p);
    CHECK(d(0) == doctest::Approx(10 - 2 - 1));
    CHECK(d(1) == doctest::Approx(8 - 0.5 - 2));
    CHECK((m.inverse(d) - p).norm() < 1e-12);
    CHECK((m.jacobian(p) + B).norm() == 0);
    Eigen::SelfAdjointEigenSolver<Matrix> es(m.hessian_phi(d));
    CHECK(es.eigenvalues().maxCoeff() < 0);

    Matrix bad(2, 2);
    bad << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS(LinearDemand(v2(1, 1), bad), std::invalid_argument);
}

TEST_CASE("sampling") {
    LogitDemand m = ref_logit();
    Rng rng(99);

    SUBCASE("noiseless returns the mean") {
        DemandVector y = sample_demand(m, PostedPrice(v2(0.8, 0.8)), rng, NoiseMode::None);
        CHECK(y(0) == doctest::Approx(0.2366560913555668));
        CHECK(y(1) == doctest::Approx(0.2366560913555668));
    }
    SUBCASE("shutoff gives nothing") {
        DemandVector y = sample_demand(m, PostedPrice::shutoff(), rng, NoiseMode::Multinomial);
        CHECK(y.size() == 2);
        CHECK(y.isZero());
        CHECK_THROWS_AS(PostedPrice::shutoff().value(), std::logic_error);
    }
    SUBCASE("multinomial draws are one-hot and unbiased") {
        const PriceVector p = v2(1.7, 1.4);
        const DemandVector D = m.mean(p);
        const int n = 1000000;
        DemandVector sum = DemandVector::Zero(2);
        for (int k = 0; k < n; ++k) {
            DemandVector y = sample_demand(m, PostedPrice(p), rng, NoiseMode::Multinomial);
            REQUIRE(y.sum() <= 1.0);
            REQUIRE(((y.array() == 0) || (y.array() == 1)).all());
            sum += y;
        }
        for (int i = 0; i < 2; ++i) {
            const double se = std::sqrt(D(i) * (1 - D(i)) / n);
            CHECK(std::abs(sum(i) / n - D(i)) < 4 * se);
        }
    }
}

TEST_CASE("price box") {
    CHECK(kBox.width() == doctest::Approx(4.2));
    CHECK(kBox.contains(v2(0.8, 5.0)));
    CHECK_FALSE(kBox.contains(v2(0.79, 5.0)));
    CHECK(kBox.clip(v2(0.1, 9.0)) == v2(0.8, 5.0));
    CHECK(kBox.center(2) == v2(2.9, 2.9));
    PriceBox s = kBox.shrink(0.21);
    CHECK(s.lo == doctest::Approx(1.01));
    CHECK(s.hi == doctest::Approx(4.79));
    CHECK_THROWS_AS(kBox.shrink(2.1), std::invalid_argument);
    CHECK(parse_noise_mode("none") == NoiseMode::None);
    CHECK(to_string(NoiseMode::Multinomial) == "multinomial");
    CHECK_THROWS_AS(parse_noise_mode("gaussian"), std::invalid_argument);
}

TEST_CASE("regularity constants") {
    LogitDemand m = ref_logit();
    Matrix A(2, 2);
    A << 1, 1, 0, 2;
    const Vector gamma = v2(0.1, 0.1);
    RegularityConstants rc = estimate_regularity(m, kBox, A, gamma, NoiseMode::Multinomial, 101);
    CHECK(rc.B_D == doctest::Approx(0.4277).epsilon(1e-3));
    CHECK(rc.sigma_D == doctest::Approx(1.394e-4).epsilon(1e-3));
    CHECK(rc.L_D == doctest::Approx(0.4078).epsilon(1e-3));
    CHECK(rc.B_phi == doctest::Approx(7174.5).epsilon(1e-3));
    CHECK(rc.sigma_phi == doctest::Approx(2.396).epsilon(1e-3));
    CHECK(rc.B_A == doctest::Approx(2.28825).epsilon(1e-5));
    CHECK(rc.sigma_A == doctest::Approx(0.874032).epsilon(1e-5));
    CHECK(rc.B_r == doctest::Approx(5.0));
    CHECK(rc.d_lo == 0.0);
    CHECK(rc.d_hi == 1.0);
    CHECK(rc.B_J == rc.B_D);

    SUBCASE("constant jacobian") {
        LinearDemand id(v2(10, 10), Matrix::Identity(2, 2));
        RegularityConstants r = estimate_regularity(id, PriceBox{0, 2}, Matrix::Identity(2, 2), gamma,
                                                    NoiseMode::None, 11);
        CHECK(r.B_D == doctest::Approx(1.0));
        CHECK(r.sigma_D == doctest::Approx(1.0));
        CHECK(r.L_D == doctest::Approx(0.0));
    }
    CHECK_THROWS_AS(estimate_regularity(m, kBox, A, gamma, NoiseMode::None, 1), std::invalid_argument);
}

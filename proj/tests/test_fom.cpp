#include <catch2/catch_amalgamated.hpp>

#include "bifrom/fom.hpp"

using namespace bifrom;

TEST_CASE("hopf system construction") {
    SECTION("square case is orthogonal") {
        const auto sys = make_hopf_system(2, 2 * M_PI, 5.0, 0.0, 1.0, 1);
        CHECK((sys.V.transpose() * sys.V - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((sys.V * sys.V.transpose() - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("deterministic in the seed") {
        const auto a = make_hopf_system(20, 2 * M_PI, 5.0, 0.0, 1.0, 99);
        const auto b = make_hopf_system(20, 2 * M_PI, 5.0, 0.0, 1.0, 99);
        CHECK(a.V == b.V);
    }
    SECTION("lifting frame orthonormal at D=50") {
        const auto sys = make_hopf_system(50, 2 * M_PI, 5.0, 0.0, 1.0, 7);
        CHECK((sys.V.transpose() * sys.V - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
    }
    SECTION("rejects bad arguments") {
        CHECK_THROWS_AS(make_hopf_system(1, 1.0, 1.0, 0.0, 1.0, 0), InvalidArgument);
        CHECK_THROWS_AS(make_hopf_system(4, -1.0, 1.0, 0.0, 1.0, 0), InvalidArgument);
        CHECK_THROWS_AS(make_hopf_system(4, 1.0, 0.0, 0.0, 1.0, 0), InvalidArgument);
    }
}

TEST_CASE("hopf simulation") {
    const auto sys = make_hopf_system(50, 2 * M_PI, 5.0, 0.0, 1.0, 7);

    SECTION("limit cycle closes after one period") {
        const double g = 0.25;  // mu = 0.25, radius 0.5
        REQUIRE(hopf_cycle_radius(sys, g) == 0.5);
        const Vector x0 = hopf_cycle_state(sys, g);
        const long steps = 1000;  // period 2*pi/omega = 1, dt = 1e-3
        const Trajectory traj = simulate(sys, g, x0, 1e-3, steps);
        CHECK((traj.states.back() - x0).norm() / x0.norm() < 1e-6);
    }
    SECTION("origin is an equilibrium") {
        const Trajectory traj = simulate(sys, 0.25, Vector::Zero(50), 1e-3, 50);
        for (const auto& s : traj.states) CHECK(s.norm() == 0.0);
    }
    SECTION("off-plane component decays at rate kappa") {
        // q: a direction orthogonal to span(V)
        Vector q = Vector::Zero(50);
        q(0) = 1.0;
        q -= sys.V * (sys.V.transpose() * q);
        q.normalize();
        const Vector x0 = hopf_cycle_state(sys, 0.25) + 0.3 * q;
        const Trajectory traj = simulate(sys, 0.25, x0, 1e-3, 500);
        for (std::size_t k = 100; k < traj.length(); k += 100) {
            const Vector off = traj.states[k] - sys.V * (sys.V.transpose() * traj.states[k]);
            const double expected = 0.3 * std::exp(-sys.kappa * traj.times[k]);
            CHECK(std::abs(off.norm() - expected) / expected < 1e-4);
        }
    }
    SECTION("argument validation and cycle radius oracle") {
        CHECK_THROWS_AS(simulate(sys, 0.25, Vector::Zero(50), 0.0, 10), InvalidArgument);
        CHECK_THROWS_AS(simulate(sys, 0.25, Vector::Zero(49), 1e-3, 10), DimensionError);
        CHECK(hopf_cycle_radius(sys, 1.0) == 1.0);
        CHECK(hopf_cycle_radius(sys, 0.0) == 0.0);
        CHECK(hopf_cycle_radius(sys, -0.5) == 0.0);
        CHECK(hopf_cycle_radius(sys, 0.0625) == 0.25);
    }
}

TEST_CASE("RK4 convergence is fourth order") {
    const auto sys = make_hopf_system(10, 2 * M_PI, 5.0, 0.0, 1.0, 3);
    const double g = 0.25;
    const Vector x0 = hopf_cycle_state(sys, g);
    // Exact on-cycle solution: z(t) = sqrt(mu) * (cos(omega t), sin(omega t)).
    auto exact = [&](double t) {
        return Vector(sys.V * Eigen::Vector2d(0.5 * std::cos(sys.omega * t),
                                              0.5 * std::sin(sys.omega * t)));
    };
    std::vector<double> hs, errs;
    for (long steps : {25, 50, 100, 200}) {
        const double dt = 1.0 / static_cast<double>(steps);
        const Trajectory traj = simulate(sys, g, x0, dt, steps);
        hs.push_back(std::log(dt));
        errs.push_back(std::log((traj.states.back() - exact(1.0)).norm()));
    }
    // least-squares slope of log(err) vs log(dt)
    double mh = 0, me = 0;
    for (std::size_t i = 0; i < hs.size(); ++i) {
        mh += hs[i];
        me += errs[i];
    }
    mh /= hs.size();
    me /= errs.size();
    double num = 0, den = 0;
    for (std::size_t i = 0; i < hs.size(); ++i) {
        num += (hs[i] - mh) * (errs[i] - me);
        den += (hs[i] - mh) * (hs[i] - mh);
    }
    const double slope = num / den;
    CHECK(slope > 3.7);
    CHECK(slope < 4.3);
}

TEST_CASE("hopf long-run radius approaches sqrt(mu)") {
    const auto sys = make_hopf_system(30, 2 * M_PI, 5.0, 0.0, 1.0, 11);
    const double g = 0.36;  // radius 0.6
    const Vector x0 = sys.V * Eigen::Vector2d(0.05, -0.02);  // small nonzero latent start
    const Trajectory traj = simulate(sys, g, x0, 1e-3, 20000);
    const double r = (sys.V.transpose() * traj.states.back()).norm();
    CHECK(std::abs(r - 0.6) < 1e-4);
}

TEST_CASE("pitchfork system construction") {
    SECTION("D=2 gives an orthonormal basis of the plane") {
        const auto sys = make_pitchfork_system(2, 5.0, 2.0, 0.4, 0.15, 0.75, 5);
        CHECK(std::abs(sys.v1.dot(sys.v2)) < 1e-12);
        CHECK(std::abs(sys.v1.norm() - 1.0) < 1e-12);
        CHECK(std::abs(sys.v2.norm() - 1.0) < 1e-12);
    }
    SECTION("deterministic in the seed") {
        const auto a = make_pitchfork_system(12, 5.0, 2.0, 0.4, 0.15, 0.75, 5);
        const auto b = make_pitchfork_system(12, 5.0, 2.0, 0.4, 0.15, 0.75, 5);
        CHECK(a.v1 == b.v1);
        CHECK(a.v2 == b.v2);
    }
    SECTION("orthonormality at D=40") {
        const auto sys = make_pitchfork_system(40, 5.0, 2.0, 0.4, 0.15, 0.75, 7);
        CHECK(std::abs(sys.v1.dot(sys.v2)) < 1e-12);
        CHECK(std::abs(sys.v1.norm() - 1.0) < 1e-12);
        CHECK(std::abs(sys.v2.norm() - 1.0) < 1e-12);
    }
    SECTION("rejects bad arguments") {
        CHECK_THROWS_AS(make_pitchfork_system(1, 5.0, 1.0, 1.0, 0.0, 0.0, 0), InvalidArgument);
        CHECK_THROWS_AS(make_pitchfork_system(4, 0.0, 1.0, 1.0, 0.0, 0.0, 0), InvalidArgument);
    }
}

namespace {
// (nu, w) with a prescribed effective parameter, given the default map
std::pair<double, double> params_for_mu(const PitchforkSystem& sys, double mu) {
    // vary nu only: mu = alpha*(nu_ref - nu)  =>  nu = nu_ref - mu/alpha
    return {sys.nu_ref - mu / sys.alpha, sys.w_ref};
}
}  // namespace

TEST_CASE("pitchfork steady branches") {
    const auto sys = make_pitchfork_system(40, 5.0, 2.0, 0.4, 0.15, 0.75, 7);

    SECTION("subcritical region has the single zero branch") {
        const auto [nu, w] = params_for_mu(sys, -0.1);
        const auto branches = steady_branches(sys, nu, w);
        REQUIRE(branches.size() == 1);
        CHECK(branches[0].stable);
        CHECK(branches[0].state.norm() == 0.0);
    }
    SECTION("mu = 1 gives the lifted roots +-v1 + v2") {
        const auto [nu, w] = params_for_mu(sys, 1.0);
        const auto branches = steady_branches(sys, nu, w);
        REQUIRE(branches.size() == 3);
        CHECK((branches[0].state - (sys.v1 + sys.v2)).norm() < 1e-12);
        CHECK((branches[1].state - (-sys.v1 + sys.v2)).norm() < 1e-12);
        CHECK(branches[0].stable);
        CHECK(branches[1].stable);
        CHECK_FALSE(branches[2].stable);
    }
    SECTION("mu = 0.09 roots have vanishing residual") {
        const auto [nu, w] = params_for_mu(sys, 0.09);
        const auto branches = steady_branches(sys, nu, w);
        REQUIRE(branches.size() == 3);
        CHECK(std::abs(std::abs(sys.observable(branches[0].state)) - 0.3) < 1e-14);
        for (const auto& b : branches)
            CHECK(sys.residual(b.state, 0.09).norm() < 1e-14);
    }
    SECTION("branches are mirror images in the observable") {
        const auto [nu, w] = params_for_mu(sys, 0.3);
        const auto branches = steady_branches(sys, nu, w);
        CHECK(std::abs(sys.observable(branches[0].state) + sys.observable(branches[1].state)) <
              1e-14);
        // v2 component is even in y
        CHECK(std::abs(sys.v2.dot(branches[0].state) - sys.v2.dot(branches[1].state)) < 1e-15);
    }
}

TEST_CASE("full-order Newton on the pitchfork residual") {
    const auto sys = make_pitchfork_system(40, 5.0, 2.0, 0.4, 0.15, 0.75, 7);
    const auto [nu, w] = params_for_mu(sys, 1.0);

    SECTION("exact root returns unchanged") {
        const Vector root = sys.v1 + sys.v2;
        const Vector u = newton_solve_steady(sys, nu, w, root, 1e-10, 20);
        CHECK(u == root);
    }
    SECTION("basins select the matching branch") {
        const Vector up = newton_solve_steady(sys, nu, w, Vector(1.5 * sys.v1), 1e-12, 50);
        CHECK(sys.residual(up, 1.0).norm() <= 1e-12);
        CHECK((up - (sys.v1 + sys.v2)).norm() < 1e-10);
        const Vector down = newton_solve_steady(sys, nu, w, Vector(-1.5 * sys.v1), 1e-12, 50);
        CHECK((down - (-sys.v1 + sys.v2)).norm() < 1e-10);
    }
    SECTION("singular Jacobian at the bifurcation point") {
        const auto [nu0, w0] = params_for_mu(sys, 0.0);
        // y = 0 with nonzero residual: the Jacobian's v1 direction is null
        CHECK_THROWS_AS(newton_solve_steady(sys, nu0, w0, Vector(0.5 * sys.v2), 1e-14, 50),
                        SingularityError);
    }
    SECTION("iteration budget is enforced") {
        CHECK_THROWS_AS(newton_solve_steady(sys, nu, w, Vector(1.5 * sys.v1), 1e-15, 0),
                        ConvergenceError);
    }
}

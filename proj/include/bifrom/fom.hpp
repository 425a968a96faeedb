#pragma once

#include <random>

#include "bifrom/errors.hpp"
#include "bifrom/types.hpp"

namespace bifrom {

namespace detail {

// Orthonormal D x k frame from the thin QR of a seeded Gaussian matrix.
inline Matrix seeded_orthonormal_frame(Eigen::Index dim, Eigen::Index k, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix G(dim, k);
    for (Eigen::Index i = 0; i < dim; ++i)
        for (Eigen::Index j = 0; j < k; ++j) G(i, j) = gauss(rng);
    Eigen::HouseholderQR<Matrix> qr(G);
    Matrix Q = qr.householderQ() * Matrix::Identity(dim, k);
    // Fix the column signs so the frame is a deterministic function of the seed.
    for (Eigen::Index j = 0; j < k; ++j) {
        Eigen::Index imax;
        Q.col(j).cwiseAbs().maxCoeff(&imax);
        if (Q(imax, j) < 0) Q.col(j) = -Q.col(j);
    }
    return Q;
}

}  // namespace detail

// Lifted Hopf normal form: a planar limit-cycle system embedded into R^D via an
// orthonormal frame V, with exponential decay toward the plane at rate kappa.
// The scalar parameter g enters through mu(g) = (g - g_crit) / scale; the limit
// cycle has radius sqrt(mu) and angular rate omega.
struct HopfSystem {
    Eigen::Index dim = 0;
    Matrix V;              // D x 2, orthonormal columns
    double omega = 0.0;    // rotation rate
    double kappa = 0.0;    // off-plane decay rate
    double g_crit = 0.0;
    double scale = 1.0;
    std::uint64_t seed = 0;

    double mu(double g) const { return (g - g_crit) / scale; }

    // In-plane normal-form velocity for latent z = V^T u.
    Eigen::Vector2d latent_rhs(const Eigen::Vector2d& z, double mu_val) const {
        const double r2 = z.squaredNorm();
        return {mu_val * z(0) - omega * z(1) - z(0) * r2,
                omega * z(0) + mu_val * z(1) - z(1) * r2};
    }

    Vector rhs(const Vector& u, double g) const {
        const Eigen::Vector2d z = V.transpose() * u;
        const Eigen::Vector2d zdot = latent_rhs(z, mu(g));
        return V * zdot - kappa * (u - V * z);
    }
};

inline HopfSystem make_hopf_system(Eigen::Index dim, double omega, double kappa,
                                   double g_crit, double scale, std::uint64_t seed) {
    if (dim < 2) throw InvalidArgument("make_hopf_system: dim must be >= 2");
    if (omega <= 0 || kappa <= 0 || scale <= 0)
        throw InvalidArgument("make_hopf_system: omega, kappa, scale must be positive");
    HopfSystem sys;
    sys.dim = dim;
    sys.V = detail::seeded_orthonormal_frame(dim, 2, seed);
    sys.omega = omega;
    sys.kappa = kappa;
    sys.g_crit = g_crit;
    sys.scale = scale;
    sys.seed = seed;
    return sys;
}

inline double hopf_cycle_radius(const HopfSystem& sys, double g) {
    const double m = sys.mu(g);
    return m > 0 ? std::sqrt(m) : 0.0;
}

// State on the limit cycle at phase angle phi (zero state when mu <= 0).
inline Vector hopf_cycle_state(const HopfSystem& sys, double g, double phi = 0.0) {
    const double r = hopf_cycle_radius(sys, g);
    return sys.V * Eigen::Vector2d(r * std::cos(phi), r * std::sin(phi));
}

// Classical RK4 integration of the lifted Hopf system.
inline Trajectory simulate(const HopfSystem& sys, double g, const Vector& x0,
                           double dt, long steps) {
    if (dt <= 0) throw InvalidArgument("simulate: dt must be positive");
    if (steps < 1) throw InvalidArgument("simulate: steps must be >= 1");
    if (x0.size() != sys.dim) throw DimensionError("simulate: x0 dimension mismatch");

    Trajectory traj;
    traj.parameter = ParameterPoint{g};
    traj.times.reserve(static_cast<std::size_t>(steps) + 1);
    traj.states.reserve(static_cast<std::size_t>(steps) + 1);
    Vector u = x0;
    traj.times.push_back(0.0);
    traj.states.push_back(u);
    for (long k = 0; k < steps; ++k) {
        const Vector k1 = sys.rhs(u, g);
        const Vector k2 = sys.rhs(u + 0.5 * dt * k1, g);
        const Vector k3 = sys.rhs(u + 0.5 * dt * k2, g);
        const Vector k4 = sys.rhs(u + dt * k3, g);
        u += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!u.allFinite()) throw DivergenceError("simulate: non-finite state", k + 1);
        traj.times.push_back(static_cast<double>(k + 1) * dt);
        traj.states.push_back(u);
    }
    return traj;
}

// Lifted supercritical pitchfork: steady states lie on the curve
// u = v1*y + v2*y^2 with y solving mu_eff*y - y^3 = 0. The residual
// F(u) = v1*(mu_eff*y - y^3) - kappa*(u - v1*y - v2*y^2), y = v1^T u,
// vanishes exactly at the lifted roots; u' = F(u) fixes branch stability.
struct PitchforkSystem {
    Eigen::Index dim = 0;
    Vector v1, v2;         // orthonormal lifting directions
    double kappa = 0.0;
    double alpha = 0.0, beta = 0.0;
    double nu_ref = 0.0, w_ref = 0.0;
    std::uint64_t seed = 0;

    double mu_eff(double nu, double w) const {
        return alpha * (nu_ref - nu) + beta * (w_ref - w);
    }

    double observable(const Vector& u) const { return v1.dot(u); }

    Vector lifted_root(double y) const { return v1 * y + v2 * (y * y); }

    Vector residual(const Vector& u, double mu) const {
        const double y = v1.dot(u);
        return v1 * (mu * y - y * y * y) - kappa * (u - v1 * y - v2 * (y * y));
    }

    Matrix jacobian(const Vector& u, double mu) const {
        const double y = v1.dot(u);
        Matrix J = -kappa * Matrix::Identity(dim, dim);
        J += (mu - 3.0 * y * y) * (v1 * v1.transpose());
        J += kappa * (v1 * v1.transpose());
        J += 2.0 * kappa * y * (v2 * v1.transpose());
        return J;
    }
};

inline PitchforkSystem make_pitchfork_system(Eigen::Index dim, double kappa, double alpha,
                                             double beta, double nu_ref, double w_ref,
                                             std::uint64_t seed) {
    if (dim < 2) throw InvalidArgument("make_pitchfork_system: dim must be >= 2");
    if (kappa <= 0 || alpha <= 0 || beta <= 0)
        throw InvalidArgument("make_pitchfork_system: kappa, alpha, beta must be positive");
    PitchforkSystem sys;
    sys.dim = dim;
    const Matrix Q = detail::seeded_orthonormal_frame(dim, 2, seed);
    sys.v1 = Q.col(0);
    sys.v2 = Q.col(1);
    sys.kappa = kappa;
    sys.alpha = alpha;
    sys.beta = beta;
    sys.nu_ref = nu_ref;
    sys.w_ref = w_ref;
    sys.seed = seed;
    return sys;
}

struct SteadyState {
    Vector state;
    bool stable = true;
};

// All equilibria at (nu, w): one stable zero state for mu_eff <= 0, otherwise
// the two stable mirror branches followed by the unstable zero state.
inline std::vector<SteadyState> steady_branches(const PitchforkSystem& sys, double nu, double w) {
    const double mu = sys.mu_eff(nu, w);
    std::vector<SteadyState> out;
    if (mu <= 0) {
        out.push_back({Vector::Zero(sys.dim), true});
    } else {
        const double y = std::sqrt(mu);
        out.push_back({sys.lifted_root(y), true});
        out.push_back({sys.lifted_root(-y), true});
        out.push_back({Vector::Zero(sys.dim), false});
    }
    return out;
}

// Full-order Newton on F(u) = 0; lands on the branch whose basin holds the guess.
inline Vector newton_solve_steady(const PitchforkSystem& sys, double nu, double w,
                                  const Vector& guess, double tol, int max_iter) {
    if (tol <= 0) throw InvalidArgument("newton_solve_steady: tol must be positive");
    if (guess.size() != sys.dim) throw DimensionError("newton_solve_steady: guess dimension mismatch");
    const double mu = sys.mu_eff(nu, w);
    Vector u = guess;
    for (int it = 0; it <= max_iter; ++it) {
        const Vector F = sys.residual(u, mu);
        if (F.norm() <= tol) return u;
        if (it == max_iter) break;
        Eigen::FullPivLU<Matrix> lu(sys.jacobian(u, mu));
        if (!lu.isInvertible())
            throw SingularityError("newton_solve_steady: singular Jacobian");
        u -= lu.solve(F);
        if (!u.allFinite()) throw DivergenceError("newton_solve_steady: non-finite iterate", it);
    }
    throw ConvergenceError("newton_solve_steady: no convergence after " +
                           std::to_string(max_iter) + " iterations");
}

}  // namespace bifrom

#pragma once

#include <complex>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "bifrom/csv.hpp"
#include "bifrom/errors.hpp"
#include "bifrom/types.hpp"

namespace bifrom {

struct DmdModel {
    Matrix U_r;               // N x r DMD modes, orthonormal
    Matrix A_r;               // r x r reduced Koopman operator
    CVector eigenvalues;      // spectrum of A_r
    CMatrix eigenvectors;     // columns: eigenvectors of A_r
    double dt = 0.0;
    double one_step_residual = 0.0;  // ||X2 - A X1||_F / ||X2||_F on training data

    Eigen::Index rank() const { return A_r.rows(); }
    Eigen::Index full_dim() const { return U_r.rows(); }

    // Continuous-time frequencies log(lambda)/dt.
    CVector continuous_frequencies() const {
        CVector f(eigenvalues.size());
        for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = std::log(eigenvalues(i)) / dt;
        return f;
    }
};

namespace detail {

// Smallest rank capturing the given fraction of the squared singular values.
inline Eigen::Index rank_by_energy(const Vector& sigma, double fraction) {
    const double total = sigma.squaredNorm();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
        acc += sigma(i) * sigma(i);
        if (acc >= fraction * total) return i + 1;
    }
    return sigma.size();
}

// Exact DMD on a snapshot pair: X1 ~ U_r S_r V_r^T, A_r = U_r^T X2 V_r S_r^{-1}.
// rank == 0 picks the smallest rank with 1-1e-10 of the singular energy.
inline DmdModel exact_dmd(const Matrix& X1, const Matrix& X2, Eigen::Index rank, double dt) {
    Eigen::BDCSVD<Matrix> svd(X1, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& sigma = svd.singularValues();
    if (sigma(0) == 0.0) throw SingularityError("exact_dmd: zero data matrix");
    Eigen::Index r = rank > 0 ? rank : rank_by_energy(sigma, 1.0 - 1e-10);
    if (r > sigma.size()) throw InvalidArgument("exact_dmd: rank exceeds data rank bound");
    if (sigma(r - 1) / sigma(0) < 1e-13)
        throw SingularityError("exact_dmd: data numerically rank-deficient at rank " +
                               std::to_string(r) + "; reduce the rank");

    DmdModel model;
    model.U_r = svd.matrixU().leftCols(r);
    const Matrix V_r = svd.matrixV().leftCols(r);
    const Vector inv_s = sigma.head(r).cwiseInverse();
    model.A_r = model.U_r.transpose() * X2 * V_r * inv_s.asDiagonal();
    model.dt = dt;

    Eigen::EigenSolver<Matrix> eig(model.A_r);
    model.eigenvalues = eig.eigenvalues();
    model.eigenvectors = eig.eigenvectors();

    const Matrix A_full = model.U_r * model.A_r * model.U_r.transpose();
    model.one_step_residual = (X2 - A_full * X1).norm() / X2.norm();
    return model;
}

}  // namespace detail

// Fit the one-step linear operator x^{k+1} = A x^k on a projected trajectory.
inline DmdModel fit_dmd(const Trajectory& traj, Eigen::Index rank) {
    const Eigen::Index m = static_cast<Eigen::Index>(traj.length());
    if (rank > 0 && m < rank + 1)
        throw InvalidArgument("fit_dmd: trajectory too short for requested rank");
    const Matrix X = traj.as_matrix();
    return detail::exact_dmd(X.leftCols(m - 1), X.rightCols(m - 1), rank, traj.dt());
}

inline Matrix reconstruct_koopman(const DmdModel& model) {
    return model.U_r * model.A_r * model.U_r.transpose();
}

inline Trajectory rollout(const DmdModel& model, const Vector& x0, long steps) {
    if (steps < 1) throw InvalidArgument("rollout: steps must be >= 1");
    if (x0.size() != model.full_dim()) throw DimensionError("rollout: x0 dimension mismatch");
    Trajectory traj;
    traj.parameter = ParameterPoint{0.0};
    traj.times.reserve(static_cast<std::size_t>(steps) + 1);
    traj.states.reserve(static_cast<std::size_t>(steps) + 1);
    traj.times.push_back(0.0);
    traj.states.push_back(x0);
    // Advance in the r-dimensional DMD subspace; the off-subspace component of
    // x0 is annihilated by the first application of A = U_r A_r U_r^T.
    Vector a = model.U_r.transpose() * x0;
    for (long k = 1; k <= steps; ++k) {
        a = model.A_r * a;
        if (!a.allFinite()) throw DivergenceError("rollout: non-finite state", k);
        traj.times.push_back(static_cast<double>(k) * model.dt);
        traj.states.push_back(model.U_r * a);
    }
    return traj;
}

// Scale every nonzero eigenvalue to the unit circle and rebuild A_r from the
// eigendecomposition. Eigenvalues below 1e-14 of the spectral radius count as
// zero and are left in place.
inline DmdModel stabilize(const DmdModel& model) {
    const CMatrix& W = model.eigenvectors;
    Eigen::JacobiSVD<CMatrix> svd(W);
    const double cond = svd.singularValues()(0) / svd.singularValues()(W.cols() - 1);
    if (!(cond < 1e12))
        throw SingularityError("stabilize: eigenbasis condition number " + std::to_string(cond));

    const double lam_max = model.eigenvalues.cwiseAbs().maxCoeff();
    CVector scaled = model.eigenvalues;
    for (Eigen::Index i = 0; i < scaled.size(); ++i) {
        const double mag = std::abs(scaled(i));
        if (mag > 1e-14 * lam_max) scaled(i) /= mag;
    }

    const CMatrix A_c = W * scaled.asDiagonal() * W.inverse();
    const double imag_residue = A_c.imag().cwiseAbs().maxCoeff();
    if (imag_residue > 1e-10)
        throw SingularityError("stabilize: reconstruction not real (imaginary residue " +
                               std::to_string(imag_residue) + ")");

    DmdModel out = model;
    out.A_r = A_c.real();
    out.eigenvalues = scaled;
    return out;
}

// Hankel matrix with constant anti-diagonals: H(j,k) = series(j+k).
inline Matrix build_hankel(const Vector& series, Eigen::Index rows, Eigen::Index cols) {
    if (rows < 1 || cols < 1) throw InvalidArgument("build_hankel: rows/cols must be >= 1");
    if (series.size() < rows + cols - 1)
        throw InvalidArgument("build_hankel: series too short (" + std::to_string(series.size()) +
                              " < " + std::to_string(rows + cols - 1) + ")");
    Matrix H(rows, cols);
    for (Eigen::Index j = 0; j < rows; ++j)
        for (Eigen::Index k = 0; k < cols; ++k) H(j, k) = series(j + k);
    return H;
}

// Delay-embedded DMD: one Hankel block per observable (POD coefficient),
// Frobenius-normalized and stacked into composite data matrices.
struct HankelDmdModel {
    Eigen::Index delay = 0;        // n: embedded window holds n+1 samples
    Eigen::Index observables = 0;  // N
    Vector scales;                 // per-observable Frobenius factors (1 for dropped blocks)
    Matrix U_r;                    // composite DMD modes, N*(n+1) x r
    Matrix A_r;
    CVector eigenvalues;
    CMatrix eigenvectors;
    CMatrix koopman_modes;  // exact DMD modes of the composite pair, N*(n+1) x r
    double dt = 0.0;
    double one_step_residual = 0.0;

    Eigen::Index rank() const { return A_r.rows(); }
    Eigen::Index window() const { return delay + 1; }
};

inline HankelDmdModel fit_hankel_dmd(const Trajectory& traj, Eigen::Index delay,
                                     Eigen::Index rank = 0) {
    const Eigen::Index m = static_cast<Eigen::Index>(traj.length());
    const Eigen::Index N = traj.state_dim();
    if (delay < 1) throw InvalidArgument("fit_hankel_dmd: delay must be >= 1");
    if (m < delay + std::max<Eigen::Index>(rank, 1) + 1)
        throw InvalidArgument("fit_hankel_dmd: trajectory too short for delay/rank");

    const Matrix X = traj.as_matrix();  // N x m
    const Eigen::Index win = delay + 1;
    const Eigen::Index hcols = m - delay;  // columns of each full Hankel block

    HankelDmdModel model;
    model.delay = delay;
    model.observables = N;
    model.dt = traj.dt();
    model.scales = Vector::Ones(N);

    Matrix composite(N * win, hcols);
    bool any_nonzero = false;
    for (Eigen::Index i = 0; i < N; ++i) {
        Matrix H = build_hankel(X.row(i).transpose(), win, hcols);
        const double norm = H.norm();
        if (norm > 0.0) {
            model.scales(i) = norm;
            H /= norm;
            any_nonzero = true;
        }
        // zero-norm observable: block stays zero, factor 1
        composite.middleRows(i * win, win) = H;
    }
    if (!any_nonzero) throw SingularityError("fit_hankel_dmd: all observables are zero");

    const Matrix X1 = composite.leftCols(hcols - 1);
    const Matrix X2 = composite.rightCols(hcols - 1);
    DmdModel core = detail::exact_dmd(X1, X2, rank, model.dt);
    model.U_r = std::move(core.U_r);
    model.A_r = std::move(core.A_r);
    model.eigenvalues = std::move(core.eigenvalues);
    model.eigenvectors = std::move(core.eigenvectors);
    model.one_step_residual = core.one_step_residual;
    // Exact DMD modes in the composite space: U_r W (projected form).
    model.koopman_modes = model.U_r * model.eigenvectors;
    return model;
}

namespace detail {

inline Vector embed_window(const HankelDmdModel& model, const std::vector<Vector>& window) {
    const Eigen::Index win = model.window();
    if (static_cast<Eigen::Index>(window.size()) != win)
        throw DimensionError("rollout_hankel: window must hold exactly delay+1 states");
    Vector y(model.observables * win);
    for (Eigen::Index i = 0; i < model.observables; ++i)
        for (Eigen::Index k = 0; k < win; ++k) {
            if (window[static_cast<std::size_t>(k)].size() != model.observables)
                throw DimensionError("rollout_hankel: window state dimension mismatch");
            y(i * win + k) = window[static_cast<std::size_t>(k)](i) / model.scales(i);
        }
    return y;
}

}  // namespace detail

// Advance the delay-embedded state and read the newest time slice of each
// observable block. Output: the n+1 window states followed by `steps`
// predicted states.
inline Trajectory rollout_hankel(const HankelDmdModel& model,
                                 const std::vector<Vector>& window, long steps) {
    if (steps < 1) throw InvalidArgument("rollout_hankel: steps must be >= 1");
    const Eigen::Index win = model.window();
    Vector y = detail::embed_window(model, window);

    Trajectory traj;
    traj.parameter = ParameterPoint{0.0};
    traj.times.reserve(window.size() + static_cast<std::size_t>(steps));
    traj.states.reserve(window.size() + static_cast<std::size_t>(steps));
    for (std::size_t k = 0; k < window.size(); ++k) {
        traj.times.push_back(static_cast<double>(k) * model.dt);
        traj.states.push_back(window[k]);
    }
    Vector a = model.U_r.transpose() * y;
    for (long k = 1; k <= steps; ++k) {
        a = model.A_r * a;
        if (!a.allFinite()) throw DivergenceError("rollout_hankel: non-finite state", k);
        const Vector yk = model.U_r * a;
        Vector state(model.observables);
        for (Eigen::Index i = 0; i < model.observables; ++i)
            state(i) = yk(i * win + win - 1) * model.scales(i);
        traj.times.push_back(static_cast<double>(model.delay + k) * model.dt);
        traj.states.push_back(state);
    }
    return traj;
}

// --- persistence ------------------------------------------------------------

inline void save_dmd_model(const DmdModel& model, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory: " + dir.string());
    csv::write_matrix((dir / "U_r.csv").string(), model.U_r);
    csv::write_matrix((dir / "A_r.csv").string(), model.A_r);
    csv::write_matrix((dir / "eig_real.csv").string(), model.eigenvalues.real());
    csv::write_matrix((dir / "eig_imag.csv").string(), model.eigenvalues.imag());
    nlohmann::json meta;
    meta["rank"] = model.rank();
    meta["dt"] = model.dt;
    meta["one_step_residual"] = model.one_step_residual;
    std::ofstream out(dir / "dmd.json");
    if (!out) throw IoError("cannot write: " + (dir / "dmd.json").string());
    out << meta.dump(2) << '\n';
}

inline void save_hankel_model(const HankelDmdModel& model, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory: " + dir.string());
    csv::write_matrix((dir / "U_r.csv").string(), model.U_r);
    csv::write_matrix((dir / "A_r.csv").string(), model.A_r);
    csv::write_matrix((dir / "scales.csv").string(), model.scales);
    csv::write_matrix((dir / "eig_real.csv").string(), model.eigenvalues.real());
    csv::write_matrix((dir / "eig_imag.csv").string(), model.eigenvalues.imag());
    nlohmann::json meta;
    meta["rank"] = model.rank();
    meta["delay"] = model.delay;
    meta["observables"] = model.observables;
    meta["dt"] = model.dt;
    meta["one_step_residual"] = model.one_step_residual;
    std::ofstream out(dir / "hankel.json");
    if (!out) throw IoError("cannot write: " + (dir / "hankel.json").string());
    out << meta.dump(2) << '\n';
}

inline HankelDmdModel load_hankel_model(const std::filesystem::path& dir) {
    HankelDmdModel model;
    model.U_r = csv::read_matrix((dir / "U_r.csv").string());
    model.A_r = csv::read_matrix((dir / "A_r.csv").string());
    model.scales = csv::read_matrix((dir / "scales.csv").string()).col(0);
    std::ifstream in(dir / "hankel.json");
    if (!in) throw IoError("missing file: " + (dir / "hankel.json").string());
    nlohmann::json meta;
    try {
        in >> meta;
        model.delay = meta.at("delay").get<Eigen::Index>();
        model.observables = meta.at("observables").get<Eigen::Index>();
        model.dt = meta.at("dt").get<double>();
        model.one_step_residual = meta.at("one_step_residual").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError((dir / "hankel.json").string() + ": " + e.what());
    }
    Eigen::EigenSolver<Matrix> eig(model.A_r);
    model.eigenvalues = eig.eigenvalues();
    model.eigenvectors = eig.eigenvectors();
    model.koopman_modes = model.U_r * model.eigenvectors;
    return model;
}

inline DmdModel load_dmd_model(const std::filesystem::path& dir) {
    DmdModel model;
    model.U_r = csv::read_matrix((dir / "U_r.csv").string());
    model.A_r = csv::read_matrix((dir / "A_r.csv").string());
    std::ifstream in(dir / "dmd.json");
    if (!in) throw IoError("missing file: " + (dir / "dmd.json").string());
    nlohmann::json meta;
    try {
        in >> meta;
        model.dt = meta.at("dt").get<double>();
        model.one_step_residual = meta.at("one_step_residual").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError((dir / "dmd.json").string() + ": " + e.what());
    }
    Eigen::EigenSolver<Matrix> eig(model.A_r);
    model.eigenvalues = eig.eigenvalues();
    model.eigenvectors = eig.eigenvectors();
    return model;
}

}  // namespace bifrom

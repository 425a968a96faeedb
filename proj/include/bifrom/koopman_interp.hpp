#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "bifrom/errors.hpp"
#include "bifrom/types.hpp"

namespace bifrom {

// Reduced Koopman operators sampled along one parameter axis, all expressed in
// the same global POD/DMD basis (identified by basis_id).
struct OperatorFamily {
    struct Sample {
        double parameter;
        Matrix op;
    };
    std::vector<Sample> samples;
    std::string basis_id;

    void validate() const {
        if (samples.size() < 2)
            throw ValidationError("OperatorFamily: needs at least 2 samples");
        const Eigen::Index r = samples.front().op.rows();
        for (const auto& s : samples) {
            if (s.op.rows() != r || s.op.cols() != r)
                throw ValidationError("OperatorFamily: operator size mismatch");
        }
        for (std::size_t i = 1; i < samples.size(); ++i)
            if (!(samples[i].parameter > samples[i - 1].parameter))
                throw ValidationError("OperatorFamily: parameters not strictly increasing");
    }
};

struct InterpolatedOperator {
    Matrix op;
    bool used_fallback = false;  // entrywise-linear path taken
};

namespace detail {

// Principal matrix logarithm through the complex eigendecomposition. Fails
// (returns false) when an eigenvalue sits on the closed negative real axis or
// the eigenbasis is too ill-conditioned for a trustworthy reconstruction.
inline bool principal_log(const Matrix& A, Matrix& L) {
    Eigen::ComplexEigenSolver<Matrix> eig(A);
    if (eig.info() != Eigen::Success) return false;
    const CVector& lam = eig.eigenvalues();
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        const double re = lam(i).real(), im = lam(i).imag();
        const double mag = std::abs(lam(i));
        if (mag == 0.0) return false;
        if (re <= 0.0 && std::abs(im) <= 1e-12 * std::max(1.0, mag)) return false;
    }
    const CMatrix& W = eig.eigenvectors();
    Eigen::JacobiSVD<CMatrix> svd(W);
    const double cond = svd.singularValues()(0) / svd.singularValues()(W.cols() - 1);
    if (!(cond < 1e12)) return false;
    CVector loglam(lam.size());
    for (Eigen::Index i = 0; i < lam.size(); ++i) loglam(i) = std::log(lam(i));
    const CMatrix Lc = W * loglam.asDiagonal() * W.inverse();
    if (Lc.imag().cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, Lc.real().cwiseAbs().maxCoeff()))
        return false;
    L = Lc.real();
    return true;
}

}  // namespace detail

// Piecewise log-Euclidean interpolation between the two bracketing samples:
// exp((1-theta) log A1 + theta log A2), falling back to entrywise-linear
// blending when either principal logarithm is inadmissible. Sample parameters
// reproduce the stored operator exactly under both schemes.
inline InterpolatedOperator interpolate_koopman(const OperatorFamily& family, double target) {
    family.validate();
    const double lo = family.samples.front().parameter;
    const double hi = family.samples.back().parameter;
    if (target < lo || target > hi)
        throw InvalidArgument("interpolate_koopman: target " + std::to_string(target) +
                              " outside sampled range [" + std::to_string(lo) + ", " +
                              std::to_string(hi) + "] (no extrapolation)");

    for (const auto& s : family.samples)
        if (s.parameter == target) return {s.op, false};

    auto it = std::upper_bound(family.samples.begin(), family.samples.end(), target,
                               [](double t, const OperatorFamily::Sample& s) {
                                   return t < s.parameter;
                               });
    const auto& right = *it;
    const auto& left = *(it - 1);
    const double theta = (target - left.parameter) / (right.parameter - left.parameter);

    Matrix L1, L2;
    if (detail::principal_log(left.op, L1) && detail::principal_log(right.op, L2)) {
        const Matrix L = (1.0 - theta) * L1 + theta * L2;
        return {L.exp(), false};
    }
    return {(1.0 - theta) * left.op + theta * right.op, true};
}

}  // namespace bifrom

#pragma once

#include <filesystem>
#include <fstream>
#include <variant>

#include <nlohmann/json.hpp>

#include "bifrom/csv.hpp"
#include "bifrom/errors.hpp"
#include "bifrom/types.hpp"

namespace bifrom {

// Retained-dimension selector: either a fixed rank or an energy fraction of
// the squared singular values.
struct FixedRank {
    Eigen::Index n;
};
struct EnergyFraction {
    double eta;
};
using PodSelector = std::variant<FixedRank, EnergyFraction>;

struct PodBasis {
    Matrix modes;            // D x N, orthonormal columns
    Vector singular_values;  // all computed values, non-increasing
    Eigen::Index rank() const { return modes.cols(); }
    Eigen::Index state_dim() const { return modes.rows(); }
};

// POD of a D x S snapshot matrix: leading left singular vectors, no mean
// centering. Each retained mode's largest-magnitude entry is made positive so
// bases (and hence reduced operators) are reproducible across runs.
inline PodBasis compute_pod(const Matrix& snapshots, const PodSelector& selector) {
    if (snapshots.cols() < 1) throw InvalidArgument("compute_pod: empty snapshot matrix");
    Eigen::BDCSVD<Matrix> svd(snapshots, Eigen::ComputeThinU);
    const Vector& sigma = svd.singularValues();
    const double total_energy = sigma.squaredNorm();

    Eigen::Index n = 0;
    if (const auto* fixed = std::get_if<FixedRank>(&selector)) {
        n = fixed->n;
        if (n < 1 || n > std::min(snapshots.rows(), snapshots.cols()))
            throw InvalidArgument("compute_pod: invalid rank " + std::to_string(n));
        if (sigma(n - 1) <= 1e-13 * std::max(sigma(0), 1e-300) || sigma(0) == 0.0)
            throw SingularityError("compute_pod: requested rank exceeds numerical rank");
    } else {
        const double eta = std::get<EnergyFraction>(selector).eta;
        if (!(eta > 0.0 && eta <= 1.0))
            throw InvalidArgument("compute_pod: energy fraction must be in (0,1]");
        if (total_energy == 0.0)
            throw SingularityError("compute_pod: zero snapshot matrix");
        double acc = 0.0;
        for (n = 0; n < sigma.size(); ++n) {
            acc += sigma(n) * sigma(n);
            if (acc >= eta * total_energy) {
                ++n;
                break;
            }
        }
    }

    PodBasis basis;
    basis.modes = svd.matrixU().leftCols(n);
    basis.singular_values = sigma;
    for (Eigen::Index j = 0; j < n; ++j) {
        Eigen::Index imax;
        basis.modes.col(j).cwiseAbs().maxCoeff(&imax);
        if (basis.modes(imax, j) < 0) basis.modes.col(j) = -basis.modes.col(j);
    }
    return basis;
}

inline Vector project(const PodBasis& basis, const Vector& state) {
    if (state.size() != basis.state_dim())
        throw DimensionError("project: state dimension mismatch");
    return basis.modes.transpose() * state;
}

inline Vector lift(const PodBasis& basis, const Vector& coeffs) {
    if (coeffs.size() != basis.rank())
        throw DimensionError("lift: coefficient dimension mismatch");
    return basis.modes * coeffs;
}

inline Trajectory project(const PodBasis& basis, const Trajectory& traj) {
    Trajectory out;
    out.parameter = traj.parameter;
    out.times = traj.times;
    out.states.reserve(traj.states.size());
    for (const auto& s : traj.states) out.states.push_back(project(basis, s));
    return out;
}

inline void save_pod_basis(const PodBasis& basis, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory: " + dir.string());
    csv::write_matrix((dir / "modes.csv").string(), basis.modes);
    nlohmann::json meta;
    meta["rank"] = basis.rank();
    std::vector<double> sv(basis.singular_values.begin(), basis.singular_values.end());
    meta["singular_values"] = sv;
    std::ofstream out(dir / "pod.json");
    if (!out) throw IoError("cannot write: " + (dir / "pod.json").string());
    out << meta.dump(2) << '\n';
}

inline PodBasis load_pod_basis(const std::filesystem::path& dir) {
    PodBasis basis;
    basis.modes = csv::read_matrix((dir / "modes.csv").string());
    std::ifstream in(dir / "pod.json");
    if (!in) throw IoError("missing file: " + (dir / "pod.json").string());
    nlohmann::json meta;
    try {
        in >> meta;
        const auto sv = meta.at("singular_values").get<std::vector<double>>();
        basis.singular_values = Eigen::Map<const Vector>(sv.data(), static_cast<Eigen::Index>(sv.size()));
        if (meta.at("rank").get<Eigen::Index>() != basis.rank())
            throw ParseError((dir / "pod.json").string() + ": rank disagrees with modes.csv");
    } catch (const nlohmann::json::exception& e) {
        throw ParseError((dir / "pod.json").string() + ": " + e.what());
    }
    return basis;
}

}  // namespace bifrom

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "bifrom/errors.hpp"

namespace bifrom {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

// A point in parameter space (1-D for the Hopf-type study, 2-D for the
// pitchfork study).
struct ParameterPoint {
    std::vector<double> coords;

    ParameterPoint() = default;
    explicit ParameterPoint(std::vector<double> c) : coords(std::move(c)) {}
    ParameterPoint(std::initializer_list<double> c) : coords(c) {}

    std::size_t dim() const { return coords.size(); }
    double operator[](std::size_t i) const { return coords[i]; }

    void validate() const {
        if (coords.empty())
            throw ValidationError("ParameterPoint: empty coordinate vector");
        for (double c : coords)
            if (!std::isfinite(c))
                throw ValidationError("ParameterPoint: non-finite coordinate");
    }

    bool operator==(const ParameterPoint& o) const { return coords == o.coords; }
};

// Time-ordered states at one parameter point, uniform time step.
struct Trajectory {
    ParameterPoint parameter;
    std::vector<double> times;
    std::vector<Vector> states;

    std::size_t length() const { return states.size(); }
    Eigen::Index state_dim() const { return states.empty() ? 0 : states.front().size(); }
    double dt() const { return times.size() >= 2 ? times[1] - times[0] : 0.0; }

    // As a D x m matrix, one column per time step.
    Matrix as_matrix() const {
        Matrix X(state_dim(), static_cast<Eigen::Index>(states.size()));
        for (std::size_t k = 0; k < states.size(); ++k) X.col(static_cast<Eigen::Index>(k)) = states[k];
        return X;
    }

    void validate() const {
        parameter.validate();
        if (states.size() < 2)
            throw ValidationError("Trajectory: needs at least 2 states");
        if (times.size() != states.size())
            throw ValidationError("Trajectory: times/states length mismatch");
        const Eigen::Index d = states.front().size();
        for (const auto& s : states)
            if (s.size() != d)
                throw ValidationError("Trajectory: inconsistent state dimensions");
        const double step = times[1] - times[0];
        if (step <= 0.0)
            throw ValidationError("Trajectory: times not strictly increasing");
        for (std::size_t k = 1; k < times.size(); ++k) {
            const double h = times[k] - times[k - 1];
            if (h <= 0.0)
                throw ValidationError("Trajectory: times not strictly increasing");
            if (std::abs(h - step) > 1e-12 * std::max(1.0, std::abs(step)))
                throw ValidationError("Trajectory: non-uniform time step");
        }
    }
};

enum class Branch { single, upper, lower };

inline std::string to_string(Branch b) {
    switch (b) {
        case Branch::single: return "single";
        case Branch::upper: return "upper";
        case Branch::lower: return "lower";
    }
    return "?";
}

inline Branch branch_from_string(const std::string& s) {
    if (s == "single") return Branch::single;
    if (s == "upper") return Branch::upper;
    if (s == "lower") return Branch::lower;
    throw ParseError("unknown branch tag: " + s);
}

// Steady-state snapshots across the parameter grid, one or two per point.
struct SnapshotSet {
    struct Entry {
        ParameterPoint parameter;
        Branch branch = Branch::single;
        Vector state;
    };

    std::vector<Entry> entries;
    std::string generator;
    std::uint64_t seed = 0;

    std::size_t size() const { return entries.size(); }
    Eigen::Index state_dim() const { return entries.empty() ? 0 : entries.front().state.size(); }

    void validate() const {
        const Eigen::Index d = state_dim();
        for (const auto& e : entries) {
            e.parameter.validate();
            if (e.state.size() != d)
                throw ValidationError("SnapshotSet: inconsistent state dimensions");
        }
        // At most two entries per parameter; upper/lower only as a pair,
        // never mixed with a single tag at the same point.
        for (std::size_t i = 0; i < entries.size(); ++i) {
            int count = 0;
            bool has_single = false, has_upper = false, has_lower = false;
            for (const auto& e : entries) {
                if (!(e.parameter == entries[i].parameter)) continue;
                ++count;
                if (e.branch == Branch::single) has_single = true;
                if (e.branch == Branch::upper) has_upper = true;
                if (e.branch == Branch::lower) has_lower = true;
            }
            if (count > 2)
                throw ValidationError("SnapshotSet: more than two entries at one parameter");
            if (count == 2 && !(has_upper && has_lower))
                throw ValidationError("SnapshotSet: paired entries must be tagged upper/lower");
            if (count == 1 && (has_upper || has_lower) && !has_single) {
                // A lone upper or lower entry is allowed only if its partner was
                // simply not computed; nothing to check here.
            }
        }
    }
};

inline double relative_l2(const Vector& approx, const Vector& truth, double floor_norm = 1e-8) {
    return (approx - truth).norm() / std::max(truth.norm(), floor_norm);
}

}  // namespace bifrom

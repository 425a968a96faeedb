#pragma once

#include <limits>
#include <map>
#include <random>

#include "bifrom/errors.hpp"
#include "bifrom/fom.hpp"
#include "bifrom/mlp.hpp"
#include "bifrom/pod.hpp"
#include "bifrom/types.hpp"

namespace bifrom {

struct ClusterModel {
    int k = 0;
    std::vector<Vector> centroids;
    std::vector<int> assignment;  // snapshot index -> cluster id
    double energy = 0.0;          // sum of squared distances to assigned centroids
    std::vector<double> energy_history;  // one value per Lloyd iteration
    std::uint64_t seed = 0;
};

namespace detail {

inline int nearest_centroid(const Vector& x, const std::vector<Vector>& centroids) {
    int best = 0;
    double best_d = (x - centroids[0]).squaredNorm();
    for (std::size_t c = 1; c < centroids.size(); ++c) {
        const double d = (x - centroids[c]).squaredNorm();
        if (d < best_d) {  // strict: ties keep the lowest id
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

inline double clustering_energy(const std::vector<Vector>& points,
                                const std::vector<Vector>& centroids,
                                const std::vector<int>& assignment) {
    double e = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i)
        e += (points[i] - centroids[static_cast<std::size_t>(assignment[i])]).squaredNorm();
    return e;
}

// k-means++ seeding: each next centroid drawn with probability proportional to
// the squared distance from the nearest chosen one.
inline std::vector<Vector> kmeanspp_seeds(const std::vector<Vector>& points, int k,
                                          std::mt19937_64& rng) {
    std::vector<Vector> centroids;
    std::uniform_int_distribution<std::size_t> first(0, points.size() - 1);
    centroids.push_back(points[first(rng)]);
    std::vector<double> d2(points.size());
    while (static_cast<int>(centroids.size()) < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centroids) best = std::min(best, (points[i] - c).squaredNorm());
            d2[i] = best;
            total += best;
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng), acc = 0.0;
            for (std::size_t i = 0; i < points.size(); ++i) {
                acc += d2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = first(rng);  // all points coincide with a centroid
        }
        centroids.push_back(points[pick]);
    }
    return centroids;
}

}  // namespace detail

inline ClusterModel kmeans_cluster(const std::vector<Vector>& points, int k,
                                   std::uint64_t seed, int max_iter = 200) {
    if (k < 1 || static_cast<std::size_t>(k) > points.size())
        throw InvalidArgument("kmeans_cluster: k must be in [1, #snapshots]");
    std::mt19937_64 rng(seed);
    ClusterModel model;
    model.k = k;
    model.seed = seed;
    model.centroids = detail::kmeanspp_seeds(points, k, rng);
    model.assignment.assign(points.size(), 0);

    double prev_energy = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const int c = detail::nearest_centroid(points[i], model.centroids);
            if (c != model.assignment[i]) {
                model.assignment[i] = c;
                changed = true;
            }
        }
        // Update means; an emptied cluster is reseeded to the farthest point.
        std::vector<Vector> sums(static_cast<std::size_t>(k),
                                 Vector::Zero(points.front().size()));
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            sums[static_cast<std::size_t>(model.assignment[i])] += points[i];
            ++counts[static_cast<std::size_t>(model.assignment[i])];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                model.centroids[static_cast<std::size_t>(c)] =
                    sums[static_cast<std::size_t>(c)] / counts[static_cast<std::size_t>(c)];
            } else {
                std::size_t far = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < points.size(); ++i) {
                    const double d =
                        (points[i] - model.centroids[static_cast<std::size_t>(model.assignment[i])])
                            .squaredNorm();
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                model.centroids[static_cast<std::size_t>(c)] = points[far];
                model.assignment[far] = c;
                changed = true;
            }
        }
        // Re-assign once more so energy is measured against the new centroids.
        for (std::size_t i = 0; i < points.size(); ++i)
            model.assignment[i] = detail::nearest_centroid(points[i], model.centroids);
        const double energy = detail::clustering_energy(points, model.centroids, model.assignment);
        model.energy_history.push_back(energy);
        if (energy > prev_energy + 1e-12 * std::max(1.0, prev_energy))
            throw std::logic_error("kmeans_cluster: energy increased across an iteration");
        const bool converged = !changed || std::abs(prev_energy - energy) == 0.0;
        prev_energy = energy;
        if (converged) break;
    }
    model.energy = prev_energy;
    return model;
}

// Mean silhouette score of a clustering (0 when k == 1 or all singletons).
inline double silhouette_score(const std::vector<Vector>& points, const ClusterModel& model) {
    if (model.k < 2) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        std::vector<double> mean_dist(static_cast<std::size_t>(model.k), 0.0);
        std::vector<int> counts(static_cast<std::size_t>(model.k), 0);
        for (std::size_t j = 0; j < points.size(); ++j) {
            if (j == i) continue;
            mean_dist[static_cast<std::size_t>(model.assignment[j])] +=
                (points[i] - points[j]).norm();
            ++counts[static_cast<std::size_t>(model.assignment[j])];
        }
        const int own = model.assignment[i];
        if (counts[static_cast<std::size_t>(own)] == 0) continue;  // singleton: s = 0
        const double a = mean_dist[static_cast<std::size_t>(own)] /
                         counts[static_cast<std::size_t>(own)];
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < model.k; ++c) {
            if (c == own || counts[static_cast<std::size_t>(c)] == 0) continue;
            b = std::min(b, mean_dist[static_cast<std::size_t>(c)] /
                                counts[static_cast<std::size_t>(c)]);
        }
        if (std::isfinite(b)) total += (b - a) / std::max(a, b);
    }
    return total / static_cast<double>(points.size());
}

struct KSelection {
    int chosen_k = 1;
    std::vector<int> ks;
    std::vector<double> energies;
    std::vector<double> silhouettes;
    bool degenerate = false;  // all snapshots identical
};

inline KSelection select_k(const std::vector<Vector>& points, int k_min, int k_max,
                           std::uint64_t seed) {
    if (k_min < 1 || k_max < k_min || static_cast<std::size_t>(k_max) > points.size())
        throw InvalidArgument("select_k: invalid k range");
    KSelection sel;
    bool all_same = true;
    for (std::size_t i = 1; i < points.size(); ++i)
        if ((points[i] - points[0]).norm() > 0) all_same = false;
    if (all_same) {
        sel.degenerate = true;
        sel.chosen_k = 1;
        return sel;
    }
    double best_s = -std::numeric_limits<double>::infinity();
    for (int k = k_min; k <= k_max; ++k) {
        const ClusterModel m = kmeans_cluster(points, k, seed);
        const double s = silhouette_score(points, m);
        sel.ks.push_back(k);
        sel.energies.push_back(m.energy);
        sel.silhouettes.push_back(s);
        if (s > best_s) {  // strict: ties keep the smaller k
            best_s = s;
            sel.chosen_k = k;
        }
    }
    return sel;
}

inline std::vector<PodBasis> build_cluster_bases(const std::vector<Vector>& points,
                                                 const ClusterModel& model,
                                                 const PodSelector& selector) {
    std::vector<PodBasis> bases;
    bases.reserve(static_cast<std::size_t>(model.k));
    for (int c = 0; c < model.k; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < points.size(); ++i)
            if (model.assignment[i] == c) members.push_back(i);
        if (members.empty())
            throw InvalidArgument("build_cluster_bases: empty cluster " + std::to_string(c));
        Matrix X(points.front().size(), static_cast<Eigen::Index>(members.size()));
        for (std::size_t j = 0; j < members.size(); ++j)
            X.col(static_cast<Eigen::Index>(j)) = points[members[j]];
        // Fixed rank is capped at the cluster's numerical capacity.
        PodSelector sel = selector;
        if (const auto* fixed = std::get_if<FixedRank>(&selector)) {
            const Eigen::Index cap = std::min(X.rows(), X.cols());
            sel = FixedRank{std::min(fixed->n, cap)};
        }
        bases.push_back(compute_pod(X, sel));
    }
    return bases;
}

struct LocalRomSolution {
    Vector coeffs;
    Vector state;
};

// Galerkin-projected Newton: solve Phi^T F(Phi a) = 0 with the exact reduced
// Jacobian Phi^T J(Phi a) Phi.
inline LocalRomSolution solve_local_rom(const PitchforkSystem& system, const PodBasis& basis,
                                        double nu, double w, const Vector& guess_coeffs,
                                        double tol = 1e-12, int max_iter = 50) {
    if (guess_coeffs.size() != basis.rank())
        throw DimensionError("solve_local_rom: guess dimension mismatch");
    const double mu = system.mu_eff(nu, w);
    Vector a = guess_coeffs;
    for (int it = 0; it <= max_iter; ++it) {
        const Vector u = lift(basis, a);
        const Vector g = basis.modes.transpose() * system.residual(u, mu);
        if (g.norm() <= tol) return {a, u};
        if (it == max_iter) break;
        const Matrix Jr = basis.modes.transpose() * system.jacobian(u, mu) * basis.modes;
        Eigen::FullPivLU<Matrix> lu(Jr);
        if (!lu.isInvertible())
            throw SingularityError("solve_local_rom: singular reduced Jacobian");
        a -= lu.solve(g);
        if (!a.allFinite()) throw DivergenceError("solve_local_rom: non-finite iterate", it);
    }
    throw ConvergenceError("solve_local_rom: no convergence after " +
                           std::to_string(max_iter) + " iterations");
}

// Relative errors of every local ROM at every snapshot location.
struct ErrorTable {
    std::vector<ParameterPoint> parameters;  // one per snapshot entry (row)
    std::vector<Branch> branches;
    Matrix errors;                        // rows x clusters, NaN where failed
    std::vector<std::vector<bool>> failed;

    Eigen::Index rows() const { return errors.rows(); }
    Eigen::Index clusters() const { return errors.cols(); }

    // Lowest-error cluster of a row (ties and failures resolved to the lowest
    // converged id).
    int argmin_cluster(Eigen::Index row) const {
        int best = -1;
        double best_e = std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < clusters(); ++c) {
            if (failed[static_cast<std::size_t>(row)][static_cast<std::size_t>(c)]) continue;
            if (errors(row, c) < best_e) {
                best_e = errors(row, c);
                best = static_cast<int>(c);
            }
        }
        if (best < 0) throw ConvergenceError("ErrorTable: every cluster failed on row " +
                                             std::to_string(row));
        return best;
    }
};

inline ErrorTable build_error_table(const SnapshotSet& set, const std::vector<PodBasis>& bases,
                                    const PitchforkSystem& system, double tol = 1e-10,
                                    int max_iter = 50) {
    ErrorTable table;
    const Eigen::Index rows = static_cast<Eigen::Index>(set.size());
    const Eigen::Index cols = static_cast<Eigen::Index>(bases.size());
    table.errors = Matrix::Constant(rows, cols, std::numeric_limits<double>::quiet_NaN());
    table.failed.assign(static_cast<std::size_t>(rows),
                        std::vector<bool>(static_cast<std::size_t>(cols), false));
    for (Eigen::Index e = 0; e < rows; ++e) {
        const auto& entry = set.entries[static_cast<std::size_t>(e)];
        table.parameters.push_back(entry.parameter);
        table.branches.push_back(entry.branch);
        for (Eigen::Index c = 0; c < cols; ++c) {
            const PodBasis& basis = bases[static_cast<std::size_t>(c)];
            const Vector guess = project(basis, entry.state);
            try {
                const LocalRomSolution sol = solve_local_rom(
                    system, basis, entry.parameter[0], entry.parameter[1], guess, tol, max_iter);
                table.errors(e, c) = relative_l2(sol.state, entry.state);
            } catch (const std::runtime_error&) {
                table.failed[static_cast<std::size_t>(e)][static_cast<std::size_t>(c)] = true;
            }
        }
    }
    return table;
}

// Index of the snapshot closest to the online parameter in normalized
// coordinates (ties resolved to the lowest index).
inline std::size_t nearest_snapshot_index(const ParameterPoint& online,
                                          const std::vector<ParameterPoint>& snapshot_params,
                                          const ParamNormalizer& normalizer) {
    if (snapshot_params.empty()) throw InvalidArgument("nearest_snapshot_index: no snapshots");
    const Vector q = normalizer.normalize(online);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < snapshot_params.size(); ++i) {
        const double d = (normalizer.normalize(snapshot_params[i]) - q).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

inline int select_cluster_nearest(const ParameterPoint& online,
                                  const std::vector<ParameterPoint>& snapshot_params,
                                  const ClusterModel& model, const ParamNormalizer& normalizer) {
    return model.assignment[nearest_snapshot_index(online, snapshot_params, normalizer)];
}

enum class SelectionStrategy { nearest, dual_classifier, oracle };

inline SelectionStrategy strategy_from_string(const std::string& s) {
    if (s == "nearest") return SelectionStrategy::nearest;
    if (s == "dual") return SelectionStrategy::dual_classifier;
    if (s == "oracle") return SelectionStrategy::oracle;
    throw InvalidArgument("unknown strategy: " + s + " (expected nearest|dual|oracle)");
}

struct BifurcationDiagram {
    struct PointEntry {
        Branch branch = Branch::single;
        double observable = 0.0;
        Vector state;
    };
    std::vector<ParameterPoint> grid;
    std::vector<std::vector<PointEntry>> entries;  // 0..2 per grid point
    long failed_solves = 0;

    void validate() const {
        for (const auto& ent : entries) {
            if (ent.size() > 2)
                throw ValidationError("BifurcationDiagram: more than two entries at a point");
            if (ent.size() == 2 && ent[0].branch == ent[1].branch)
                throw ValidationError("BifurcationDiagram: duplicate branch tags at a point");
        }
    }
};

// Everything the diagram reconstruction needs besides the grid.
struct LocalRomContext {
    const PitchforkSystem* system = nullptr;
    const SnapshotSet* snapshots = nullptr;
    const ClusterModel* clusters = nullptr;
    const std::vector<PodBasis>* bases = nullptr;
    ParamNormalizer normalizer;
    const ErrorTable* table = nullptr;       // oracle strategy
    const DualClassifier* dual = nullptr;    // dual strategy
    double tol = 1e-10;
    int max_iter = 50;

    std::vector<ParameterPoint> snapshot_params() const {
        std::vector<ParameterPoint> out;
        for (const auto& e : snapshots->entries) out.push_back(e.parameter);
        return out;
    }
};

namespace detail {

// Nearest snapshot (normalized parameter distance) among those assigned to the
// given cluster; ties keep the lowest snapshot index.
inline std::size_t nearest_snapshot_in_cluster(const LocalRomContext& ctx,
                                               const ParameterPoint& online, int cluster) {
    const Vector q = ctx.normalizer.normalize(online);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    bool found = false;
    for (std::size_t i = 0; i < ctx.snapshots->size(); ++i) {
        if (ctx.clusters->assignment[i] != cluster) continue;
        const double d =
            (ctx.normalizer.normalize(ctx.snapshots->entries[i].parameter) - q).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = i;
            found = true;
        }
    }
    if (!found) throw InvalidArgument("nearest_snapshot_in_cluster: empty cluster");
    return best;
}

inline bool try_solve(const LocalRomContext& ctx, const ParameterPoint& p, int cluster,
                      const Vector& guess_state, Vector& out_state) {
    const PodBasis& basis = (*ctx.bases)[static_cast<std::size_t>(cluster)];
    try {
        const LocalRomSolution sol =
            solve_local_rom(*ctx.system, basis, p[0], p[1], project(basis, guess_state),
                            ctx.tol, ctx.max_iter);
        out_state = sol.state;
        return true;
    } catch (const std::runtime_error&) {
        return false;
    }
}

inline void push_entries(const LocalRomContext& ctx, BifurcationDiagram& diagram,
                         std::vector<Vector> states) {
    // Merge states that coincide, tag the rest by observable ordering.
    std::vector<Vector> unique;
    for (auto& s : states) {
        bool dup = false;
        for (const auto& u : unique)
            if (relative_l2(s, u, 1e-8) < 1e-6) dup = true;
        if (!dup) unique.push_back(std::move(s));
    }
    std::vector<BifurcationDiagram::PointEntry> out;
    if (unique.size() == 1) {
        out.push_back({Branch::single, ctx.system->observable(unique[0]), unique[0]});
    } else if (unique.size() == 2) {
        const double y0 = ctx.system->observable(unique[0]);
        const double y1 = ctx.system->observable(unique[1]);
        const std::size_t up = y0 >= y1 ? 0 : 1;
        out.push_back({Branch::upper, ctx.system->observable(unique[up]), unique[up]});
        out.push_back({Branch::lower, ctx.system->observable(unique[1 - up]), unique[1 - up]});
    }
    diagram.entries.push_back(std::move(out));
}

}  // namespace detail

inline BifurcationDiagram reconstruct_diagram(const std::vector<ParameterPoint>& grid,
                                              SelectionStrategy strategy,
                                              const LocalRomContext& ctx) {
    if (!ctx.system || !ctx.snapshots || !ctx.clusters || !ctx.bases)
        throw InvalidArgument("reconstruct_diagram: incomplete context");
    if (strategy == SelectionStrategy::dual_classifier && !ctx.dual)
        throw InvalidArgument("reconstruct_diagram: dual strategy needs trained classifiers");
    if (strategy == SelectionStrategy::oracle && !ctx.table)
        throw InvalidArgument("reconstruct_diagram: oracle strategy needs the error table");

    const auto snap_params = ctx.snapshot_params();
    BifurcationDiagram diagram;
    diagram.grid = grid;
    for (const auto& p : grid) {
        std::vector<Vector> states;
        auto solve_from = [&](int cluster, std::size_t guess_snapshot) {
            Vector state;
            if (detail::try_solve(ctx, p, cluster,
                                  ctx.snapshots->entries[guess_snapshot].state, state))
                states.push_back(std::move(state));
            else
                ++diagram.failed_solves;
        };

        switch (strategy) {
            case SelectionStrategy::nearest: {
                const std::size_t idx = nearest_snapshot_index(p, snap_params, ctx.normalizer);
                solve_from(ctx.clusters->assignment[idx], idx);
                break;
            }
            case SelectionStrategy::dual_classifier: {
                const auto [c1, c2] = ctx.dual->predict(p);
                solve_from(c1, detail::nearest_snapshot_in_cluster(ctx, p, c1));
                if (c2 != c1) solve_from(c2, detail::nearest_snapshot_in_cluster(ctx, p, c2));
                break;
            }
            case SelectionStrategy::oracle: {
                // All table rows at the nearest snapshot parameter, one solve each
                // with that row's best-error cluster.
                const std::size_t idx = nearest_snapshot_index(p, snap_params, ctx.normalizer);
                const ParameterPoint& sp = snap_params[idx];
                for (std::size_t row = 0; row < snap_params.size(); ++row) {
                    if (!(ctx.table->parameters[row] == sp)) continue;
                    solve_from(ctx.table->argmin_cluster(static_cast<Eigen::Index>(row)), row);
                }
                break;
            }
        }
        detail::push_entries(ctx, diagram, std::move(states));
    }
    diagram.validate();
    return diagram;
}

// Mean relative L2 error against the stable FOM branches, matched by nearest
// observable value; a missing branch counts as error 1.
inline double mean_relative_error(const BifurcationDiagram& diagram,
                                  const PitchforkSystem& system) {
    double total = 0.0;
    long count = 0;
    for (std::size_t g = 0; g < diagram.grid.size(); ++g) {
        const auto& p = diagram.grid[g];
        std::vector<SteadyState> truth = steady_branches(system, p[0], p[1]);
        std::erase_if(truth, [](const SteadyState& s) { return !s.stable; });
        const auto& found = diagram.entries[g];
        std::vector<bool> used(found.size(), false);
        for (const auto& t : truth) {
            const double ty = system.observable(t.state);
            int best = -1;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < found.size(); ++i) {
                if (used[i]) continue;
                const double d = std::abs(found[i].observable - ty);
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<int>(i);
                }
            }
            if (best < 0) {
                total += 1.0;  // missing branch penalty
            } else {
                used[static_cast<std::size_t>(best)] = true;
                total += relative_l2(found[static_cast<std::size_t>(best)].state, t.state);
            }
            ++count;
        }
    }
    return count > 0 ? total / static_cast<double>(count) : 0.0;
}

// Train the per-branch classifiers on the error table's argmin labels.
inline DualClassifier train_dual(const ErrorTable& table, int num_clusters,
                                 const std::vector<Eigen::Index>& hidden, int epochs,
                                 double rate, std::uint64_t seed) {
    std::vector<ParameterPoint> params = table.parameters;
    DualClassifier dual;
    dual.normalizer = ParamNormalizer::from_points(params);

    const Eigen::Index input_dim = static_cast<Eigen::Index>(params.front().dim());
    std::vector<Eigen::Index> sizes;
    sizes.push_back(input_dim);
    for (auto h : hidden) sizes.push_back(h);
    sizes.push_back(num_clusters);

    auto build = [&](bool upper_side, std::uint64_t net_seed) {
        std::vector<Vector> feats;
        std::vector<int> labels;
        for (Eigen::Index row = 0; row < table.rows(); ++row) {
            const Branch b = table.branches[static_cast<std::size_t>(row)];
            const bool take = b == Branch::single || (upper_side ? b == Branch::upper
                                                                : b == Branch::lower);
            if (!take) continue;
            feats.push_back(dual.normalizer.normalize(table.parameters[static_cast<std::size_t>(row)]));
            labels.push_back(table.argmin_cluster(row));
        }
        return train(init_mlp(sizes, net_seed), feats, labels, epochs, rate, net_seed);
    };
    dual.branch1 = build(true, seed);
    dual.branch2 = build(false, seed + 1);
    dual.validate();
    return dual;
}

}  // namespace bifrom

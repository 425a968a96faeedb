#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bifrom/dmd.hpp"
#include "bifrom/fom.hpp"
#include "bifrom/koopman_interp.hpp"
#include "bifrom/local_rom.hpp"
#include "bifrom/mlp.hpp"
#include "bifrom/pod.hpp"
#include "bifrom/snapshot_store.hpp"

namespace bifrom::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

struct GridSpec {
    double lo = 0.0, hi = 1.0;
    int count = 2;

    std::vector<double> points() const {
        std::vector<double> out;
        for (int i = 0; i < count; ++i)
            out.push_back(count == 1 ? lo : lo + (hi - lo) * i / double(count - 1));
        return out;
    }
};

struct PipelineConfig {
    std::string kind;  // "hopf" | "pitchfork"
    fs::path output;

    // Hopf proxy + trajectory generation
    Eigen::Index hopf_dim = 50;
    double omega = 2.0 * M_PI;
    double hopf_kappa = 5.0;
    double g_crit = 90e3;
    double g_scale = 100e3;
    std::uint64_t hopf_seed = 42;
    std::vector<double> g_samples;
    double heldout_g = 125e3;
    double dt = 1e-3;
    long steps = 6000;
    double start_g = 0.0;              // 0: start on each sample's own cycle
    double start_radius_factor = 1.1;  // radial offset of the initial state

    // Pitchfork proxy + snapshot grid
    Eigen::Index pf_dim = 40;
    double pf_kappa = 0.5;
    double alpha = 2.0;
    double beta = 0.4;
    double nu_ref = 0.15;
    double w_ref = 0.75;
    std::uint64_t pf_seed = 7;
    GridSpec nu_grid{0.1, 0.2, 10}, w_grid{0.5, 1.0, 11};
    GridSpec nu_assess{0.1, 0.2, 40}, w_assess{0.5, 1.0, 41};

    PodSelector pod_selector = EnergyFraction{0.9999};
    Eigen::Index dmd_rank = 0;  // 0: energy-based default
    Eigen::Index delay = 100;

    int k = 14;  // 0: choose by silhouette over [k_min, k_max]
    int k_min = 2, k_max = 14;
    std::uint64_t cluster_seed = 3;
    PodSelector cluster_pod = FixedRank{1};

    std::vector<Eigen::Index> hidden = {32, 32};
    int epochs = 4000;
    double rate = 1e-3;
    std::uint64_t ann_seed = 11;

    double tol = 1e-10;
    int max_iter = 50;

    HopfSystem hopf() const {
        return make_hopf_system(hopf_dim, omega, hopf_kappa, g_crit, g_scale, hopf_seed);
    }
    PitchforkSystem pitchfork() const {
        return make_pitchfork_system(pf_dim, pf_kappa, alpha, beta, nu_ref, w_ref, pf_seed);
    }
};

namespace detail {

inline GridSpec parse_grid(const json& j) {
    GridSpec g;
    g.lo = j.at(0).get<double>();
    g.hi = j.at(1).get<double>();
    g.count = j.at(2).get<int>();
    if (g.count < 1) throw InvalidArgument("config: grid count must be >= 1");
    return g;
}

inline PodSelector parse_selector(const json& j) {
    const std::string kind = j.at("selector").get<std::string>();
    if (kind == "energy") return EnergyFraction{j.at("eta").get<double>()};
    if (kind == "rank") return FixedRank{j.at("rank").get<Eigen::Index>()};
    throw InvalidArgument("config: selector must be 'energy' or 'rank'");
}

}  // namespace detail

inline PipelineConfig load_config(const fs::path& path,
                                  std::optional<fs::path> out_override = {},
                                  std::optional<std::uint64_t> seed_override = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("config file not found: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }

    PipelineConfig cfg;
    try {
        cfg.kind = j.at("pipeline").get<std::string>();
        if (cfg.kind != "hopf" && cfg.kind != "pitchfork")
            throw InvalidArgument("config: pipeline must be 'hopf' or 'pitchfork'");
        cfg.output = j.at("output").get<std::string>();

        const json& gen = j.at("generator");
        if (cfg.kind == "hopf") {
            cfg.hopf_dim = gen.value("dim", cfg.hopf_dim);
            cfg.omega = gen.value("omega", cfg.omega);
            cfg.hopf_kappa = gen.value("kappa", cfg.hopf_kappa);
            cfg.g_crit = gen.value("g_crit", cfg.g_crit);
            cfg.g_scale = gen.value("g_scale", cfg.g_scale);
            cfg.hopf_seed = gen.at("seed").get<std::uint64_t>();
            cfg.g_samples = gen.at("g_samples").get<std::vector<double>>();
            cfg.heldout_g = gen.value("heldout_g", cfg.heldout_g);
            cfg.dt = gen.value("dt", cfg.dt);
            cfg.steps = gen.value("steps", cfg.steps);
            cfg.start_g = gen.value("start_g", cfg.start_g);
            cfg.start_radius_factor = gen.value("start_radius_factor", cfg.start_radius_factor);
            if (cfg.g_samples.size() < 2)
                throw InvalidArgument("config: need at least two g_samples");
        } else {
            cfg.pf_dim = gen.value("dim", cfg.pf_dim);
            cfg.pf_kappa = gen.value("kappa", cfg.pf_kappa);
            cfg.alpha = gen.value("alpha", cfg.alpha);
            cfg.beta = gen.value("beta", cfg.beta);
            cfg.nu_ref = gen.value("nu_ref", cfg.nu_ref);
            cfg.w_ref = gen.value("w_ref", cfg.w_ref);
            cfg.pf_seed = gen.at("seed").get<std::uint64_t>();
            if (gen.contains("nu_grid")) cfg.nu_grid = detail::parse_grid(gen.at("nu_grid"));
            if (gen.contains("w_grid")) cfg.w_grid = detail::parse_grid(gen.at("w_grid"));
            if (gen.contains("nu_assess")) cfg.nu_assess = detail::parse_grid(gen.at("nu_assess"));
            if (gen.contains("w_assess")) cfg.w_assess = detail::parse_grid(gen.at("w_assess"));
        }

        if (j.contains("pod")) cfg.pod_selector = detail::parse_selector(j.at("pod"));
        if (j.contains("dmd")) {
            cfg.dmd_rank = j.at("dmd").value("rank", cfg.dmd_rank);
            cfg.delay = j.at("dmd").value("delay", cfg.delay);
        }
        if (j.contains("cluster")) {
            const json& c = j.at("cluster");
            cfg.k = c.value("k", cfg.k);
            cfg.k_min = c.value("k_min", cfg.k_min);
            cfg.k_max = c.value("k_max", cfg.k_max);
            cfg.cluster_seed = c.value("seed", cfg.cluster_seed);
            if (c.contains("pod")) cfg.cluster_pod = detail::parse_selector(c.at("pod"));
        }
        if (j.contains("classifier")) {
            const json& c = j.at("classifier");
            cfg.hidden = c.value("hidden", cfg.hidden);
            cfg.epochs = c.value("epochs", cfg.epochs);
            cfg.rate = c.value("rate", cfg.rate);
            cfg.ann_seed = c.value("seed", cfg.ann_seed);
        }
        if (j.contains("solver")) {
            cfg.tol = j.at("solver").value("tol", cfg.tol);
            cfg.max_iter = j.at("solver").value("max_iter", cfg.max_iter);
        }
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }

    if (out_override) cfg.output = *out_override;
    if (seed_override) {
        cfg.hopf_seed = *seed_override;
        cfg.pf_seed = *seed_override;
    }
    return cfg;
}

// --- manifests --------------------------------------------------------------

namespace detail {

inline std::uint64_t fnv1a_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot hash missing file: " + path.string());
    std::uint64_t h = 1469598103934665603ull;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

inline void write_manifest(const fs::path& stage_dir, const std::string& stage,
                           const std::vector<fs::path>& inputs) {
    json m;
    m["stage"] = stage;
    auto arr = json::array();
    for (const auto& p : inputs) {
        json e;
        e["path"] = p.string();
        std::ostringstream hex;
        hex << std::hex << fnv1a_file(p);
        e["fnv1a64"] = hex.str();
        arr.push_back(e);
    }
    m["inputs"] = arr;
    std::ofstream out(stage_dir / "manifest.json");
    if (!out) throw IoError("cannot write: " + (stage_dir / "manifest.json").string());
    out << m.dump(2) << '\n';
}

inline void require_artifact(const fs::path& p, const std::string& needed_by) {
    if (!fs::exists(p))
        throw IoError("missing prerequisite for " + needed_by + ": " + p.string());
}

inline fs::path make_stage_dir(const fs::path& out, const std::string& name) {
    const fs::path dir = out / name;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory: " + dir.string());
    return dir;
}

inline Trajectory read_trajectory(const fs::path& csv_path, double g, double dt) {
    const Matrix X = csv::read_matrix(csv_path.string());
    Trajectory traj;
    traj.parameter = ParameterPoint{g};
    for (Eigen::Index k = 0; k < X.cols(); ++k) {
        traj.times.push_back(static_cast<double>(k) * dt);
        traj.states.push_back(X.col(k));
    }
    return traj;
}

}  // namespace detail

// --- hopf stages ------------------------------------------------------------

inline void stage_generate_hopf(const PipelineConfig& cfg) {
    const HopfSystem sys = cfg.hopf();
    const fs::path dir = detail::make_stage_dir(cfg.output, "traj");
    json meta;
    meta["g_samples"] = cfg.g_samples;
    meta["heldout_g"] = cfg.heldout_g;
    meta["dt"] = cfg.dt;
    meta["steps"] = cfg.steps;
    meta["dim"] = cfg.hopf_dim;
    meta["seed"] = cfg.hopf_seed;
    meta["start_g"] = cfg.start_g;
    meta["start_radius_factor"] = cfg.start_radius_factor;

    auto one = [&](double g, const std::string& name) {
        const double g0 = cfg.start_g > 0.0 ? cfg.start_g : g;
        const Vector x0 = cfg.start_radius_factor * hopf_cycle_state(sys, g0);
        const Trajectory traj = simulate(sys, g, x0, cfg.dt, cfg.steps);
        csv::write_matrix((dir / (name + ".csv")).string(), traj.as_matrix());
    };
    for (std::size_t i = 0; i < cfg.g_samples.size(); ++i)
        one(cfg.g_samples[i], "traj_" + std::to_string(i));
    one(cfg.heldout_g, "traj_heldout");

    std::ofstream out(dir / "traj.json");
    out << meta.dump(2) << '\n';
    detail::write_manifest(dir, "generate", {});
}

inline void stage_pod_hopf(const PipelineConfig& cfg) {
    const fs::path traj_dir = cfg.output / "traj";
    detail::require_artifact(traj_dir / "traj.json", "pod");
    std::vector<fs::path> inputs;
    std::vector<Matrix> blocks;
    Eigen::Index cols = 0;
    for (std::size_t i = 0; i < cfg.g_samples.size(); ++i) {
        const fs::path p = traj_dir / ("traj_" + std::to_string(i) + ".csv");
        detail::require_artifact(p, "pod");
        blocks.push_back(csv::read_matrix(p.string()));
        cols += blocks.back().cols();
        inputs.push_back(p);
    }
    Matrix X(blocks.front().rows(), cols);
    Eigen::Index at = 0;
    for (const auto& b : blocks) {
        X.middleCols(at, b.cols()) = b;
        at += b.cols();
    }
    const PodBasis basis = compute_pod(X, cfg.pod_selector);
    const fs::path dir = detail::make_stage_dir(cfg.output, "pod");
    save_pod_basis(basis, dir);
    detail::write_manifest(dir, "pod", inputs);
}

inline void stage_dmd_fit(const PipelineConfig& cfg) {
    const fs::path traj_dir = cfg.output / "traj";
    const fs::path pod_dir = cfg.output / "pod";
    detail::require_artifact(traj_dir / "traj.json", "dmd-fit");
    detail::require_artifact(pod_dir / "modes.csv", "dmd-fit");
    const PodBasis basis = load_pod_basis(pod_dir);
    for (std::size_t i = 0; i < cfg.g_samples.size(); ++i) {
        const fs::path p = traj_dir / ("traj_" + std::to_string(i) + ".csv");
        detail::require_artifact(p, "dmd-fit");
        const Trajectory traj = detail::read_trajectory(p, cfg.g_samples[i], cfg.dt);
        const DmdModel model = fit_dmd(project(basis, traj), cfg.dmd_rank);
        const fs::path dir = detail::make_stage_dir(cfg.output, "dmd/" + std::to_string(i));
        save_dmd_model(model, dir);
        detail::write_manifest(dir, "dmd-fit", {p, pod_dir / "modes.csv"});
    }
}

inline void stage_dmd_stabilize(const PipelineConfig& cfg) {
    for (std::size_t i = 0; i < cfg.g_samples.size(); ++i) {
        const fs::path src = cfg.output / "dmd" / std::to_string(i);
        detail::require_artifact(src / "A_r.csv", "dmd-stabilize");
        const DmdModel stab = stabilize(load_dmd_model(src));
        const fs::path dir = detail::make_stage_dir(cfg.output, "dmd_stab/" + std::to_string(i));
        save_dmd_model(stab, dir);
        detail::write_manifest(dir, "dmd-stabilize", {src / "A_r.csv"});
    }
}

inline void stage_hankel_fit(const PipelineConfig& cfg) {
    const fs::path traj_dir = cfg.output / "traj";
    const fs::path pod_dir = cfg.output / "pod";
    detail::require_artifact(traj_dir / "traj.json", "hankel-fit");
    detail::require_artifact(pod_dir / "modes.csv", "hankel-fit");
    const PodBasis basis = load_pod_basis(pod_dir);
    for (std::size_t i = 0; i < cfg.g_samples.size(); ++i) {
        const fs::path p = traj_dir / ("traj_" + std::to_string(i) + ".csv");
        detail::require_artifact(p, "hankel-fit");
        const Trajectory traj = detail::read_trajectory(p, cfg.g_samples[i], cfg.dt);
        const HankelDmdModel model = fit_hankel_dmd(project(basis, traj), cfg.delay, cfg.dmd_rank);
        const fs::path dir = detail::make_stage_dir(cfg.output, "hankel/" + std::to_string(i));
        save_hankel_model(model, dir);
        detail::write_manifest(dir, "hankel-fit", {p, pod_dir / "modes.csv"});
    }
}

// Rollout accuracy of the Hankel and standard DMD models over each training
// trajectory, from the trajectory's own initial data.
inline void stage_predict(const PipelineConfig& cfg) {
    const fs::path traj_dir = cfg.output / "traj";
    const fs::path pod_dir = cfg.output / "pod";
    detail::require_artifact(pod_dir / "modes.csv", "predict");
    const PodBasis basis = load_pod_basis(pod_dir);
    const fs::path dir = detail::make_stage_dir(cfg.output, "predict");
    json report;
    std::vector<fs::path> inputs{pod_dir / "modes.csv"};
    for (std::size_t i = 0; i < cfg.g_samples.size(); ++i) {
        const fs::path tp = traj_dir / ("traj_" + std::to_string(i) + ".csv");
        const fs::path hp = cfg.output / "hankel" / std::to_string(i);
        detail::require_artifact(tp, "predict");
        detail::require_artifact(hp / "A_r.csv", "predict");
        const Trajectory truth = project(basis, detail::read_trajectory(tp, cfg.g_samples[i], cfg.dt));
        const HankelDmdModel hankel = load_hankel_model(hp);

        std::vector<Vector> window(truth.states.begin(),
                                   truth.states.begin() + hankel.window());
        const long steps = static_cast<long>(truth.length()) - hankel.window();
        const Trajectory pred = rollout_hankel(hankel, window, steps);
        double num = 0.0, den = 0.0;
        for (std::size_t k = 0; k < truth.length(); ++k) {
            num += (pred.states[k] - truth.states[k]).squaredNorm();
            den += truth.states[k].squaredNorm();
        }
        json entry;
        entry["g"] = cfg.g_samples[i];
        entry["hankel_rel_l2"] = std::sqrt(num / den);
        const fs::path dp = cfg.output / "dmd" / std::to_string(i);
        if (fs::exists(dp / "A_r.csv")) {
            const DmdModel dmd = load_dmd_model(dp);
            const Trajectory dpred = rollout(dmd, truth.states.front(),
                                             static_cast<long>(truth.length()) - 1);
            double dn = 0.0;
            for (std::size_t k = 0; k < truth.length(); ++k)
                dn += (dpred.states[k] - truth.states[k]).squaredNorm();
            entry["standard_rel_l2"] = std::sqrt(dn / den);
            inputs.push_back(dp / "A_r.csv");
        }
        report["samples"].push_back(entry);
        csv::write_matrix((dir / ("pred_" + std::to_string(i) + ".csv")).string(),
                          pred.as_matrix());
        inputs.push_back(tp);
        inputs.push_back(hp / "A_r.csv");
    }
    std::ofstream out(dir / "report.json");
    out << report.dump(2) << '\n';
    detail::write_manifest(dir, "predict", inputs);
}

// Log-Euclidean interpolation of the reconstructed Koopman operators to the
// held-out parameter, then rollout against the held-out trajectory.
inline void stage_interp(const PipelineConfig& cfg) {
    const fs::path pod_dir = cfg.output / "pod";
    detail::require_artifact(pod_dir / "modes.csv", "interp");
    const PodBasis basis = load_pod_basis(pod_dir);

    OperatorFamily family;
    family.basis_id = "global-pod";
    std::vector<fs::path> inputs{pod_dir / "modes.csv"};
    for (std::size_t i = 0; i < cfg.g_samples.size(); ++i) {
        const fs::path dp = cfg.output / "dmd" / std::to_string(i);
        detail::require_artifact(dp / "A_r.csv", "interp");
        family.samples.push_back({cfg.g_samples[i], reconstruct_koopman(load_dmd_model(dp))});
        inputs.push_back(dp / "A_r.csv");
    }
    const InterpolatedOperator interp = interpolate_koopman(family, cfg.heldout_g);

    const fs::path tp = cfg.output / "traj" / "traj_heldout.csv";
    detail::require_artifact(tp, "interp");
    const Trajectory truth = project(basis, detail::read_trajectory(tp, cfg.heldout_g, cfg.dt));

    DmdModel model;
    model.U_r = Matrix::Identity(interp.op.rows(), interp.op.cols());
    model.A_r = interp.op;
    model.dt = cfg.dt;
    const Trajectory pred = rollout(model, truth.states.front(),
                                    static_cast<long>(truth.length()) - 1);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < truth.length(); ++k) {
        num += (pred.states[k] - truth.states[k]).squaredNorm();
        den += truth.states[k].squaredNorm();
    }

    const fs::path dir = detail::make_stage_dir(cfg.output, "interp");
    csv::write_matrix((dir / "A_interp.csv").string(), interp.op);
    csv::write_matrix((dir / "pred_heldout.csv").string(), pred.as_matrix());
    json report;
    report["heldout_g"] = cfg.heldout_g;
    report["rel_l2"] = std::sqrt(num / den);
    report["used_fallback"] = interp.used_fallback;
    std::ofstream out(dir / "report.json");
    out << report.dump(2) << '\n';
    inputs.push_back(tp);
    detail::write_manifest(dir, "interp", inputs);
}

// --- pitchfork stages -------------------------------------------------------

inline void stage_generate_pitchfork(const PipelineConfig& cfg) {
    const PitchforkSystem sys = cfg.pitchfork();
    SnapshotSet set;
    set.generator = "pitchfork";
    set.seed = cfg.pf_seed;
    for (double nu : cfg.nu_grid.points()) {
        for (double w : cfg.w_grid.points()) {
            const auto branches = steady_branches(sys, nu, w);
            std::vector<const SteadyState*> stable;
            for (const auto& b : branches)
                if (b.stable) stable.push_back(&b);
            if (stable.size() == 1) {
                set.entries.push_back({ParameterPoint{nu, w}, Branch::single, stable[0]->state});
            } else {
                // steady_branches orders +branch before -branch
                set.entries.push_back({ParameterPoint{nu, w}, Branch::upper, stable[0]->state});
                set.entries.push_back({ParameterPoint{nu, w}, Branch::lower, stable[1]->state});
            }
        }
    }
    const fs::path dir = detail::make_stage_dir(cfg.output, "snapshots");
    save_snapshot_set(set, dir);
    detail::write_manifest(dir, "generate", {});
}

inline void stage_cluster(const PipelineConfig& cfg) {
    const fs::path snap_dir = cfg.output / "snapshots";
    detail::require_artifact(snap_dir / "meta.json", "cluster");
    const SnapshotSet set = load_snapshot_set(snap_dir);
    std::vector<Vector> points;
    for (const auto& e : set.entries) points.push_back(e.state);

    json diag;
    int k = cfg.k;
    if (k == 0) {
        const KSelection sel = select_k(points, cfg.k_min, cfg.k_max, cfg.cluster_seed);
        k = sel.chosen_k;
        diag["ks"] = sel.ks;
        diag["energies"] = sel.energies;
        diag["silhouettes"] = sel.silhouettes;
        diag["degenerate"] = sel.degenerate;
    }
    const ClusterModel model = kmeans_cluster(points, k, cfg.cluster_seed);
    diag["k"] = model.k;
    diag["energy"] = model.energy;
    diag["energy_history"] = model.energy_history;
    diag["seed"] = model.seed;

    const fs::path dir = detail::make_stage_dir(cfg.output, "cluster");
    Matrix assign(static_cast<Eigen::Index>(model.assignment.size()), 1);
    for (std::size_t i = 0; i < model.assignment.size(); ++i)
        assign(static_cast<Eigen::Index>(i), 0) = model.assignment[i];
    csv::write_matrix((dir / "assignment.csv").string(), assign);
    Matrix cents(points.front().size(), model.k);
    for (int c = 0; c < model.k; ++c) cents.col(c) = model.centroids[static_cast<std::size_t>(c)];
    csv::write_matrix((dir / "centroids.csv").string(), cents);
    std::ofstream out(dir / "cluster.json");
    out << diag.dump(2) << '\n';

    const auto bases = build_cluster_bases(points, model, cfg.cluster_pod);
    for (std::size_t c = 0; c < bases.size(); ++c)
        save_pod_basis(bases[c], cfg.output / "bases" / ("c" + std::to_string(c)));
    detail::write_manifest(dir, "cluster",
                           {snap_dir / "meta.json", snap_dir / "snapshots.csv"});
}

namespace detail {

struct LoadedPitchfork {
    PitchforkSystem system;
    SnapshotSet snapshots;
    ClusterModel clusters;
    std::vector<PodBasis> bases;
    ParamNormalizer normalizer;
};

inline LoadedPitchfork load_pitchfork_state(const PipelineConfig& cfg, const std::string& stage) {
    LoadedPitchfork st{.system = cfg.pitchfork()};
    require_artifact(cfg.output / "snapshots" / "meta.json", stage);
    require_artifact(cfg.output / "cluster" / "assignment.csv", stage);
    st.snapshots = load_snapshot_set(cfg.output / "snapshots");
    const Matrix assign = csv::read_matrix((cfg.output / "cluster" / "assignment.csv").string());
    st.clusters.k = 0;
    for (Eigen::Index i = 0; i < assign.rows(); ++i) {
        st.clusters.assignment.push_back(static_cast<int>(assign(i, 0)));
        st.clusters.k = std::max(st.clusters.k, st.clusters.assignment.back() + 1);
    }
    if (st.clusters.assignment.size() != st.snapshots.size())
        throw ValidationError("cluster assignment does not match snapshot count");
    for (int c = 0; c < st.clusters.k; ++c) {
        const fs::path bp = cfg.output / "bases" / ("c" + std::to_string(c));
        require_artifact(bp / "modes.csv", stage);
        st.bases.push_back(load_pod_basis(bp));
    }
    std::vector<ParameterPoint> params;
    for (const auto& e : st.snapshots.entries) params.push_back(e.parameter);
    st.normalizer = ParamNormalizer::from_points(params);
    return st;
}

}  // namespace detail

inline void stage_error_table(const PipelineConfig& cfg) {
    const auto st = detail::load_pitchfork_state(cfg, "error-table");
    const ErrorTable table = build_error_table(st.snapshots, st.bases, st.system, cfg.tol,
                                               cfg.max_iter);
    const fs::path dir = detail::make_stage_dir(cfg.output, "table");
    csv::write_matrix((dir / "errors.csv").string(), table.errors);
    json rows;
    for (Eigen::Index r = 0; r < table.rows(); ++r) {
        json e;
        e["parameter"] = table.parameters[static_cast<std::size_t>(r)].coords;
        e["branch"] = to_string(table.branches[static_cast<std::size_t>(r)]);
        e["argmin"] = table.argmin_cluster(r);
        rows.push_back(e);
    }
    std::ofstream out(dir / "rows.json");
    out << rows.dump(2) << '\n';
    detail::write_manifest(dir, "error-table",
                           {cfg.output / "snapshots" / "snapshots.csv",
                            cfg.output / "cluster" / "assignment.csv"});
}

inline ErrorTable load_error_table(const PipelineConfig& cfg, const std::string& stage) {
    detail::require_artifact(cfg.output / "table" / "errors.csv", stage);
    ErrorTable table;
    table.errors = csv::read_matrix((cfg.output / "table" / "errors.csv").string());
    std::ifstream in(cfg.output / "table" / "rows.json");
    if (!in) throw IoError("missing file: " + (cfg.output / "table" / "rows.json").string());
    json rows;
    try {
        in >> rows;
        for (const auto& e : rows) {
            table.parameters.emplace_back(e.at("parameter").get<std::vector<double>>());
            table.branches.push_back(branch_from_string(e.at("branch").get<std::string>()));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("table/rows.json: ") + e.what());
    }
    table.failed.assign(static_cast<std::size_t>(table.errors.rows()),
                        std::vector<bool>(static_cast<std::size_t>(table.errors.cols()), false));
    for (Eigen::Index r = 0; r < table.errors.rows(); ++r)
        for (Eigen::Index c = 0; c < table.errors.cols(); ++c)
            if (!std::isfinite(table.errors(r, c)))
                table.failed[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = true;
    return table;
}

inline void stage_train_ann(const PipelineConfig& cfg) {
    const auto st = detail::load_pitchfork_state(cfg, "train-ann");
    const ErrorTable table = load_error_table(cfg, "train-ann");
    const DualClassifier dual = train_dual(table, st.clusters.k, cfg.hidden, cfg.epochs,
                                           cfg.rate, cfg.ann_seed);
    const fs::path dir = detail::make_stage_dir(cfg.output, "ann");
    save_mlp(dual.branch1, dir / "branch1");
    save_mlp(dual.branch2, dir / "branch2");
    json meta;
    meta["lo"] = std::vector<double>(dual.normalizer.lo.begin(), dual.normalizer.lo.end());
    meta["hi"] = std::vector<double>(dual.normalizer.hi.begin(), dual.normalizer.hi.end());
    meta["epochs"] = cfg.epochs;
    meta["rate"] = cfg.rate;
    meta["seed"] = cfg.ann_seed;
    meta["accuracy_branch1"] = dual.branch1.final_accuracy;
    meta["accuracy_branch2"] = dual.branch2.final_accuracy;
    std::ofstream out(dir / "ann.json");
    out << meta.dump(2) << '\n';
    detail::write_manifest(dir, "train-ann", {cfg.output / "table" / "errors.csv"});
}

inline DualClassifier load_dual(const PipelineConfig& cfg, const std::string& stage) {
    detail::require_artifact(cfg.output / "ann" / "ann.json", stage);
    DualClassifier dual;
    dual.branch1 = load_mlp(cfg.output / "ann" / "branch1");
    dual.branch2 = load_mlp(cfg.output / "ann" / "branch2");
    std::ifstream in(cfg.output / "ann" / "ann.json");
    json meta;
    try {
        in >> meta;
        const auto lo = meta.at("lo").get<std::vector<double>>();
        const auto hi = meta.at("hi").get<std::vector<double>>();
        dual.normalizer.lo = Eigen::Map<const Vector>(lo.data(), static_cast<Eigen::Index>(lo.size()));
        dual.normalizer.hi = Eigen::Map<const Vector>(hi.data(), static_cast<Eigen::Index>(hi.size()));
    } catch (const json::exception& e) {
        throw ParseError(std::string("ann/ann.json: ") + e.what());
    }
    dual.validate();
    return dual;
}

inline std::vector<ParameterPoint> assessment_grid(const PipelineConfig& cfg) {
    std::vector<ParameterPoint> grid;
    for (double nu : cfg.nu_assess.points())
        for (double w : cfg.w_assess.points()) grid.push_back(ParameterPoint{nu, w});
    return grid;
}

namespace detail {

inline void write_diagram_svg(const fs::path& path, const BifurcationDiagram& diagram) {
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (std::size_t g = 0; g < diagram.grid.size(); ++g) {
        xmin = std::min(xmin, diagram.grid[g][0]);
        xmax = std::max(xmax, diagram.grid[g][0]);
        for (const auto& e : diagram.entries[g]) {
            ymin = std::min(ymin, e.observable);
            ymax = std::max(ymax, e.observable);
        }
    }
    if (!(xmax > xmin)) xmax = xmin + 1;
    if (!(ymax > ymin)) {
        ymin -= 1;
        ymax += 1;
    }
    const double W = 640, H = 480, pad = 40;
    auto sx = [&](double x) { return pad + (x - xmin) / (xmax - xmin) * (W - 2 * pad); };
    auto sy = [&](double y) { return H - pad - (y - ymin) / (ymax - ymin) * (H - 2 * pad); };

    std::ofstream out(path);
    if (!out) throw IoError("cannot write: " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<line x1=\"" << pad << "\" y1=\"" << H - pad << "\" x2=\"" << W - pad << "\" y2=\""
        << H - pad << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\""
        << H - pad << "\" stroke=\"black\"/>\n";
    for (std::size_t g = 0; g < diagram.grid.size(); ++g) {
        for (const auto& e : diagram.entries[g]) {
            const char* color = e.branch == Branch::upper ? "#d62728"
                                : e.branch == Branch::lower ? "#1f77b4"
                                                            : "#2ca02c";
            out << "<circle cx=\"" << sx(diagram.grid[g][0]) << "\" cy=\"" << sy(e.observable)
                << "\" r=\"2\" fill=\"" << color << "\"/>\n";
        }
    }
    out << "</svg>\n";
}

}  // namespace detail

inline void stage_diagram(const PipelineConfig& cfg, const std::string& strategy_name) {
    const SelectionStrategy strategy = strategy_from_string(strategy_name);
    const auto st = detail::load_pitchfork_state(cfg, "diagram");

    LocalRomContext ctx;
    ctx.system = &st.system;
    ctx.snapshots = &st.snapshots;
    ctx.clusters = &st.clusters;
    ctx.bases = &st.bases;
    ctx.normalizer = st.normalizer;
    ctx.tol = cfg.tol;
    ctx.max_iter = cfg.max_iter;

    ErrorTable table;
    DualClassifier dual;
    if (strategy == SelectionStrategy::oracle) {
        table = load_error_table(cfg, "diagram");
        ctx.table = &table;
    }
    if (strategy == SelectionStrategy::dual_classifier) {
        dual = load_dual(cfg, "diagram");
        ctx.dual = &dual;
    }

    const auto grid = assessment_grid(cfg);
    const BifurcationDiagram diagram = reconstruct_diagram(grid, strategy, ctx);

    const fs::path dir = detail::make_stage_dir(cfg.output, "diagram_" + strategy_name);
    std::ofstream out(dir / "entries.csv");
    if (!out) throw IoError("cannot write diagram entries");
    out << "nu,w,branch,observable\n";
    std::vector<Vector> states;
    for (std::size_t g = 0; g < diagram.grid.size(); ++g) {
        for (const auto& e : diagram.entries[g]) {
            out << csv::format_double(diagram.grid[g][0]) << ','
                << csv::format_double(diagram.grid[g][1]) << ',' << to_string(e.branch) << ','
                << csv::format_double(e.observable) << '\n';
            states.push_back(e.state);
        }
    }
    out.close();
    if (!states.empty()) {
        Matrix S(states.front().size(), static_cast<Eigen::Index>(states.size()));
        for (std::size_t j = 0; j < states.size(); ++j)
            S.col(static_cast<Eigen::Index>(j)) = states[j];
        csv::write_matrix((dir / "states.csv").string(), S);
    }
    detail::write_diagram_svg(dir / "diagram.svg", diagram);
    detail::write_manifest(dir, "diagram-" + strategy_name,
                           {cfg.output / "snapshots" / "snapshots.csv",
                            cfg.output / "cluster" / "assignment.csv"});
}

inline BifurcationDiagram load_diagram(const PipelineConfig& cfg, const std::string& strategy_name) {
    const fs::path dir = cfg.output / ("diagram_" + strategy_name);
    detail::require_artifact(dir / "entries.csv", "evaluate");
    std::ifstream in(dir / "entries.csv");
    std::string header;
    std::getline(in, header);
    const Matrix S = csv::read_matrix((dir / "states.csv").string());

    BifurcationDiagram diagram;
    std::string line;
    Eigen::Index col = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string nu_s, w_s, branch_s, obs_s;
        std::getline(ss, nu_s, ',');
        std::getline(ss, w_s, ',');
        std::getline(ss, branch_s, ',');
        std::getline(ss, obs_s, ',');
        const ParameterPoint p{std::stod(nu_s), std::stod(w_s)};
        if (diagram.grid.empty() || !(diagram.grid.back() == p)) {
            diagram.grid.push_back(p);
            diagram.entries.emplace_back();
        }
        if (col >= S.cols()) throw ParseError("diagram states.csv shorter than entries.csv");
        diagram.entries.back().push_back(
            {branch_from_string(branch_s), std::stod(obs_s), S.col(col++)});
    }
    return diagram;
}

inline json evaluate_pitchfork(const PipelineConfig& cfg) {
    const PitchforkSystem sys = cfg.pitchfork();
    json report;
    for (const std::string name : {"nearest", "dual", "oracle"}) {
        const fs::path dir = cfg.output / ("diagram_" + name);
        if (!fs::exists(dir / "entries.csv")) continue;
        const BifurcationDiagram diagram = load_diagram(cfg, name);
        long two_solution = 0, both_found = 0, second_missing = 0;
        for (std::size_t g = 0; g < diagram.grid.size(); ++g) {
            const auto& p = diagram.grid[g];
            if (sys.mu_eff(p[0], p[1]) > 0) {
                ++two_solution;
                if (diagram.entries[g].size() == 2)
                    ++both_found;
                else
                    ++second_missing;
            }
        }
        json s;
        s["mean_relative_error"] = mean_relative_error(diagram, sys);
        s["two_solution_points"] = two_solution;
        s["both_branches_found"] = both_found;
        s["second_branch_missing"] = second_missing;
        report[name] = s;
    }
    if (report.empty()) throw IoError("evaluate: no diagram artifacts found under " +
                                      cfg.output.string());
    return report;
}

inline void stage_evaluate(const PipelineConfig& cfg) {
    const json report = evaluate_pitchfork(cfg);
    const fs::path dir = detail::make_stage_dir(cfg.output, "evaluate");
    std::ofstream out(dir / "evaluate.json");
    out << report.dump(2) << '\n';
    std::vector<fs::path> inputs;
    for (const std::string name : {"nearest", "dual", "oracle"}) {
        const fs::path p = cfg.output / ("diagram_" + name) / "entries.csv";
        if (fs::exists(p)) inputs.push_back(p);
    }
    detail::write_manifest(dir, "evaluate", inputs);
}

}  // namespace bifrom::pipeline

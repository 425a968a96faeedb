// Acceptance gate: one pass/fail line per criterion, nonzero exit on failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "bifrom/pipeline.hpp"

using namespace bifrom;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, const char* what, bool ok, const std::string& detail) {
    std::printf("%s  criterion %d: %s  (%s)\n", ok ? "PASS" : "FAIL", id, what, detail.c_str());
    if (!ok) ++failures;
}

std::string fmt(const char* f, auto... vals) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), f, vals...);
    return buf;
}

double rel_l2_traj(const Trajectory& approx, const Trajectory& truth) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < truth.length(); ++k) {
        num += (approx.states[k] - truth.states[k]).squaredNorm();
        den += truth.states[k].squaredNorm();
    }
    return std::sqrt(num / den);
}

// --- criterion 1: DMD eigenvalue recovery on a known 5x5 linear map ---------

void criterion_1() {
    Matrix A = Matrix::Zero(5, 5);
    auto rot = [](double r, double th) {
        Matrix b(2, 2);
        b << r * std::cos(th), -r * std::sin(th), r * std::sin(th), r * std::cos(th);
        return b;
    };
    A.block(0, 0, 2, 2) = rot(0.98, 0.3);
    A.block(2, 2, 2, 2) = rot(1.01, 1.1);
    A(4, 4) = 0.95;
    std::mt19937_64 rng(17);
    std::normal_distribution<double> gauss;
    Matrix M(5, 5);
    for (Eigen::Index i = 0; i < 25; ++i) M(i / 5, i % 5) = gauss(rng);
    const Matrix Q = Eigen::HouseholderQR<Matrix>(M).householderQ();
    A = Q * A * Q.transpose();

    Trajectory traj;
    Vector x = Vector::Ones(5);
    for (int k = 0; k <= 40; ++k) {
        traj.times.push_back(k * 0.1);
        traj.states.push_back(x);
        x = A * x;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const DmdModel model = fit_dmd(traj, 5);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    auto sorted = [](Eigen::VectorXcd v) {
        std::vector<std::complex<double>> out(v.begin(), v.end());
        std::sort(out.begin(), out.end(), [](auto a, auto b) {
            return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
        });
        return out;
    };
    const auto got = sorted(model.eigenvalues);
    const auto want = sorted(Eigen::EigenSolver<Matrix>(A).eigenvalues());
    double worst = 0.0;
    for (std::size_t i = 0; i < 5; ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
    report(1, "dmd eigenvalue recovery on a known 5x5 map", worst < 1e-8 && secs < 1.0,
           fmt("max eig error %.2e, fit %.3f s", worst, secs));
}

// --- criterion 2: POD energy identity and singular-value oracle -------------

void criterion_2() {
    double worst_energy = 0.0, worst_sigma = 0.0;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss;
        Matrix X(50, 30);
        for (Eigen::Index i = 0; i < X.size(); ++i) X(i / 30, i % 30) = gauss(rng);

        const PodBasis full = compute_pod(X, EnergyFraction{1.0});
        const double total = X.squaredNorm();
        for (Eigen::Index N : {1, 5, 12, 25}) {
            const Matrix Phi = full.modes.leftCols(N);
            const double lhs = (X - Phi * Phi.transpose() * X).squaredNorm();
            double tail = 0.0;
            for (Eigen::Index i = N; i < full.singular_values.size(); ++i)
                tail += full.singular_values(i) * full.singular_values(i);
            worst_energy = std::max(worst_energy, std::abs(lhs - tail) / total);
        }
        // brute-force oracle: sigma_i^2 are the eigenvalues of X^T X
        Eigen::SelfAdjointEigenSolver<Matrix> eig(X.transpose() * X);
        for (Eigen::Index i = 0; i < 30; ++i) {
            const double oracle = std::sqrt(std::max(eig.eigenvalues()(29 - i), 0.0));
            worst_sigma = std::max(worst_sigma,
                                   std::abs(full.singular_values(i) - oracle) /
                                       full.singular_values(0));
        }
    }
    report(2, "pod energy identity and singular-value oracle",
           worst_energy < 1e-9 && worst_sigma < 1e-10,
           fmt("energy gap %.2e, sigma gap %.2e", worst_energy, worst_sigma));
}

// --- criteria 3-5 share one oscillatory-regime dataset ----------------------

struct HopfData {
    HopfSystem sys;
    std::vector<double> g_samples;
    double heldout_g = 125e3;
    double dt = 1e-3;
    long steps = 6000;
    PodBasis basis;
    std::vector<Trajectory> projected;  // per sample, off-attractor start
    Trajectory projected_heldout;
    std::vector<DmdModel> dmd;
    std::vector<HankelDmdModel> hankel;
};

HopfData make_hopf_data() {
    HopfData d{.sys = make_hopf_system(50, 2.0 * M_PI, 5.0, 90e3, 100e3, 42)};
    for (int i = 0; i <= 5; ++i) d.g_samples.push_back(100e3 + 10e3 * i);

    std::vector<Trajectory> raw;
    for (double g : d.g_samples)
        raw.push_back(simulate(d.sys, g, 1.1 * hopf_cycle_state(d.sys, g), d.dt, d.steps));
    const Trajectory raw_heldout = simulate(d.sys, d.heldout_g,
                                            1.1 * hopf_cycle_state(d.sys, d.heldout_g), d.dt,
                                            d.steps);
    Matrix X(50, static_cast<Eigen::Index>(raw.size() * raw.front().length()));
    Eigen::Index at = 0;
    for (const auto& t : raw)
        for (const auto& s : t.states) X.col(at++) = s;
    d.basis = compute_pod(X, EnergyFraction{0.9999});

    for (const auto& t : raw) {
        d.projected.push_back(project(d.basis, t));
        d.dmd.push_back(fit_dmd(d.projected.back(), 0));
        d.hankel.push_back(fit_hankel_dmd(d.projected.back(), 100, 0));
    }
    d.projected_heldout = project(d.basis, raw_heldout);
    return d;
}

void criterion_3(const HopfData& d) {
    bool ok = true;
    double worst_stab = 0.0, best_margin = 1e300, worst_unimod = 0.0, worst_idem = 0.0;
    for (std::size_t i = 0; i < d.dmd.size(); ++i) {
        const DmdModel stab = stabilize(d.dmd[i]);
        for (Eigen::Index j = 0; j < stab.eigenvalues.size(); ++j) {
            const double m = std::abs(stab.eigenvalues(j));
            if (m > 1e-14) worst_unimod = std::max(worst_unimod, std::abs(m - 1.0));
        }
        worst_idem = std::max(worst_idem,
                              (stabilize(stab).A_r - stab.A_r).cwiseAbs().maxCoeff());

        const Vector a0 = project(d.basis, hopf_cycle_state(d.sys, d.g_samples[i]));
        auto drift = [&](const DmdModel& m) {
            const Trajectory r = rollout(m, a0, 10000);
            return std::abs(r.states.back().norm() - r.states.front().norm()) /
                   r.states.front().norm();
        };
        const double ds = drift(stab), du = drift(d.dmd[i]);
        worst_stab = std::max(worst_stab, ds);
        best_margin = std::min(best_margin, du - ds);
        ok = ok && ds < 0.02 && ds < du;
    }
    ok = ok && worst_unimod < 1e-12 && worst_idem < 1e-12;
    report(3, "eigenvalue stabilization keeps the cycle amplitude", ok,
           fmt("stab drift <= %.2e over 10000 steps, min margin %.3f, unimod %.1e, idem %.1e",
               worst_stab, best_margin, worst_unimod, worst_idem));
}

void criterion_4(const HopfData& d) {
    bool ok = true;
    double worst_h = 0.0, worst_ratio = 1e300;
    for (std::size_t i = 0; i < d.projected.size(); ++i) {
        const Trajectory& truth = d.projected[i];
        std::vector<Vector> window(truth.states.begin(),
                                   truth.states.begin() + d.hankel[i].window());
        const Trajectory hp = rollout_hankel(d.hankel[i], window,
                                             static_cast<long>(truth.length()) -
                                                 d.hankel[i].window());
        const Trajectory sp = rollout(d.dmd[i], truth.states.front(),
                                      static_cast<long>(truth.length()) - 1);
        const double eh = rel_l2_traj(hp, truth), es = rel_l2_traj(sp, truth);
        worst_h = std::max(worst_h, eh);
        worst_ratio = std::min(worst_ratio, es / eh);
        ok = ok && eh < 0.05 && es >= 5.0 * eh;
    }
    report(4, "delay-embedded dmd beats standard dmd off the attractor", ok,
           fmt("hankel err <= %.2e, standard/hankel ratio >= %.1f", worst_h, worst_ratio));
}

void criterion_5(const HopfData& d) {
    OperatorFamily fam;
    fam.basis_id = "global-pod";
    for (std::size_t i = 0; i < d.dmd.size(); ++i)
        fam.samples.push_back({d.g_samples[i], reconstruct_koopman(d.dmd[i])});

    bool nodes_exact = true;
    for (const auto& s : fam.samples)
        nodes_exact = nodes_exact && interpolate_koopman(fam, s.parameter).op == s.op;

    const InterpolatedOperator interp = interpolate_koopman(fam, d.heldout_g);
    DmdModel model;
    model.U_r = Matrix::Identity(interp.op.rows(), interp.op.cols());
    model.A_r = interp.op;
    model.dt = d.dt;
    const Trajectory pred = rollout(model, d.projected_heldout.states.front(),
                                    static_cast<long>(d.projected_heldout.length()) - 1);
    const double err = rel_l2_traj(pred, d.projected_heldout);

    auto rot = [](double th) {
        Matrix r(2, 2);
        r << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
        return r;
    };
    OperatorFamily rfam;
    rfam.samples.push_back({0.0, rot(0.1)});
    rfam.samples.push_back({1.0, rot(0.3)});
    const double rot_err =
        (interpolate_koopman(rfam, 0.5).op - rot(0.2)).cwiseAbs().maxCoeff();

    report(5, "operator interpolation predicts the held-out parameter",
           nodes_exact && err < 0.05 && rot_err < 1e-10,
           fmt("heldout err %.2e, rotation midpoint %.1e, nodes %s", err, rot_err,
               nodes_exact ? "exact" : "inexact"));
}

// --- criterion 6: branch recovery on the steady-bifurcation proxy -----------

void criterion_6() {
    pipeline::PipelineConfig cfg;  // calibrated pitchfork defaults
    const PitchforkSystem sys = cfg.pitchfork();

    SnapshotSet set;
    for (double nu : cfg.nu_grid.points())
        for (double w : cfg.w_grid.points()) {
            const auto br = steady_branches(sys, nu, w);
            if (br.size() == 1)
                set.entries.push_back({ParameterPoint{nu, w}, Branch::single, br[0].state});
            else {
                set.entries.push_back({ParameterPoint{nu, w}, Branch::upper, br[0].state});
                set.entries.push_back({ParameterPoint{nu, w}, Branch::lower, br[1].state});
            }
        }
    std::vector<Vector> states;
    for (const auto& e : set.entries) states.push_back(e.state);

    const ClusterModel clusters = kmeans_cluster(states, cfg.k, cfg.cluster_seed);
    const auto bases = build_cluster_bases(states, clusters, cfg.cluster_pod);
    const ErrorTable table = build_error_table(set, bases, sys);
    const DualClassifier dual =
        train_dual(table, clusters.k, cfg.hidden, cfg.epochs, cfg.rate, cfg.ann_seed);

    LocalRomContext ctx;
    ctx.system = &sys;
    ctx.snapshots = &set;
    ctx.clusters = &clusters;
    ctx.bases = &bases;
    ctx.normalizer = ParamNormalizer::from_points(ctx.snapshot_params());
    ctx.table = &table;
    ctx.dual = &dual;

    const auto grid = pipeline::assessment_grid(cfg);
    struct Result {
        double mean = 0.0;
        long two = 0, both = 0;
    };
    auto assess = [&](SelectionStrategy strategy) {
        const BifurcationDiagram diagram = reconstruct_diagram(grid, strategy, ctx);
        Result r{.mean = mean_relative_error(diagram, sys)};
        for (std::size_t g = 0; g < diagram.grid.size(); ++g)
            if (sys.mu_eff(diagram.grid[g][0], diagram.grid[g][1]) > 0) {
                ++r.two;
                if (diagram.entries[g].size() == 2) ++r.both;
            }
        return r;
    };
    const Result nearest = assess(SelectionStrategy::nearest);
    const Result dualr = assess(SelectionStrategy::dual_classifier);
    const Result oracle = assess(SelectionStrategy::oracle);

    const bool ok = nearest.both < nearest.two &&
                    dualr.both >= static_cast<long>(0.95 * dualr.two) &&
                    oracle.mean <= dualr.mean && dualr.mean <= nearest.mean &&
                    dualr.mean <= 1.5 * oracle.mean;
    report(6, "dual-classifier branch recovery on the assessment grid", ok,
           fmt("nearest %.4f (both %ld/%ld), dual %.4f (both %ld/%ld), oracle %.4f",
               nearest.mean, nearest.both, nearest.two, dualr.mean, dualr.both, dualr.two,
               oracle.mean));
}

// --- criterion 7: k-means energy behavior -----------------------------------

void criterion_7() {
    bool monotone = true, beats_random = true;
    std::mt19937_64 rng(99);
    std::normal_distribution<double> gauss;
    std::uniform_int_distribution<int> pick;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::vector<Vector> pts;
        for (int i = 0; i < 20; ++i) {
            Vector p(3);
            p << gauss(rng), gauss(rng), gauss(rng);
            pts.push_back(p);
        }
        const int k = 4;
        const ClusterModel model = kmeans_cluster(pts, k, seed);
        for (std::size_t i = 1; i < model.energy_history.size(); ++i)
            monotone = monotone && model.energy_history[i] <= model.energy_history[i - 1] + 1e-12;

        auto partition_energy = [&](const std::vector<int>& assign) {
            std::vector<Vector> mean(k, Vector::Zero(3));
            std::vector<int> count(k, 0);
            for (std::size_t i = 0; i < pts.size(); ++i) {
                mean[assign[i]] += pts[i];
                ++count[assign[i]];
            }
            for (int c = 0; c < k; ++c)
                if (count[c]) mean[c] /= count[c];
            double e = 0.0;
            for (std::size_t i = 0; i < pts.size(); ++i)
                e += (pts[i] - mean[assign[i]]).squaredNorm();
            return e;
        };
        double best_random = 1e300;
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<int> assign(pts.size());
            for (auto& a : assign) a = pick(rng) % k;
            best_random = std::min(best_random, partition_energy(assign));
        }
        beats_random = beats_random && model.energy <= best_random + 1e-12;
    }
    report(7, "k-means energy is monotone and beats random partitions",
           monotone && beats_random,
           fmt("monotone %s, beats 50 random partitions %s", monotone ? "yes" : "no",
               beats_random ? "yes" : "no"));
}

// --- criterion 8: MLP gradient check and separable training -----------------

void criterion_8() {
    std::vector<Vector> xs;
    std::vector<int> ys;
    std::mt19937_64 rng(7);
    std::normal_distribution<double> gauss(0.0, 0.3);
    for (int i = 0; i < 15; ++i) {
        Vector a(2), b(2);
        a << -2.0 + gauss(rng), -2.0 + gauss(rng);
        b << 2.0 + gauss(rng), 2.0 + gauss(rng);
        xs.push_back(a);
        ys.push_back(0);
        xs.push_back(b);
        ys.push_back(1);
    }
    // gradient check at the pipeline's input scale: normalized parameters in
    // [0,1]^2, one 2-32-32-k head per branch
    std::vector<Vector> ps;
    std::vector<int> cs;
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int i = 0; i < 30; ++i) {
        Vector p(2);
        p << uni(rng), uni(rng);
        ps.push_back(p);
        cs.push_back(i % 14);
    }
    const double g14 = gradient_check(init_mlp({2, 32, 32, 14}, 5), ps, cs, 200, 99);
    const double g2 = gradient_check(init_mlp({2, 32, 32, 2}, 6), xs, ys, 200, 99);
    const auto net = train(init_mlp({2, 32, 32, 2}, 21), xs, ys, 500, 1e-2, 21);
    report(8, "mlp gradients verify and separable data trains to 100%",
           g14 < 1e-5 && g2 < 1e-5 && net.final_accuracy == 1.0,
           fmt("grad checks %.2e / %.2e, accuracy %.3f", g14, g2, net.final_accuracy));
}

// --- criterion 9: end-to-end determinism ------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Relative path -> contents for every artifact whose bytes must reproduce.
// Manifests embed the (differing) output directories and are checked elsewhere.
std::map<std::string, std::string> artifact_bytes(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        const std::string name = e.path().filename().string();
        if (name == "manifest.json") continue;
        out[fs::relative(e.path(), root).string()] = slurp(e.path());
    }
    return out;
}

void criterion_9() {
    const fs::path work = fs::temp_directory_path() / "bifrom_acceptance_repro";
    fs::remove_all(work);

    auto run_pitchfork = [&](const fs::path& out) {
        pipeline::PipelineConfig cfg;
        cfg.kind = "pitchfork";
        cfg.output = out;
        cfg.nu_assess = {0.1, 0.2, 8};
        cfg.w_assess = {0.5, 1.0, 9};
        cfg.hidden = {16};
        cfg.epochs = 300;
        pipeline::stage_generate_pitchfork(cfg);
        pipeline::stage_cluster(cfg);
        pipeline::stage_error_table(cfg);
        pipeline::stage_train_ann(cfg);
        for (const std::string s : {"nearest", "dual", "oracle"})
            pipeline::stage_diagram(cfg, s);
        pipeline::stage_evaluate(cfg);
    };
    auto run_hopf = [&](const fs::path& out) {
        pipeline::PipelineConfig cfg;
        cfg.kind = "hopf";
        cfg.output = out;
        cfg.hopf_dim = 20;
        cfg.steps = 400;
        cfg.delay = 10;
        cfg.g_samples = {100e3, 150e3};
        pipeline::stage_generate_hopf(cfg);
        pipeline::stage_pod_hopf(cfg);
        pipeline::stage_dmd_fit(cfg);
        pipeline::stage_dmd_stabilize(cfg);
        pipeline::stage_hankel_fit(cfg);
        pipeline::stage_predict(cfg);
        pipeline::stage_interp(cfg);
    };

    run_pitchfork(work / "pf_a");
    run_pitchfork(work / "pf_b");
    run_hopf(work / "hopf_a");
    run_hopf(work / "hopf_b");

    const bool pf_same = artifact_bytes(work / "pf_a") == artifact_bytes(work / "pf_b");
    const bool hopf_same = artifact_bytes(work / "hopf_a") == artifact_bytes(work / "hopf_b");
    report(9, "repeated pipeline runs are byte-identical", pf_same && hopf_same,
           fmt("pitchfork %s, hopf %s", pf_same ? "identical" : "differs",
               hopf_same ? "identical" : "differs"));
    fs::remove_all(work);
}

}  // namespace

int main() {
    criterion_1();
    criterion_2();
    const HopfData hopf = make_hopf_data();
    criterion_3(hopf);
    criterion_4(hopf);
    criterion_5(hopf);
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    std::printf("%s (%d criteria failed)\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
    return failures == 0 ? 0 : 1;
}

#pragma once

#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "bifrom/csv.hpp"
#include "bifrom/errors.hpp"
#include "bifrom/types.hpp"

namespace bifrom {

// Maps parameter coordinates to [0,1] per axis; the shared convention for all
// parameter-space distances and classifier inputs.
struct ParamNormalizer {
    Vector lo, hi;

    static ParamNormalizer from_points(const std::vector<ParameterPoint>& points) {
        if (points.empty()) throw InvalidArgument("ParamNormalizer: no points");
        const std::size_t d = points.front().dim();
        ParamNormalizer n;
        n.lo = Vector::Constant(static_cast<Eigen::Index>(d), std::numeric_limits<double>::infinity());
        n.hi = Vector::Constant(static_cast<Eigen::Index>(d), -std::numeric_limits<double>::infinity());
        for (const auto& p : points) {
            if (p.dim() != d) throw DimensionError("ParamNormalizer: mixed parameter dimensions");
            for (std::size_t i = 0; i < d; ++i) {
                n.lo(static_cast<Eigen::Index>(i)) = std::min(n.lo(static_cast<Eigen::Index>(i)), p[i]);
                n.hi(static_cast<Eigen::Index>(i)) = std::max(n.hi(static_cast<Eigen::Index>(i)), p[i]);
            }
        }
        return n;
    }

    Vector normalize(const ParameterPoint& p) const {
        if (static_cast<Eigen::Index>(p.dim()) != lo.size())
            throw DimensionError("ParamNormalizer: parameter dimension mismatch");
        Vector out(lo.size());
        for (Eigen::Index i = 0; i < lo.size(); ++i) {
            const double span = hi(i) - lo(i);
            out(i) = span > 0 ? (p[static_cast<std::size_t>(i)] - lo(i)) / span : 0.0;
        }
        return out;
    }
};

// Plain feed-forward classifier: ReLU hidden layers, softmax output, trained
// full-batch with Adam on cross-entropy.
struct MlpClassifier {
    std::vector<Eigen::Index> layer_sizes;
    std::vector<Matrix> weights;  // weights[l]: sizes[l+1] x sizes[l]
    std::vector<Vector> biases;
    std::uint64_t seed = 0;
    std::vector<double> loss_log;
    double final_accuracy = 0.0;

    std::size_t layers() const { return weights.size(); }
    Eigen::Index input_dim() const { return layer_sizes.front(); }
    Eigen::Index num_classes() const { return layer_sizes.back(); }
};

inline MlpClassifier init_mlp(const std::vector<Eigen::Index>& sizes, std::uint64_t seed) {
    if (sizes.size() < 2) throw InvalidArgument("init_mlp: need at least input and output layers");
    for (auto s : sizes)
        if (s < 1) throw InvalidArgument("init_mlp: layer sizes must be >= 1");
    MlpClassifier net;
    net.layer_sizes = sizes;
    net.seed = seed;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const double he = std::sqrt(2.0 / static_cast<double>(sizes[l]));
        Matrix W(sizes[l + 1], sizes[l]);
        for (Eigen::Index i = 0; i < W.rows(); ++i)
            for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = he * gauss(rng);
        net.weights.push_back(std::move(W));
        net.biases.emplace_back(Vector::Zero(sizes[l + 1]));
    }
    return net;
}

namespace detail {

inline Vector relu(const Vector& z) { return z.cwiseMax(0.0); }

inline Vector softmax(const Vector& logits) {
    const Vector shifted = logits.array() - logits.maxCoeff();
    Vector e = shifted.array().exp();
    return e / e.sum();
}

struct ForwardPass {
    std::vector<Vector> pre;   // pre-activations per layer
    std::vector<Vector> post;  // post[0] = input, then activations
};

inline ForwardPass forward_trace(const MlpClassifier& net, const Vector& x) {
    if (x.size() != net.input_dim()) throw DimensionError("mlp forward: input dimension mismatch");
    ForwardPass fp;
    fp.post.push_back(x);
    for (std::size_t l = 0; l < net.layers(); ++l) {
        Vector z = net.weights[l] * fp.post.back() + net.biases[l];
        fp.pre.push_back(z);
        fp.post.push_back(l + 1 < net.layers() ? relu(z) : z);
    }
    return fp;
}

}  // namespace detail

inline Vector mlp_logits(const MlpClassifier& net, const Vector& x) {
    return detail::forward_trace(net, x).post.back();
}

inline Vector mlp_forward(const MlpClassifier& net, const Vector& x) {
    return detail::softmax(mlp_logits(net, x));
}

inline int predict_cluster(const MlpClassifier& net, const Vector& x) {
    const Vector logits = mlp_logits(net, x);
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < logits.size(); ++i)
        if (logits(i) > logits(best)) best = i;  // ties keep the lowest id
    return static_cast<int>(best);
}

namespace detail {

// Full-batch cross-entropy value and parameter gradients.
inline double batch_gradients(const MlpClassifier& net, const std::vector<Vector>& features,
                              const std::vector<int>& labels, std::vector<Matrix>& gW,
                              std::vector<Vector>& gb) {
    const std::size_t batch = features.size();
    gW.clear();
    gb.clear();
    for (std::size_t l = 0; l < net.layers(); ++l) {
        gW.emplace_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
        gb.emplace_back(Vector::Zero(net.biases[l].size()));
    }
    double loss = 0.0;
    for (std::size_t s = 0; s < batch; ++s) {
        const ForwardPass fp = forward_trace(net, features[s]);
        const Vector p = softmax(fp.post.back());
        const int y = labels[s];
        if (y < 0 || y >= net.num_classes())
            throw InvalidArgument("mlp train: label out of range");
        loss += -std::log(std::max(p(y), 1e-300));
        Vector delta = p;
        delta(y) -= 1.0;
        for (std::size_t l = net.layers(); l-- > 0;) {
            gW[l] += delta * fp.post[l].transpose();
            gb[l] += delta;
            if (l > 0) {
                Vector back = net.weights[l].transpose() * delta;
                delta = (fp.pre[l - 1].array() > 0.0).select(back, Vector::Zero(back.size()));
            }
        }
    }
    const double inv = 1.0 / static_cast<double>(batch);
    for (std::size_t l = 0; l < net.layers(); ++l) {
        gW[l] *= inv;
        gb[l] *= inv;
    }
    return loss * inv;
}

}  // namespace detail

// Adam defaults: rate 1e-3, beta 0.9/0.999, epsilon 1e-8, full batch.
inline MlpClassifier train(MlpClassifier net, const std::vector<Vector>& features,
                           const std::vector<int>& labels, int epochs, double rate,
                           std::uint64_t seed) {
    if (features.size() != labels.size() || features.empty())
        throw InvalidArgument("mlp train: features/labels mismatch or empty");
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    net.seed = seed;
    net.loss_log.clear();

    std::vector<Matrix> mW, vW, gW;
    std::vector<Vector> mb, vb, gb;
    for (std::size_t l = 0; l < net.layers(); ++l) {
        mW.emplace_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
        vW.emplace_back(Matrix::Zero(net.weights[l].rows(), net.weights[l].cols()));
        mb.emplace_back(Vector::Zero(net.biases[l].size()));
        vb.emplace_back(Vector::Zero(net.biases[l].size()));
    }

    for (int epoch = 1; epoch <= epochs; ++epoch) {
        const double loss = detail::batch_gradients(net, features, labels, gW, gb);
        if (!std::isfinite(loss)) throw DivergenceError("mlp train: non-finite loss", epoch);
        net.loss_log.push_back(loss);
        const double c1 = 1.0 - std::pow(beta1, epoch);
        const double c2 = 1.0 - std::pow(beta2, epoch);
        for (std::size_t l = 0; l < net.layers(); ++l) {
            mW[l] = beta1 * mW[l] + (1.0 - beta1) * gW[l];
            vW[l] = beta2 * vW[l] + (1.0 - beta2) * gW[l].cwiseProduct(gW[l]);
            net.weights[l] -= rate * (mW[l] / c1).cwiseQuotient(((vW[l] / c2).cwiseSqrt().array() + eps).matrix());
            mb[l] = beta1 * mb[l] + (1.0 - beta1) * gb[l];
            vb[l] = beta2 * vb[l] + (1.0 - beta2) * gb[l].cwiseProduct(gb[l]);
            net.biases[l] -= rate * (mb[l] / c1).cwiseQuotient(((vb[l] / c2).cwiseSqrt().array() + eps).matrix());
        }
    }

    std::size_t hits = 0;
    for (std::size_t s = 0; s < features.size(); ++s)
        if (predict_cluster(net, features[s]) == labels[s]) ++hits;
    net.final_accuracy = static_cast<double>(hits) / static_cast<double>(features.size());
    return net;
}

// Central-difference check of the analytic gradients on randomly selected
// weights. Samples whose hidden pre-activations sit exactly at the ReLU kink
// are nudged off it first; the check is meaningless there.
inline double gradient_check(const MlpClassifier& net, std::vector<Vector> features,
                             const std::vector<int>& labels, int num_weights = 100,
                             std::uint64_t seed = 1234) {
    if (features.size() != labels.size() || features.empty())
        throw InvalidArgument("gradient_check: features/labels mismatch or empty");
    for (auto& x : features) {
        for (int attempt = 0; attempt < 8; ++attempt) {
            const detail::ForwardPass fp = detail::forward_trace(net, x);
            bool at_kink = false;
            for (std::size_t l = 0; l + 1 < net.layers(); ++l)
                if ((fp.pre[l].cwiseAbs().array() < 1e-9).any()) at_kink = true;
            if (!at_kink) break;
            x.array() += 1e-6;
        }
    }

    std::vector<Matrix> gW;
    std::vector<Vector> gb;
    detail::batch_gradients(net, features, labels, gW, gb);

    std::mt19937_64 rng(seed);
    const double h = 1e-6;
    double worst = 0.0;
    MlpClassifier probe = net;
    for (int t = 0; t < num_weights; ++t) {
        const std::size_t l = rng() % net.layers();
        const Eigen::Index i = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(net.weights[l].rows()));
        const Eigen::Index j = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(net.weights[l].cols()));
        const double orig = probe.weights[l](i, j);
        std::vector<Matrix> tmpW;
        std::vector<Vector> tmpb;
        probe.weights[l](i, j) = orig + h;
        const double lp = detail::batch_gradients(probe, features, labels, tmpW, tmpb);
        probe.weights[l](i, j) = orig - h;
        const double lm = detail::batch_gradients(probe, features, labels, tmpW, tmpb);
        probe.weights[l](i, j) = orig;
        const double numeric = (lp - lm) / (2.0 * h);
        const double analytic = gW[l](i, j);
        const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
        worst = std::max(worst, std::abs(numeric - analytic) / denom);
    }
    return worst;
}

// One net per branch; at single-solution parameters both carry the same label.
struct DualClassifier {
    MlpClassifier branch1;  // single + upper rows
    MlpClassifier branch2;  // single + lower rows
    ParamNormalizer normalizer;

    void validate() const {
        if (branch1.input_dim() != branch2.input_dim() ||
            branch1.num_classes() != branch2.num_classes())
            throw ValidationError("DualClassifier: nets disagree on input dim or class count");
    }

    std::pair<int, int> predict(const ParameterPoint& p) const {
        const Vector x = normalizer.normalize(p);
        return {predict_cluster(branch1, x), predict_cluster(branch2, x)};
    }
};

// --- persistence ------------------------------------------------------------

inline void save_mlp(const MlpClassifier& net, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory: " + dir.string());
    for (std::size_t l = 0; l < net.layers(); ++l) {
        csv::write_matrix((dir / ("W" + std::to_string(l) + ".csv")).string(), net.weights[l]);
        csv::write_matrix((dir / ("b" + std::to_string(l) + ".csv")).string(), net.biases[l]);
    }
    nlohmann::json meta;
    meta["layer_sizes"] = net.layer_sizes;
    meta["seed"] = net.seed;
    meta["final_accuracy"] = net.final_accuracy;
    std::ofstream out(dir / "mlp.json");
    if (!out) throw IoError("cannot write: " + (dir / "mlp.json").string());
    out << meta.dump(2) << '\n';
}

inline MlpClassifier load_mlp(const std::filesystem::path& dir) {
    std::ifstream in(dir / "mlp.json");
    if (!in) throw IoError("missing file: " + (dir / "mlp.json").string());
    nlohmann::json meta;
    MlpClassifier net;
    try {
        in >> meta;
        net.layer_sizes = meta.at("layer_sizes").get<std::vector<Eigen::Index>>();
        net.seed = meta.at("seed").get<std::uint64_t>();
        net.final_accuracy = meta.at("final_accuracy").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError((dir / "mlp.json").string() + ": " + e.what());
    }
    for (std::size_t l = 0; l + 1 < net.layer_sizes.size(); ++l) {
        net.weights.push_back(csv::read_matrix((dir / ("W" + std::to_string(l) + ".csv")).string()));
        net.biases.push_back(csv::read_matrix((dir / ("b" + std::to_string(l) + ".csv")).string()).col(0));
    }
    return net;
}

}  // namespace bifrom

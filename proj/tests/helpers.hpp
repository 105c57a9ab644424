#pragma once

// Shared test fixtures and the independent oracles the suites check against.
// Everything here recomputes quantities by a different route than the library.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "certul/dataset.hpp"
#include "certul/model.hpp"
#include "certul/rng.hpp"

namespace testutil {

using certul::Rng;

// Random binary classification dataset with N(0, I) features and a random
// linear teacher; independent of data::gen_synthetic.
inline certul::data::Dataset random_dataset(Eigen::Index n, Eigen::Index d,
                                            std::uint64_t seed, int classes = 2,
                                            double flip = 0.1) {
    Rng rng(seed);
    certul::data::Dataset ds;
    ds.class_count = classes;
    ds.features.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) ds.features(i, j) = rng.normal();
    if (classes == 2) {
        Eigen::VectorXd w(d);
        for (Eigen::Index j = 0; j < d; ++j) w[j] = rng.normal();
        ds.labels.resize(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            int y = ds.features.row(i).dot(w) > 0 ? 1 : 0;
            if (rng.uniform() < flip) y = 1 - y;
            ds.labels[static_cast<std::size_t>(i)] = y;
        }
    } else {
        ds.labels.resize(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i)
            ds.labels[static_cast<std::size_t>(i)] =
                static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    }
    return ds;
}

inline certul::model::ModelParams random_params(Eigen::Index classes, Eigen::Index d,
                                                std::uint64_t seed, double scale = 0.5) {
    Rng rng(seed);
    certul::model::ModelParams p;
    p.weights.resize(classes, d);
    p.bias.resize(classes);
    for (Eigen::Index i = 0; i < classes; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) p.weights(i, j) = scale * rng.normal();
        p.bias[i] = scale * rng.normal();
    }
    return p;
}

// Brute-force loss oracle: explicit per-sample loop, naive softmax.
inline double loss_oracle(const certul::data::Dataset& ds,
                          const certul::model::ModelParams& params, double lambda) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < ds.rows(); ++i) {
        Eigen::VectorXd z = params.weights * ds.features.row(i).transpose() + params.bias;
        double denom = 0.0;
        const double zmax = z.maxCoeff();
        for (Eigen::Index c = 0; c < z.size(); ++c) denom += std::exp(z[c] - zmax);
        const double p_y = std::exp(z[ds.labels[static_cast<std::size_t>(i)]] - zmax) / denom;
        total += -std::log(p_y);
    }
    total /= static_cast<double>(ds.rows());
    total += 0.5 * lambda *
             (params.weights.squaredNorm() + params.bias.squaredNorm());
    return total;
}

// Central finite differences of a scalar function of the flattened parameters.
template <typename F>
Eigen::VectorXd finite_diff_gradient(const F& f, const Eigen::VectorXd& at, double h = 1e-6) {
    Eigen::VectorXd g(at.size());
    for (Eigen::Index i = 0; i < at.size(); ++i) {
        Eigen::VectorXd hi = at, lo = at;
        hi[i] += h;
        lo[i] -= h;
        g[i] = (f(hi) - f(lo)) / (2.0 * h);
    }
    return g;
}

inline double spearman_rho(std::vector<double> a, std::vector<double> b) {
    const auto ranks = [](std::vector<double>& v) {
        std::vector<std::size_t> order(v.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            return v[x] < v[y];
        });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < order.size(); ++i) r[order[i]] = static_cast<double>(i);
        return r;
    };
    const std::vector<double> ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(ra.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) { ma += ra[i]; mb += rb[i]; }
    ma /= n; mb /= n;
    double num = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    return num / std::sqrt(va * vb);
}

// Empirical regularity constants of the cross-entropy loss measured at probe
// points: the spectral bounds actually realized by the instance, used to
// attribute certified-bound violations to optimistic configured constants.
struct MeasuredConstants {
    double beta = 0.0;   // max per-sample Hessian eigenvalue (plus lambda)
    double gamma = 0.0;  // Hessian Lipschitz estimate along probe segments
    double lipschitz = 0.0;
};

inline double max_per_sample_hessian_eig(const certul::data::Dataset& ds,
                                         const certul::model::ModelParams& params,
                                         double lambda) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < ds.rows(); ++i) {
        const Eigen::VectorXd probs =
            certul::model::predict_proba(params, ds.features.row(i).transpose());
        const Eigen::MatrixXd m =
            probs.asDiagonal().toDenseMatrix() - probs * probs.transpose();
        const double aug_sq = ds.features.row(i).squaredNorm() + 1.0;
        const double m_eig =
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().maxCoeff();
        worst = std::max(worst, m_eig * aug_sq);
    }
    return worst + lambda;
}

inline MeasuredConstants measure_constants(const certul::data::Dataset& ds,
                                           const certul::model::ModelParams& a,
                                           const certul::model::ModelParams& b,
                                           const certul::model::LossConstants& k) {
    MeasuredConstants out;
    out.beta = std::max(max_per_sample_hessian_eig(ds, a, k.lambda),
                        max_per_sample_hessian_eig(ds, b, k.lambda));

    // gamma: spectral norm of the mean-Hessian difference over the segment.
    const Eigen::VectorXd fa = a.flatten(), fb = b.flatten();
    const double seg = (fa - fb).norm();
    if (seg > 1e-12) {
        const Eigen::MatrixXd ha = certul::model::hessian(ds, a, k);
        const Eigen::MatrixXd hb = certul::model::hessian(ds, b, k);
        const Eigen::MatrixXd diff = ha - hb;
        const double spectral =
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(diff).eigenvalues().cwiseAbs().maxCoeff();
        out.gamma = spectral / seg;
    }

    double worst_grad = 0.0;
    for (Eigen::Index i = 0; i < ds.rows(); ++i) {
        certul::data::Dataset one;
        one.class_count = ds.class_count;
        one.features = ds.features.row(i);
        one.labels = {ds.labels[static_cast<std::size_t>(i)]};
        worst_grad = std::max(worst_grad, certul::model::gradient(one, a, k).norm());
    }
    out.lipschitz = worst_grad;
    return out;
}

}  // namespace testutil

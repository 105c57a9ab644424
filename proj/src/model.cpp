#include "certul/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

namespace certul::model {

Eigen::VectorXd ModelParams::flatten() const {
    const Eigen::Index c = classes(), d = dim();
    Eigen::VectorXd flat(flat_size());
    for (Eigen::Index i = 0; i < c; ++i) {
        flat.segment(i * (d + 1), d) = weights.row(i).transpose();
        flat[i * (d + 1) + d] = bias[i];
    }
    return flat;
}

ModelParams ModelParams::unflatten(const Eigen::VectorXd& flat, Eigen::Index classes,
                                   Eigen::Index dim) {
    if (flat.size() != classes * (dim + 1))
        throw ValidationError("unflatten: size mismatch");
    ModelParams p;
    p.weights.resize(classes, dim);
    p.bias.resize(classes);
    for (Eigen::Index i = 0; i < classes; ++i) {
        p.weights.row(i) = flat.segment(i * (dim + 1), dim).transpose();
        p.bias[i] = flat[i * (dim + 1) + dim];
    }
    return p;
}

ModelParams ModelParams::zeros(Eigen::Index classes, Eigen::Index dim) {
    ModelParams p;
    p.weights = Eigen::MatrixXd::Zero(classes, dim);
    p.bias = Eigen::VectorXd::Zero(classes);
    return p;
}

namespace {

void check_dims(const data::Dataset& ds, const ModelParams& params) {
    if (ds.dim() != params.dim() || ds.class_count != params.classes())
        throw ValidationError("model/dataset dimension mismatch: model (" +
                              std::to_string(params.classes()) + " x " +
                              std::to_string(params.dim()) + "), data (C=" +
                              std::to_string(ds.class_count) + ", d=" +
                              std::to_string(ds.dim()) + ")");
}

// Row-wise softmax with max shift; also returns log-sum-exp per row.
void softmax_rows(const Eigen::MatrixXd& z, Eigen::MatrixXd& probs, Eigen::VectorXd& lse) {
    probs.resize(z.rows(), z.cols());
    lse.resize(z.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double zmax = z.row(i).maxCoeff();
        const Eigen::ArrayXd e = (z.row(i).transpose().array() - zmax).exp();
        const double s = e.sum();
        probs.row(i) = (e / s).matrix().transpose();
        lse[i] = zmax + std::log(s);
    }
}

double squared_norm(const ModelParams& p) {
    return p.weights.squaredNorm() + p.bias.squaredNorm();
}

}  // namespace

Eigen::MatrixXd logits(const ModelParams& params, const Eigen::MatrixXd& features) {
    if (features.cols() != params.dim())
        throw ValidationError("logits: feature dimension mismatch");
    return (features * params.weights.transpose()).rowwise() + params.bias.transpose();
}

double loss(const data::Dataset& ds, const ModelParams& params, const LossConstants& k) {
    check_dims(ds, params);
    const Eigen::MatrixXd z = logits(params, ds.features);
    Eigen::MatrixXd probs;
    Eigen::VectorXd lse;
    softmax_rows(z, probs, lse);
    double ce = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        ce += lse[i] - z(i, ds.labels[static_cast<std::size_t>(i)]);
    ce /= static_cast<double>(z.rows());
    return ce + 0.5 * k.lambda * squared_norm(params);
}

Eigen::VectorXd gradient(const data::Dataset& ds, const ModelParams& params,
                         const LossConstants& k) {
    check_dims(ds, params);
    const Eigen::Index n = ds.rows();
    const Eigen::MatrixXd z = logits(params, ds.features);
    Eigen::MatrixXd probs;
    Eigen::VectorXd lse;
    softmax_rows(z, probs, lse);
    // residual = softmax - one_hot(y); mean gradient factors into residual^T [X 1].
    for (Eigen::Index i = 0; i < n; ++i)
        probs(i, ds.labels[static_cast<std::size_t>(i)]) -= 1.0;
    const Eigen::MatrixXd gw = (probs.transpose() * ds.features) / static_cast<double>(n);
    const Eigen::VectorXd gb = probs.colwise().sum().transpose() / static_cast<double>(n);

    ModelParams g;
    g.weights = gw + k.lambda * params.weights;
    g.bias = gb + k.lambda * params.bias;
    return g.flatten();
}

Eigen::MatrixXd hessian(const data::Dataset& ds, const ModelParams& params,
                        const LossConstants& k) {
    check_dims(ds, params);
    const Eigen::Index n = ds.rows();
    const Eigen::Index c = params.classes();
    const Eigen::Index d = params.dim();
    const Eigen::Index p = c * (d + 1);
    if (p > kHessianCapacity)
        throw ValidationError("hessian: p = " + std::to_string(p) +
                              " exceeds the materialization capacity " +
                              std::to_string(kHessianCapacity));

    const Eigen::MatrixXd z = logits(params, ds.features);
    Eigen::MatrixXd probs;
    Eigen::VectorXd lse;
    softmax_rows(z, probs, lse);

    Eigen::MatrixXd aug(n, d + 1);
    aug.leftCols(d) = ds.features;
    aug.col(d).setOnes();

    // Mean of (diag(pi) - pi pi^T) (x) (a a^T) over samples, assembled one
    // class pair at a time as a weighted Gram matrix.
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd w(n);
    for (Eigen::Index a = 0; a < c; ++a) {
        for (Eigen::Index b = a; b < c; ++b) {
            if (a == b)
                w = (probs.col(a).array() * (1.0 - probs.col(a).array())).matrix();
            else
                w = (-probs.col(a).array() * probs.col(b).array()).matrix();
            const Eigen::MatrixXd block =
                (aug.transpose() * w.asDiagonal() * aug) / static_cast<double>(n);
            h.block(a * (d + 1), b * (d + 1), d + 1, d + 1) = block;
            if (a != b) h.block(b * (d + 1), a * (d + 1), d + 1, d + 1) = block.transpose();
        }
    }
    h.diagonal().array() += k.lambda;
    h = ((h + h.transpose()) * 0.5).eval();
    return h;
}

ModelParams train(const data::Dataset& ds, const LossConstants& k, const TrainConfig& cfg) {
    ds.validate();
    if (cfg.grad_tol <= 0.0) throw ValidationError("train: grad_tol must be > 0");
    if (k.lambda <= 0.0)
        throw ValidationError("train: lambda must be > 0 for a strictly convex objective");

    ModelParams theta = ModelParams::zeros(ds.class_count, ds.dim());
    double f = loss(ds, theta, k);

    for (int it = 0; it < cfg.max_newton_iters; ++it) {
        const Eigen::VectorXd g = gradient(ds, theta, k);
        const double gnorm = g.norm();
        if (gnorm <= cfg.grad_tol) return theta;

        Eigen::MatrixXd h = hessian(ds, theta, k);
        if (cfg.ridge_jitter > 0.0) h.diagonal().array() += cfg.ridge_jitter;
        const Eigen::LLT<Eigen::MatrixXd> llt(h);
        if (llt.info() != Eigen::Success)
            throw ValidationError("train: Hessian factorization failed (lambda too small?)");
        const Eigen::VectorXd step = llt.solve(-g);

        // Backtracking Armijo line search. The slack term keeps the search
        // from spinning on rounding noise once the loss differences fall
        // below double precision; in that regime the pure Newton step is
        // locally contractive and is taken as is.
        const double slope = g.dot(step);
        const double noise_floor = 1e-14 * std::max(1.0, std::abs(f));
        double t = 1.0;
        const Eigen::VectorXd flat = theta.flatten();
        ModelParams trial;
        double f_trial = 0.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            trial = ModelParams::unflatten(flat + t * step, ds.class_count, ds.dim());
            f_trial = loss(ds, trial, k);
            if (f_trial <= f + 1e-4 * t * slope + noise_floor) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            trial = ModelParams::unflatten(flat + step, ds.class_count, ds.dim());
            f_trial = loss(ds, trial, k);
        }
        theta = std::move(trial);
        f = f_trial;
    }

    const double final_norm = gradient(ds, theta, k).norm();
    if (final_norm <= cfg.grad_tol) return theta;
    char msg[160];
    std::snprintf(msg, sizeof(msg),
                  "train: Newton did not reach tolerance %.3e within %d iterations; "
                  "final gradient norm %.3e",
                  cfg.grad_tol, cfg.max_newton_iters, final_norm);
    throw ValidationError(msg);
}

Eigen::VectorXd predict_proba(const ModelParams& params, const Eigen::VectorXd& x) {
    if (x.size() != params.dim()) throw ValidationError("predict_proba: dimension mismatch");
    Eigen::VectorXd z = params.weights * x + params.bias;
    const double zmax = z.maxCoeff();
    Eigen::ArrayXd e = (z.array() - zmax).exp();
    return (e / e.sum()).matrix();
}

Eigen::VectorXd per_sample_losses(const ModelParams& params, const data::Dataset& ds) {
    check_dims(ds, params);
    const Eigen::MatrixXd z = logits(params, ds.features);
    Eigen::MatrixXd probs;
    Eigen::VectorXd lse;
    softmax_rows(z, probs, lse);
    Eigen::VectorXd out(ds.rows());
    for (Eigen::Index i = 0; i < ds.rows(); ++i)
        out[i] = lse[i] - z(i, ds.labels[static_cast<std::size_t>(i)]);
    return out;
}

double accuracy(const ModelParams& params, const data::Dataset& ds) {
    check_dims(ds, params);
    if (ds.rows() == 0) throw ValidationError("accuracy: empty dataset");
    const Eigen::MatrixXd z = logits(params, ds.features);
    Eigen::Index hits = 0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < z.cols(); ++c)
            if (z(i, c) > z(i, best)) best = c;  // strict: ties keep the smallest id
        if (best == ds.labels[static_cast<std::size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(z.rows());
}

void save_model(const ModelParams& params, double lambda, const std::string& path) {
    nlohmann::json j;
    j["C"] = params.classes();
    j["d"] = params.dim();
    std::vector<double> w(static_cast<std::size_t>(params.classes() * params.dim()));
    for (Eigen::Index i = 0; i < params.classes(); ++i)
        for (Eigen::Index c = 0; c < params.dim(); ++c)
            w[static_cast<std::size_t>(i * params.dim() + c)] = params.weights(i, c);
    j["weights"] = w;
    std::vector<double> b(params.bias.data(), params.bias.data() + params.bias.size());
    j["bias"] = b;
    j["lambda"] = lambda;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write model file: " + path);
    f << j.dump(2) << '\n';
}

std::pair<ModelParams, double> load_model(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open model file: " + path);
    nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ValidationError("model file is not valid JSON: " + path);
    try {
        const auto c = j.at("C").get<Eigen::Index>();
        const auto d = j.at("d").get<Eigen::Index>();
        const auto w = j.at("weights").get<std::vector<double>>();
        const auto b = j.at("bias").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(w.size()) != c * d ||
            static_cast<Eigen::Index>(b.size()) != c)
            throw ValidationError("model file has inconsistent shapes: " + path);
        ModelParams p;
        p.weights.resize(c, d);
        for (Eigen::Index i = 0; i < c; ++i)
            for (Eigen::Index col = 0; col < d; ++col)
                p.weights(i, col) = w[static_cast<std::size_t>(i * d + col)];
        p.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), c);
        return {std::move(p), j.value("lambda", 0.0)};
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("model file " + path + ": " + e.what());
    }
}

}  // namespace certul::model

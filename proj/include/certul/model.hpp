#pragma once

#include <Eigen/Dense>
#include <string>

#include "certul/dataset.hpp"

namespace certul::model {

// Multinomial logistic classifier parameters. Flattened layout is class-major
// blocks of size d+1: [w_c ; b_c] for c = 0..C-1, so p = C*(d+1) and the
// Hessian has the (diag(pi) - pi pi^T) (x) [x;1][x;1]^T block structure.
struct ModelParams {
    Eigen::MatrixXd weights;  // C x d
    Eigen::VectorXd bias;     // C

    Eigen::Index classes() const { return weights.rows(); }
    Eigen::Index dim() const { return weights.cols(); }
    Eigen::Index flat_size() const { return weights.rows() * (weights.cols() + 1); }

    Eigen::VectorXd flatten() const;
    static ModelParams unflatten(const Eigen::VectorXd& flat, Eigen::Index classes,
                                 Eigen::Index dim);
    static ModelParams zeros(Eigen::Index classes, Eigen::Index dim);
};

// Regularity constants of the loss (lambda, alpha, beta, gamma, L). The bounds
// treat these as configuration; defaults follow the reference hyperparameters
// lambda = 0.01, alpha = 1 + lambda, beta = gamma = L = 1.
struct LossConstants {
    double lambda = 0.01;
    double alpha = 1.01;
    double beta = 1.0;
    double gamma = 1.0;
    double lipschitz = 1.0;

    // alpha <= beta is deliberately not enforced: the constants are tuned
    // hyperparameters and the reference configuration itself sets
    // alpha = 1 + lambda with beta = 1.
    void validate() const {
        if (lambda < 0.0) throw ValidationError("lambda must be >= 0");
        if (alpha <= 0.0 || beta <= 0.0)
            throw ValidationError("constants must satisfy alpha > 0 and beta > 0");
        if (gamma < 0.0 || lipschitz <= 0.0)
            throw ValidationError("constants must satisfy gamma >= 0 and L > 0");
    }
};

struct TrainConfig {
    double grad_tol = 1e-10;
    int max_newton_iters = 100;
    double ridge_jitter = 0.0;
};

inline constexpr Eigen::Index kHessianCapacity = 20000;  // p beyond this is out of desk scale

// Mean cross-entropy over samples plus (lambda/2)*||theta||^2 (bias included).
double loss(const data::Dataset& ds, const ModelParams& params, const LossConstants& k);

// Mean per-sample gradient plus lambda*theta, flattened.
Eigen::VectorXd gradient(const data::Dataset& ds, const ModelParams& params,
                         const LossConstants& k);

// Mean per-sample Hessian plus lambda*I; symmetric p x p, positive definite
// for lambda > 0. Refuses p > kHessianCapacity.
Eigen::MatrixXd hessian(const data::Dataset& ds, const ModelParams& params,
                        const LossConstants& k);

// Damped Newton (backtracking line search) from theta = 0 down to
// ||grad||_2 <= grad_tol. Deterministic; throws when the iteration budget
// runs out, carrying the final gradient norm in the message.
ModelParams train(const data::Dataset& ds, const LossConstants& k, const TrainConfig& cfg = {});

Eigen::VectorXd predict_proba(const ModelParams& params, const Eigen::VectorXd& x);

// Logits for every row: n x C.
Eigen::MatrixXd logits(const ModelParams& params, const Eigen::MatrixXd& features);

// Per-sample unregularized cross-entropy losses.
Eigen::VectorXd per_sample_losses(const ModelParams& params, const data::Dataset& ds);

// Argmax accuracy; ties break toward the smallest class id.
double accuracy(const ModelParams& params, const data::Dataset& ds);

// JSON model file: {C, d, weights (row-major), bias, lambda}. Reload
// reproduces predictions bit-exactly.
void save_model(const ModelParams& params, double lambda, const std::string& path);
std::pair<ModelParams, double> load_model(const std::string& path);

}  // namespace certul::model

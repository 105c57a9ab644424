#pragma once

#include <cstdint>
#include <optional>

#include "certul/model.hpp"

namespace certul::distance {

enum class KlMethod { OracleGaussian, DvSampled, Fixed };

struct KlEstimate {
    double conditional_term = 0.0;  // may be negative before clamping
    double marginal_term = 0.0;
    double total = 0.0;  // max(0, conditional + marginal)
    KlMethod method = KlMethod::DvSampled;
};

struct DvNetConfig {
    Eigen::Index hidden1 = 128;
    Eigen::Index hidden2 = 64;
    int epochs = 500;
    double learning_rate = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const {
        if (hidden1 < 1 || hidden2 < 1) throw ValidationError("dv net widths must be >= 1");
        if (epochs < 1) throw ValidationError("dv epochs must be >= 1");
        if (learning_rate <= 0.0) throw ValidationError("dv learning rate must be > 0");
    }
};

// Critic T: three affine layers d -> h1 -> h2 -> 1 with ReLU between, plus the
// input standardizer fitted on the pooled training samples.
struct DvNet {
    Eigen::VectorXd input_mean, input_scale;  // per feature
    Eigen::MatrixXd w1, w2;                   // h1 x d, h2 x h1
    Eigen::RowVectorXd w3;                    // 1 x h2
    Eigen::VectorXd b1, b2;
    double b3 = 0.0;

    // Scores for every row of x (raw, unstandardized coordinates).
    Eigen::VectorXd forward(const Eigen::MatrixXd& x) const;
};

// Donsker-Varadhan objective mean_q T(x) - log mean_p exp(T(x)), computed with
// a max shift on the exponential term.
double dv_objective(const DvNet& net, const Eigen::MatrixXd& samples_q,
                    const Eigen::MatrixXd& samples_p);

struct DvGrads {
    Eigen::MatrixXd w1, w2;
    Eigen::RowVectorXd w3;
    Eigen::VectorXd b1, b2;
    double b3 = 0.0;
};

// Analytic d(objective)/d(params); the training loop ascends these.
DvGrads dv_objective_gradients(const DvNet& net, const Eigen::MatrixXd& samples_q,
                               const Eigen::MatrixXd& samples_p);

// Trains the critic by full-batch Adam to maximize the DV objective. The
// returned KL estimate is the mean objective over the final 10% of epochs,
// clamped to [0, ln(#p samples)]; the upper end is the information ceiling a
// finite Monte-Carlo reference supports.
std::pair<DvNet, double> dv_train(const Eigen::MatrixXd& samples_q,
                                  const Eigen::MatrixXd& samples_p, const DvNetConfig& cfg);

// 0.5 * sum |p_i - q_i| for discrete distributions.
double tv_discrete(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

// Bretagnolle-Huber: TV <= sqrt(1 - exp(-kl)).
double bh_tv_bound(double kl);

// Zero-mean Gaussian KL(Q||P) = 0.5 * (tr(P^-1 Q) - d + ln det P - ln det Q).
double gaussian_kl(const Eigen::MatrixXd& cov_q, const Eigen::MatrixXd& cov_p);

// Conditional term of the KL decomposition: mean over the surrogate of
// ln(f_{theta_s}(x)_y / f_{theta}(x)_y), probabilities clamped below at 1e-12.
double conditional_kl_term(const model::ModelParams& theta_surrogate,
                           const model::ModelParams& theta_source,
                           const data::Dataset& surrogate);

// Conditional term + DV marginal term between the surrogate features (Q) and
// the sampled source marginal (P-hat), clamped at zero in total.
KlEstimate kl_total(const model::ModelParams& theta_source,
                    const model::ModelParams& theta_surrogate, const data::Dataset& surrogate,
                    const Eigen::MatrixXd& sampled_source, const DvNetConfig& cfg);

}  // namespace certul::distance

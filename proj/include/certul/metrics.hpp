#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "certul/mechanism.hpp"

namespace certul::eval {

struct MiaConfig {
    int folds = 5;
    std::uint64_t balance_seed = 0;
    double attacker_lambda = 0.01;  // L2 for the 1-feature logistic attacker

    void validate() const {
        if (folds < 2) throw ValidationError("mia: folds must be >= 2");
        if (attacker_lambda <= 0.0) throw ValidationError("mia: attacker lambda must be > 0");
    }
};

struct RelearnConfig {
    double learning_rate = 0.1;
    int cap = 500;
    double slack = 0.005;  // accuracy slack below the target
};

struct ForgetScoreConfig {
    int draws_per_side = 64;
    int threshold_grid_size = 101;

    void validate() const {
        if (draws_per_side < 2) throw ValidationError("forget_score: K must be >= 2");
        if (threshold_grid_size < 2)
            throw ValidationError("forget_score: threshold grid must have >= 2 points");
    }
};

struct RelearnResult {
    int iterations = 0;
    bool capped = false;
};

struct MetricsReport {
    double acc_train = 0.0;
    double acc_test = 0.0;
    double acc_retain = 0.0;
    double acc_forget = 0.0;
    double mia = 0.0;
    RelearnResult relearn;
    double forget_score = 0.0;
    // Pre-noise accuracies, recorded only for the unlearning rows.
    bool has_pre_noise = false;
    double acc_train_pre = 0.0, acc_test_pre = 0.0, acc_retain_pre = 0.0, acc_forget_pre = 0.0;
};

// Balanced-accuracy membership inference on the scalar per-sample loss:
// 0.5 means the forget and test samples are indistinguishable under theta.
double mia_score(const model::ModelParams& theta, const data::Dataset& forget,
                 const data::Dataset& test, const MiaConfig& cfg,
                 const model::LossConstants& k);

// The attack itself, on precomputed loss values (member side first). Both
// sides are balanced to the smaller size before the k-fold attack.
double mia_score_from_losses(std::vector<double> loss_member,
                             std::vector<double> loss_nonmember, const MiaConfig& cfg);

// Full-batch gradient descent on the full dataset from theta until the forget
// accuracy reaches target_acc - slack; returns the capped iteration count when
// the target is never reached.
RelearnResult relearn_time(const model::ModelParams& theta, const data::Dataset& full,
                           const data::Dataset& forget, double target_acc,
                           const model::LossConstants& k, const RelearnConfig& cfg = {});

// Per-example empirical-epsilon score between the noised unlearned and noised
// retrained models, FS = mean_i exp(-eps_i) in (0, 1]. Both sides receive the
// same sigma; FPR/FNR use add-one smoothing over K draws per side.
double forget_score(const model::ModelParams& theta_unlearn_pre,
                    const model::ModelParams& theta_retrain, double sigma,
                    const data::Dataset& forget, const ForgetScoreConfig& cfg,
                    std::uint64_t seed);

struct Splits {
    data::Dataset train;  // the full source dataset
    data::Dataset test;
    data::Dataset retain;
    data::Dataset forget;
};

struct ModelSet {
    model::ModelParams original;
    model::ModelParams retrained;
    unlearn::UnlearnOutput unlearn_plus;
    unlearn::UnlearnOutput unlearn_minus;
};

struct EvalConfig {
    MiaConfig mia;
    RelearnConfig relearn;
    ForgetScoreConfig fs;
    model::LossConstants constants;
    std::uint64_t seed = 0;
};

struct NamedReport {
    std::string name;
    MetricsReport report;
};

struct EvaluationResult {
    std::vector<NamedReport> reports;  // original, retrain, unlearn_plus, unlearn_minus
    double fs1_plus = 0.0;   // Unlearn(+) under its own sigma
    double fs1_minus = 0.0;  // Unlearn(-) under its own sigma
    double fs2_minus = 0.0;  // Unlearn(-) under Unlearn(+)'s sigma
};

EvaluationResult evaluate_all(const ModelSet& models, const Splits& splits,
                              const EvalConfig& cfg);

// `model,acc_train,acc_test,acc_retain,acc_forget,mia,rt,fs`, 6 significant
// digits per float, one row per evaluated model.
std::string metrics_csv(const std::vector<NamedReport>& reports);

}  // namespace certul::eval

#include "certul/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "certul/rng.hpp"

namespace certul::eval {

namespace {

std::vector<Eigen::Index> shuffled_indices(Eigen::Index n, Rng& rng) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    for (Eigen::Index i = n - 1; i > 0; --i) {
        const auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    return idx;
}

}  // namespace

double mia_score(const model::ModelParams& theta, const data::Dataset& forget,
                 const data::Dataset& test, const MiaConfig& cfg,
                 const model::LossConstants& k) {
    forget.validate();
    test.validate();
    (void)k;
    const Eigen::VectorXd lf = model::per_sample_losses(theta, forget);
    const Eigen::VectorXd lt = model::per_sample_losses(theta, test);
    return mia_score_from_losses({lf.data(), lf.data() + lf.size()},
                                 {lt.data(), lt.data() + lt.size()}, cfg);
}

double mia_score_from_losses(std::vector<double> loss_member,
                             std::vector<double> loss_nonmember, const MiaConfig& cfg) {
    cfg.validate();
    if (loss_member.empty() || loss_nonmember.empty())
        throw ValidationError("mia_score: both sides must be nonempty");

    Rng rng(cfg.balance_seed);
    const std::size_t side = std::min(loss_member.size(), loss_nonmember.size());
    if (side < static_cast<std::size_t>(cfg.folds))
        throw ValidationError("mia_score: fewer samples per side (" + std::to_string(side) +
                              ") than folds (" + std::to_string(cfg.folds) + ")");

    const auto balance = [&](std::vector<double>& v) {
        if (v.size() == side) return;
        auto idx = shuffled_indices(static_cast<Eigen::Index>(v.size()), rng);
        std::vector<double> out(side);
        for (std::size_t i = 0; i < side; ++i)
            out[i] = v[static_cast<std::size_t>(idx[i])];
        v = std::move(out);
    };
    balance(loss_member);
    balance(loss_nonmember);
    std::vector<double>& loss_forget = loss_member;
    std::vector<double>& loss_test = loss_nonmember;

    // Fold assignment round-robin over a per-side shuffle keeps folds balanced.
    auto fold_of = [&](Rng& r, std::size_t n) {
        std::vector<int> fold(n);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = n - 1; i > 0; --i) {
            const auto j = static_cast<std::size_t>(r.below(i + 1));
            std::swap(order[i], order[j]);
        }
        for (std::size_t i = 0; i < n; ++i) fold[order[i]] = static_cast<int>(i % static_cast<std::size_t>(cfg.folds));
        return fold;
    };
    const std::vector<int> fold_f = fold_of(rng, loss_forget.size());
    const std::vector<int> fold_t = fold_of(rng, loss_test.size());

    model::LossConstants attacker_k;
    attacker_k.lambda = cfg.attacker_lambda;
    model::TrainConfig attacker_train;
    attacker_train.grad_tol = 1e-8;

    double acc_sum = 0.0;
    for (int f = 0; f < cfg.folds; ++f) {
        data::Dataset train_ds;
        std::vector<double> feats;
        std::vector<int> labs;
        for (std::size_t i = 0; i < loss_forget.size(); ++i)
            if (fold_f[i] != f) { feats.push_back(loss_forget[i]); labs.push_back(1); }
        for (std::size_t i = 0; i < loss_test.size(); ++i)
            if (fold_t[i] != f) { feats.push_back(loss_test[i]); labs.push_back(0); }
        train_ds.features = Eigen::Map<Eigen::MatrixXd>(feats.data(),
                                                        static_cast<Eigen::Index>(feats.size()), 1);
        train_ds.labels = std::move(labs);
        train_ds.class_count = 2;
        const model::ModelParams attacker = model::train(train_ds, attacker_k, attacker_train);

        const auto predict_member = [&](double loss_value) {
            Eigen::VectorXd x(1);
            x[0] = loss_value;
            const Eigen::VectorXd z = attacker.weights * x + attacker.bias;
            return z[1] > z[0];  // ties resolve to the smaller class id (non-member)
        };
        double tp = 0, fn = 0, tn = 0, fp = 0;
        for (std::size_t i = 0; i < loss_forget.size(); ++i)
            if (fold_f[i] == f) (predict_member(loss_forget[i]) ? tp : fn) += 1.0;
        for (std::size_t i = 0; i < loss_test.size(); ++i)
            if (fold_t[i] == f) (predict_member(loss_test[i]) ? fp : tn) += 1.0;
        const double tpr = (tp + fn > 0) ? tp / (tp + fn) : 0.0;
        const double tnr = (tn + fp > 0) ? tn / (tn + fp) : 0.0;
        acc_sum += 0.5 * (tpr + tnr);
    }
    return acc_sum / static_cast<double>(cfg.folds);
}

RelearnResult relearn_time(const model::ModelParams& theta, const data::Dataset& full,
                           const data::Dataset& forget, double target_acc,
                           const model::LossConstants& k, const RelearnConfig& cfg) {
    if (target_acc <= 0.0 || target_acc > 1.0)
        throw ValidationError("relearn_time: target accuracy must lie in (0, 1]");
    const double threshold = target_acc - cfg.slack;

    model::ModelParams current = theta;
    for (int it = 0; it <= cfg.cap; ++it) {
        if (model::accuracy(current, forget) >= threshold) return {it, false};
        if (it == cfg.cap) break;
        const Eigen::VectorXd g = model::gradient(full, current, k);
        current = model::ModelParams::unflatten(current.flatten() - cfg.learning_rate * g,
                                                current.classes(), current.dim());
    }
    return {cfg.cap, true};
}

double forget_score(const model::ModelParams& theta_unlearn_pre,
                    const model::ModelParams& theta_retrain, double sigma,
                    const data::Dataset& forget, const ForgetScoreConfig& cfg,
                    std::uint64_t seed) {
    cfg.validate();
    forget.validate();
    if (sigma < 0.0) throw ValidationError("forget_score: sigma must be >= 0");
    const Eigen::Index m = forget.rows();
    const int big_k = cfg.draws_per_side;

    // Per-sample losses across K noised copies of each side: m x K each. The
    // two sides share the noise draws (common random numbers), so identical
    // parameters give identical loss clouds and an exactly null score.
    Eigen::MatrixXd losses_u(m, big_k), losses_r(m, big_k);
    for (int j = 0; j < big_k; ++j) {
        const std::uint64_t draw_seed =
            derive_seed(seed, "fs_draw", static_cast<std::uint64_t>(j));
        const auto noised_u = unlearn::gaussian_mechanism(theta_unlearn_pre, sigma, draw_seed);
        const auto noised_r = unlearn::gaussian_mechanism(theta_retrain, sigma, draw_seed);
        losses_u.col(j) = model::per_sample_losses(noised_u, forget);
        losses_r.col(j) = model::per_sample_losses(noised_r, forget);
    }

    const double smooth_denom = static_cast<double>(big_k) + 2.0;
    double fs_sum = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double lo = std::min(losses_u.row(i).minCoeff(), losses_r.row(i).minCoeff());
        const double hi = std::max(losses_u.row(i).maxCoeff(), losses_r.row(i).maxCoeff());
        double eps_hat = 0.0;
        for (int t = 0; t < cfg.threshold_grid_size; ++t) {
            const double thr =
                lo + (hi - lo) * static_cast<double>(t) /
                         static_cast<double>(cfg.threshold_grid_size - 1);
            int above_u = 0, above_r = 0;
            for (int j = 0; j < big_k; ++j) {
                if (losses_u(i, j) > thr) ++above_u;
                if (losses_r(i, j) > thr) ++above_r;
            }
            // Smoothed FPR/FNR of the threshold attacker, both classification
            // directions; the two absolute log-ratios cover all four cases.
            const double tail = std::abs(std::log((above_u + 1.0) / (above_r + 1.0)));
            const double head = std::abs(std::log((smooth_denom - 1.0 - above_r) /
                                                  (smooth_denom - 1.0 - above_u)));
            eps_hat = std::max(eps_hat, std::max(tail, head));
        }
        fs_sum += std::exp(-eps_hat);
    }
    return fs_sum / static_cast<double>(m);
}

EvaluationResult evaluate_all(const ModelSet& models, const Splits& splits,
                              const EvalConfig& cfg) {
    if (splits.forget.rows() == 0)
        throw ValidationError("evaluate_all: forget split is empty");
    splits.train.validate();
    splits.test.validate();
    splits.retain.validate();
    splits.forget.validate();

    const double target_forget_acc = model::accuracy(models.original, splits.forget);
    const double sigma_plus = models.unlearn_plus.certificate.sigma;
    const double sigma_minus = models.unlearn_minus.certificate.sigma;

    EvaluationResult result;
    result.fs1_plus = forget_score(models.unlearn_plus.theta_pre_noise, models.retrained,
                                   sigma_plus, splits.forget, cfg.fs,
                                   derive_seed(cfg.seed, "fs1_plus"));
    result.fs1_minus = forget_score(models.unlearn_minus.theta_pre_noise, models.retrained,
                                    sigma_minus, splits.forget, cfg.fs,
                                    derive_seed(cfg.seed, "fs1_minus"));
    result.fs2_minus = forget_score(models.unlearn_minus.theta_pre_noise, models.retrained,
                                    sigma_plus, splits.forget, cfg.fs,
                                    derive_seed(cfg.seed, "fs2_minus"));

    const auto report_for = [&](const model::ModelParams& theta, double fs,
                                std::uint64_t mia_seed) {
        MetricsReport r;
        r.acc_train = model::accuracy(theta, splits.train);
        r.acc_test = model::accuracy(theta, splits.test);
        r.acc_retain = model::accuracy(theta, splits.retain);
        r.acc_forget = model::accuracy(theta, splits.forget);
        MiaConfig mia_cfg = cfg.mia;
        mia_cfg.balance_seed = mia_seed;
        r.mia = mia_score(theta, splits.forget, splits.test, mia_cfg, cfg.constants);
        r.relearn = relearn_time(theta, splits.train, splits.forget, target_forget_acc,
                                 cfg.constants, cfg.relearn);
        r.forget_score = fs;
        return r;
    };

    MetricsReport original =
        report_for(models.original,
                   forget_score(models.original, models.retrained, sigma_plus, splits.forget,
                                cfg.fs, derive_seed(cfg.seed, "fs_original")),
                   derive_seed(cfg.seed, "mia_original"));
    MetricsReport retrain_rep =
        report_for(models.retrained,
                   forget_score(models.retrained, models.retrained, sigma_plus, splits.forget,
                                cfg.fs, derive_seed(cfg.seed, "fs_retrain_null")),
                   derive_seed(cfg.seed, "mia_retrain"));
    MetricsReport plus = report_for(models.unlearn_plus.theta_released, result.fs1_plus,
                                    derive_seed(cfg.seed, "mia_plus"));
    MetricsReport minus = report_for(models.unlearn_minus.theta_released, result.fs1_minus,
                                     derive_seed(cfg.seed, "mia_minus"));

    const auto add_pre_noise = [&](MetricsReport& r, const model::ModelParams& pre) {
        r.has_pre_noise = true;
        r.acc_train_pre = model::accuracy(pre, splits.train);
        r.acc_test_pre = model::accuracy(pre, splits.test);
        r.acc_retain_pre = model::accuracy(pre, splits.retain);
        r.acc_forget_pre = model::accuracy(pre, splits.forget);
    };
    add_pre_noise(plus, models.unlearn_plus.theta_pre_noise);
    add_pre_noise(minus, models.unlearn_minus.theta_pre_noise);

    result.reports = {{"original", original},
                      {"retrain", retrain_rep},
                      {"unlearn_plus", plus},
                      {"unlearn_minus", minus}};
    return result;
}

std::string metrics_csv(const std::vector<NamedReport>& reports) {
    std::string out = "model,acc_train,acc_test,acc_retain,acc_forget,mia,rt,fs\n";
    char buf[64];
    const auto put = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.6g", v);
        out += buf;
    };
    for (const auto& [name, r] : reports) {
        out += name;
        out.push_back(',');
        put(r.acc_train); out.push_back(',');
        put(r.acc_test); out.push_back(',');
        put(r.acc_retain); out.push_back(',');
        put(r.acc_forget); out.push_back(',');
        put(r.mia); out.push_back(',');
        out += std::to_string(r.relearn.iterations);
        out.push_back(',');
        put(r.forget_score);
        out.push_back('\n');
    }
    return out;
}

}  // namespace certul::eval

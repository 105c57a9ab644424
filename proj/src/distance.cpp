#include "certul/distance.hpp"

#include <cmath>

#include "certul/rng.hpp"

namespace certul::distance {

namespace {

// log of the mean of exp(t), max-shifted.
double log_mean_exp(const Eigen::VectorXd& t) {
    const double tmax = t.maxCoeff();
    return tmax + std::log((t.array() - tmax).exp().mean());
}

struct Activations {
    Eigen::MatrixXd xs;      // standardized inputs
    Eigen::MatrixXd a1, z1;  // pre/post ReLU, layer 1
    Eigen::MatrixXd a2, z2;  // pre/post ReLU, layer 2
    Eigen::VectorXd t;       // critic scores
};

Activations forward_batch(const DvNet& net, const Eigen::MatrixXd& x) {
    Activations act;
    act.xs = (x.rowwise() - net.input_mean.transpose()).array().rowwise() /
             net.input_scale.transpose().array();
    act.a1 = (act.xs * net.w1.transpose()).rowwise() + net.b1.transpose();
    act.z1 = act.a1.cwiseMax(0.0);
    act.a2 = (act.z1 * net.w2.transpose()).rowwise() + net.b2.transpose();
    act.z2 = act.a2.cwiseMax(0.0);
    act.t = (act.z2 * net.w3.transpose()).col(0).array() + net.b3;
    return act;
}

struct Grads {
    Eigen::MatrixXd w1, w2;
    Eigen::RowVectorXd w3;
    Eigen::VectorXd b1, b2;
    double b3 = 0.0;

    static Grads zeros(const DvNet& net) {
        Grads g;
        g.w1 = Eigen::MatrixXd::Zero(net.w1.rows(), net.w1.cols());
        g.w2 = Eigen::MatrixXd::Zero(net.w2.rows(), net.w2.cols());
        g.w3 = Eigen::RowVectorXd::Zero(net.w3.cols());
        g.b1 = Eigen::VectorXd::Zero(net.b1.size());
        g.b2 = Eigen::VectorXd::Zero(net.b2.size());
        return g;
    }
};

// Accumulates d(objective)/d(params) given d(objective)/d(scores).
void backward_batch(const DvNet& net, const Activations& act, const Eigen::VectorXd& dt,
                    Grads& g) {
    g.w3 += dt.transpose() * act.z2;
    g.b3 += dt.sum();
    Eigen::MatrixXd dz2 = dt * net.w3;
    dz2.array() *= (act.a2.array() > 0.0).cast<double>();
    g.w2 += dz2.transpose() * act.z1;
    g.b2 += dz2.colwise().sum().transpose();
    Eigen::MatrixXd dz1 = dz2 * net.w2;
    dz1.array() *= (act.a1.array() > 0.0).cast<double>();
    g.w1 += dz1.transpose() * act.xs;
    g.b1 += dz1.colwise().sum().transpose();
}

struct AdamState {
    Grads m, v;
    int step = 0;
};

template <typename Mat>
void adam_ascend(Mat& param, const Mat& grad, Mat& m, Mat& v, const DvNetConfig& cfg,
                 double bc1, double bc2) {
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grad;
    v = cfg.adam_beta2 * v.array().matrix() +
        (1.0 - cfg.adam_beta2) * grad.array().square().matrix();
    param.array() += cfg.learning_rate * (m.array() / bc1) /
                     ((v.array() / bc2).sqrt() + cfg.adam_eps);
}

}  // namespace

Eigen::VectorXd DvNet::forward(const Eigen::MatrixXd& x) const {
    if (x.cols() != w1.cols()) throw ValidationError("dv net: input dimension mismatch");
    return forward_batch(*this, x).t;
}

double dv_objective(const DvNet& net, const Eigen::MatrixXd& samples_q,
                    const Eigen::MatrixXd& samples_p) {
    return net.forward(samples_q).mean() - log_mean_exp(net.forward(samples_p));
}

DvGrads dv_objective_gradients(const DvNet& net, const Eigen::MatrixXd& samples_q,
                               const Eigen::MatrixXd& samples_p) {
    const Activations act_q = forward_batch(net, samples_q);
    const Activations act_p = forward_batch(net, samples_p);
    const Eigen::VectorXd dt_q = Eigen::VectorXd::Constant(
        act_q.t.size(), 1.0 / static_cast<double>(act_q.t.size()));
    const double tmax = act_p.t.maxCoeff();
    Eigen::VectorXd dt_p = (act_p.t.array() - tmax).exp();
    dt_p *= -1.0 / dt_p.sum();

    Grads g = Grads::zeros(net);
    backward_batch(net, act_q, dt_q, g);
    backward_batch(net, act_p, dt_p, g);
    return {std::move(g.w1), std::move(g.w2), std::move(g.w3),
            std::move(g.b1), std::move(g.b2), g.b3};
}

std::pair<DvNet, double> dv_train(const Eigen::MatrixXd& samples_q,
                                  const Eigen::MatrixXd& samples_p, const DvNetConfig& cfg) {
    cfg.validate();
    if (samples_q.rows() == 0 || samples_p.rows() == 0)
        throw ValidationError("dv_train: both sample sets must be nonempty");
    if (samples_q.cols() != samples_p.cols())
        throw ValidationError("dv_train: sample dimensions differ");

    const Eigen::Index d = samples_q.cols();
    DvNet net;

    // Standardize with pooled statistics; constant features keep unit scale.
    Eigen::MatrixXd pooled(samples_q.rows() + samples_p.rows(), d);
    pooled << samples_q, samples_p;
    net.input_mean = pooled.colwise().mean().transpose();
    Eigen::VectorXd var = (pooled.rowwise() - net.input_mean.transpose())
                              .array()
                              .square()
                              .colwise()
                              .mean()
                              .transpose();
    net.input_scale = var.array().sqrt().max(1e-12).matrix();

    Rng rng(cfg.seed);
    const auto init = [&rng](Eigen::Index rows, Eigen::Index cols, double stddev) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = stddev * rng.normal();
        return m;
    };
    net.w1 = init(cfg.hidden1, d, std::sqrt(2.0 / static_cast<double>(d)));
    net.b1 = Eigen::VectorXd::Zero(cfg.hidden1);
    net.w2 = init(cfg.hidden2, cfg.hidden1, std::sqrt(2.0 / static_cast<double>(cfg.hidden1)));
    net.b2 = Eigen::VectorXd::Zero(cfg.hidden2);
    net.w3 = init(1, cfg.hidden2, std::sqrt(1.0 / static_cast<double>(cfg.hidden2)));
    net.b3 = 0.0;

    AdamState adam;
    adam.m = Grads::zeros(net);
    adam.v = Grads::zeros(net);
    Eigen::MatrixXd m_b3 = Eigen::MatrixXd::Zero(1, 1), v_b3 = Eigen::MatrixXd::Zero(1, 1);

    // A k-sample Monte-Carlo estimate of the reference expectation cannot
    // support more than ln k nats; anything above is critic runaway on
    // (near-)disjoint supports, so the readout is capped there.
    const double mc_ceiling = std::log(static_cast<double>(samples_p.rows()));
    const int tail = std::max(1, cfg.epochs / 10);
    double tail_sum = 0.0;
    int tail_count = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const Activations act_q = forward_batch(net, samples_q);
        const Activations act_p = forward_batch(net, samples_p);

        const double lme = log_mean_exp(act_p.t);
        const double objective = act_q.t.mean() - lme;
        if (!std::isfinite(objective))
            throw ValidationError("dv_train: objective became non-finite at epoch " +
                                  std::to_string(epoch));

        // d(objective)/dT is 1/n_q on Q rows and -softmax(T) on P rows.
        const Eigen::VectorXd dt_q = Eigen::VectorXd::Constant(
            act_q.t.size(), 1.0 / static_cast<double>(act_q.t.size()));
        const double tmax = act_p.t.maxCoeff();
        Eigen::VectorXd dt_p = (act_p.t.array() - tmax).exp();
        dt_p *= -1.0 / dt_p.sum();

        Grads g = Grads::zeros(net);
        backward_batch(net, act_q, dt_q, g);
        backward_batch(net, act_p, dt_p, g);

        adam.step += 1;
        const double bc1 = 1.0 - std::pow(cfg.adam_beta1, adam.step);
        const double bc2 = 1.0 - std::pow(cfg.adam_beta2, adam.step);
        adam_ascend(net.w1, g.w1, adam.m.w1, adam.v.w1, cfg, bc1, bc2);
        adam_ascend(net.w2, g.w2, adam.m.w2, adam.v.w2, cfg, bc1, bc2);
        adam_ascend(net.w3, g.w3, adam.m.w3, adam.v.w3, cfg, bc1, bc2);
        adam_ascend(net.b1, g.b1, adam.m.b1, adam.v.b1, cfg, bc1, bc2);
        adam_ascend(net.b2, g.b2, adam.m.b2, adam.v.b2, cfg, bc1, bc2);
        Eigen::MatrixXd b3_param(1, 1), b3_grad(1, 1);
        b3_param(0, 0) = net.b3;
        b3_grad(0, 0) = g.b3;
        adam_ascend(b3_param, b3_grad, m_b3, v_b3, cfg, bc1, bc2);
        net.b3 = b3_param(0, 0);

        if (epoch >= cfg.epochs - tail) {
            tail_sum += objective;
            ++tail_count;
        }
    }

    const double estimate =
        std::min(mc_ceiling, std::max(0.0, tail_sum / static_cast<double>(tail_count)));
    return {std::move(net), estimate};
}

double tv_discrete(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
    if (p.size() != q.size()) throw ValidationError("tv_discrete: length mismatch");
    const auto check = [](const Eigen::VectorXd& v, const char* name) {
        if (v.minCoeff() < -1e-12 || std::abs(v.sum() - 1.0) > 1e-9)
            throw ValidationError(std::string("tv_discrete: ") + name +
                                  " is not a probability simplex");
    };
    check(p, "p");
    check(q, "q");
    return 0.5 * (p - q).cwiseAbs().sum();
}

double bh_tv_bound(double kl) {
    if (kl < 0.0) throw ValidationError("bh_tv_bound: kl must be >= 0");
    return std::sqrt(1.0 - std::exp(-kl));
}

double gaussian_kl(const Eigen::MatrixXd& cov_q, const Eigen::MatrixXd& cov_p) {
    if (cov_q.rows() != cov_q.cols() || cov_p.rows() != cov_p.cols() ||
        cov_q.rows() != cov_p.rows())
        throw ValidationError("gaussian_kl: covariance shapes mismatch");
    const Eigen::Index d = cov_q.rows();
    const Eigen::LLT<Eigen::MatrixXd> llt_p(cov_p);
    const Eigen::LLT<Eigen::MatrixXd> llt_q(cov_q);
    if (llt_p.info() != Eigen::Success || llt_q.info() != Eigen::Success)
        throw ValidationError("gaussian_kl: covariance is not positive definite");

    const double trace_term = llt_p.solve(cov_q).trace();
    const auto log_det = [](const Eigen::LLT<Eigen::MatrixXd>& llt) {
        return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    };
    return 0.5 * (trace_term - static_cast<double>(d) + log_det(llt_p) - log_det(llt_q));
}

double conditional_kl_term(const model::ModelParams& theta_surrogate,
                           const model::ModelParams& theta_source,
                           const data::Dataset& surrogate) {
    surrogate.validate();
    if (theta_surrogate.dim() != theta_source.dim() ||
        theta_surrogate.classes() != theta_source.classes())
        throw ValidationError("conditional_kl_term: the two models disagree on (C, d)");

    // log f(x)_y = z_y - logsumexp(z); the per-sample losses are exactly the
    // negatives of those, so the mean log-ratio is loss(source) - loss(surrogate)
    // up to the clamp. Keep the clamped form explicit.
    constexpr double kProbFloor = 1e-12;
    const Eigen::MatrixXd zs = model::logits(theta_surrogate, surrogate.features);
    const Eigen::MatrixXd z0 = model::logits(theta_source, surrogate.features);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < surrogate.rows(); ++i) {
        const int y = surrogate.labels[static_cast<std::size_t>(i)];
        const auto prob = [&](const Eigen::MatrixXd& z) {
            const double zmax = z.row(i).maxCoeff();
            const double denom = (z.row(i).array() - zmax).exp().sum();
            return std::max(kProbFloor, std::exp(z(i, y) - zmax) / denom);
        };
        sum += std::log(prob(zs)) - std::log(prob(z0));
    }
    return sum / static_cast<double>(surrogate.rows());
}

KlEstimate kl_total(const model::ModelParams& theta_source,
                    const model::ModelParams& theta_surrogate, const data::Dataset& surrogate,
                    const Eigen::MatrixXd& sampled_source, const DvNetConfig& cfg) {
    if (sampled_source.rows() == 0)
        throw ValidationError("kl_total: sampled source matrix is empty");
    if (sampled_source.cols() != surrogate.dim())
        throw ValidationError("kl_total: sampled source dimension mismatch");

    KlEstimate est;
    est.method = KlMethod::DvSampled;
    est.conditional_term = conditional_kl_term(theta_surrogate, theta_source, surrogate);
    est.marginal_term = dv_train(surrogate.features, sampled_source, cfg).second;
    est.total = std::max(0.0, est.conditional_term + est.marginal_term);
    return est;
}

}  // namespace certul::distance

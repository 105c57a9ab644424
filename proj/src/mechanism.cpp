#include "certul/mechanism.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "certul/rng.hpp"

namespace certul::unlearn {

const char* to_string(BoundKind k) {
    switch (k) {
        case BoundKind::ExactData: return "exact_data";
        case BoundKind::SurrogateTv: return "surrogate_tv";
        case BoundKind::SurrogateKl: return "surrogate_kl";
    }
    return "unknown";
}

Eigen::MatrixXd estimate_retain_hessian(const Eigen::MatrixXd& h_surrogate,
                                        const Eigen::MatrixXd& h_forget, Eigen::Index n,
                                        Eigen::Index m) {
    if (m <= 0 || m >= n)
        throw ValidationError("estimate_retain_hessian: need 0 < m < n");
    if (h_surrogate.rows() != h_forget.rows() || h_surrogate.cols() != h_forget.cols() ||
        h_surrogate.rows() != h_surrogate.cols())
        throw ValidationError("estimate_retain_hessian: Hessian shape mismatch");
    const double dn = static_cast<double>(n), dm = static_cast<double>(m);
    Eigen::MatrixXd h = (dn * h_surrogate - dm * h_forget) / (dn - dm);
    h = ((h + h.transpose()) * 0.5).eval();
    return h;
}

Eigen::VectorXd retain_gradient(const Eigen::VectorXd& g_forget, Eigen::Index n,
                                Eigen::Index m) {
    if (m <= 0 || m >= n) throw ValidationError("retain_gradient: need 0 < m < n");
    return (-static_cast<double>(m) / static_cast<double>(n - m)) * g_forget;
}

model::ModelParams newton_unlearn(const model::ModelParams& theta, const Eigen::MatrixXd& h,
                                  const Eigen::VectorXd& g_forget, Eigen::Index n,
                                  Eigen::Index m, double jitter) {
    if (m <= 0 || m >= n) throw ValidationError("newton_unlearn: need 0 < m < n");
    if (h.rows() != theta.flat_size() || g_forget.size() != theta.flat_size())
        throw ValidationError("newton_unlearn: dimension mismatch");

    Eigen::MatrixXd h_solve = h;
    if (jitter > 0.0) h_solve.diagonal().array() += jitter;
    const Eigen::LLT<Eigen::MatrixXd> llt(h_solve);
    if (llt.info() != Eigen::Success)
        throw CertificationError(
            "estimated retain Hessian is not positive definite; a larger surrogate or a "
            "diagonal jitter is required before the update can be certified");

    const double scale = static_cast<double>(m) / static_cast<double>(n - m);
    const Eigen::VectorXd update = scale * llt.solve(g_forget);
    return model::ModelParams::unflatten(theta.flatten() + update, theta.classes(), theta.dim());
}

double bound_exact(const model::LossConstants& k, Eigen::Index n, Eigen::Index m) {
    k.validate();
    if (n <= 0 || m < 0 || m >= n) throw ValidationError("bound_exact: need 0 <= m < n");
    const double dn = static_cast<double>(n), dm = static_cast<double>(m);
    return 2.0 * k.gamma * k.lipschitz * dm * dm / (std::pow(k.alpha, 3) * dn * dn);
}

double bound_surrogate(const model::LossConstants& k, Eigen::Index n1, Eigen::Index n2,
                       Eigen::Index m, double tv, double grad_norm_forget) {
    k.validate();
    if (m <= 0 || m >= n1 || m >= n2)
        throw ValidationError("bound_surrogate: need 0 < m < n1 and m < n2");
    if (tv < 0.0 || tv > 1.0) throw ValidationError("bound_surrogate: tv must lie in [0, 1]");
    if (grad_norm_forget < 0.0)
        throw ValidationError("bound_surrogate: gradient norm must be >= 0");

    const double dn1 = static_cast<double>(n1), dn2 = static_cast<double>(n2);
    const double dm = static_cast<double>(m);
    const double min_n = dm * k.beta / k.alpha;
    if (dn1 < min_n || dn2 < min_n)
        throw CertificationError(
            "sample-size precondition n1, n2 >= m*beta/alpha fails: need at least " +
            std::to_string(min_n) + " samples, got n1 = " + std::to_string(n1) +
            ", n2 = " + std::to_string(n2));

    const double first = 2.0 * k.gamma * k.lipschitz * dm * dm / (std::pow(k.alpha, 3) * dn1 * dn1);
    // |n1 - n2|: the derivation assumes n1 >= n2 without loss of generality.
    const double numer = dm * std::abs(dn1 - dn2) * k.beta + 2.0 * dm * dn2 * k.beta * tv;
    const double denom = (dn1 * k.alpha - dm * k.beta) * (dn2 * k.alpha - dm * k.beta);
    return first + grad_norm_forget * numer / denom;
}

double bound_surrogate_kl(const model::LossConstants& k, Eigen::Index n1, Eigen::Index n2,
                          Eigen::Index m, double kl, double grad_norm_forget) {
    if (kl < 0.0) throw ValidationError("bound_surrogate_kl: kl must be >= 0");
    const double tv = std::sqrt(1.0 - std::exp(-kl));
    return bound_surrogate(k, n1, n2, m, tv, grad_norm_forget);
}

double calibrate_sigma(double delta_bound, const CertBudget& budget) {
    budget.validate();
    if (delta_bound < 0.0) throw ValidationError("calibrate_sigma: bound must be >= 0");
    return delta_bound / budget.epsilon * std::sqrt(2.0 * std::log(1.25 / budget.delta));
}

model::ModelParams gaussian_mechanism(const model::ModelParams& theta, double sigma,
                                      std::uint64_t seed) {
    if (sigma < 0.0) throw ValidationError("gaussian_mechanism: sigma must be >= 0");
    if (sigma == 0.0) return theta;
    Rng rng(seed);
    Eigen::VectorXd flat = theta.flatten();
    for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] += sigma * rng.normal();
    return model::ModelParams::unflatten(flat, theta.classes(), theta.dim());
}

UnlearnOutput unlearn_surrogate(const model::ModelParams& theta, const data::Dataset& surrogate,
                                const data::Dataset& forget, Eigen::Index n,
                                const model::LossConstants& k, const CertBudget& budget,
                                const DistanceInput& dist, std::uint64_t noise_seed,
                                double jitter) {
    surrogate.validate();
    forget.validate();
    budget.validate();
    const Eigen::Index n2 = surrogate.rows();
    const Eigen::Index m = forget.rows();
    if (m >= n) throw ValidationError("unlearn_surrogate: forget set must be smaller than n");

    const Eigen::MatrixXd h_s = model::hessian(surrogate, theta, k);
    const Eigen::MatrixXd h_u = model::hessian(forget, theta, k);
    const Eigen::VectorXd g_u = model::gradient(forget, theta, k);

    // The certified bound is derived for the combination weighted by the
    // surrogate's own sample count, so n2 (not n) enters the Hessian estimate
    // and the update scale. The two coincide when |D_s| = n.
    const Eigen::MatrixXd h_hat = estimate_retain_hessian(h_s, h_u, n2, m);
    model::ModelParams pre = newton_unlearn(theta, h_hat, g_u, n2, m, jitter);

    const double grad_norm = g_u.norm();
    UnlearnCertificate cert;
    cert.budget = budget;
    cert.n1 = n;
    cert.n2 = n2;
    cert.m = m;
    cert.grad_norm_forget = grad_norm;
    cert.constants = k;
    cert.noise_seed = noise_seed;
    if (dist.kind == DistanceInput::Kind::Tv) {
        cert.bound_kind = BoundKind::SurrogateTv;
        cert.tv_used = dist.value;
        cert.delta_bound = bound_surrogate(k, n, n2, m, dist.value, grad_norm);
    } else {
        cert.bound_kind = BoundKind::SurrogateKl;
        cert.kl_used = dist.value;
        cert.tv_used = std::sqrt(1.0 - std::exp(-dist.value));
        cert.delta_bound = bound_surrogate_kl(k, n, n2, m, dist.value, grad_norm);
    }
    cert.kl_estimate = dist.estimate;
    cert.sigma = calibrate_sigma(cert.delta_bound, budget);

    UnlearnOutput out;
    out.theta_released = gaussian_mechanism(pre, cert.sigma, noise_seed);
    out.theta_pre_noise = std::move(pre);
    out.certificate = cert;
    return out;
}

UnlearnOutput unlearn_exact(const model::ModelParams& theta, const data::Dataset& retain,
                            const data::Dataset& forget, const model::LossConstants& k,
                            const CertBudget& budget, std::uint64_t noise_seed, double jitter) {
    retain.validate();
    forget.validate();
    budget.validate();
    const Eigen::Index m = forget.rows();
    const Eigen::Index n = retain.rows() + m;

    const Eigen::MatrixXd h_r = model::hessian(retain, theta, k);
    const Eigen::VectorXd g_u = model::gradient(forget, theta, k);
    model::ModelParams pre = newton_unlearn(theta, h_r, g_u, n, m, jitter);

    UnlearnCertificate cert;
    cert.bound_kind = BoundKind::ExactData;
    cert.budget = budget;
    cert.n1 = n;
    cert.n2 = n;
    cert.m = m;
    cert.grad_norm_forget = g_u.norm();
    cert.constants = k;
    cert.noise_seed = noise_seed;
    cert.tv_used = 0.0;
    cert.delta_bound = bound_exact(k, n, m);
    cert.sigma = calibrate_sigma(cert.delta_bound, budget);

    UnlearnOutput out;
    out.theta_released = gaussian_mechanism(pre, cert.sigma, noise_seed);
    out.theta_pre_noise = std::move(pre);
    out.certificate = cert;
    return out;
}

model::ModelParams retrain(const data::Dataset& retain, const model::LossConstants& k,
                           const model::TrainConfig& cfg) {
    return model::train(retain, k, cfg);
}

std::string certificate_to_json(const UnlearnCertificate& cert) {
    nlohmann::json j;
    j["bound_kind"] = to_string(cert.bound_kind);
    j["delta_bound"] = cert.delta_bound;
    j["sigma"] = cert.sigma;
    j["epsilon"] = cert.budget.epsilon;
    j["delta"] = cert.budget.delta;
    j["tv_used"] = cert.tv_used;
    if (cert.kl_used)
        j["kl_used"] = *cert.kl_used;
    else
        j["kl_used"] = nullptr;
    if (cert.kl_estimate) {
        const char* method = cert.kl_estimate->method == distance::KlMethod::OracleGaussian
                                 ? "oracle_gaussian"
                                 : cert.kl_estimate->method == distance::KlMethod::DvSampled
                                       ? "dv_sampled"
                                       : "fixed";
        j["kl_estimate"] = {{"conditional_term", cert.kl_estimate->conditional_term},
                            {"marginal_term", cert.kl_estimate->marginal_term},
                            {"total", cert.kl_estimate->total},
                            {"method", method}};
    }
    j["n1"] = cert.n1;
    j["n2"] = cert.n2;
    j["m"] = cert.m;
    j["grad_norm_Du"] = cert.grad_norm_forget;
    j["constants"] = {{"lambda", cert.constants.lambda}, {"alpha", cert.constants.alpha},
                      {"beta", cert.constants.beta},     {"gamma", cert.constants.gamma},
                      {"L", cert.constants.lipschitz}};
    j["noise_seed"] = cert.noise_seed;
    return j.dump(2);
}

UnlearnCertificate certificate_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ValidationError("certificate is not valid JSON");
    UnlearnCertificate cert;
    const std::string kind = j.at("bound_kind").get<std::string>();
    if (kind == "exact_data")
        cert.bound_kind = BoundKind::ExactData;
    else if (kind == "surrogate_tv")
        cert.bound_kind = BoundKind::SurrogateTv;
    else if (kind == "surrogate_kl")
        cert.bound_kind = BoundKind::SurrogateKl;
    else
        throw ValidationError("certificate: unknown bound_kind '" + kind + "'");
    cert.delta_bound = j.at("delta_bound").get<double>();
    cert.sigma = j.at("sigma").get<double>();
    cert.budget.epsilon = j.at("epsilon").get<double>();
    cert.budget.delta = j.at("delta").get<double>();
    cert.tv_used = j.at("tv_used").get<double>();
    if (j.contains("kl_used") && !j["kl_used"].is_null())
        cert.kl_used = j["kl_used"].get<double>();
    if (j.contains("kl_estimate") && !j["kl_estimate"].is_null()) {
        distance::KlEstimate est;
        const auto& e = j["kl_estimate"];
        est.conditional_term = e.at("conditional_term").get<double>();
        est.marginal_term = e.at("marginal_term").get<double>();
        est.total = e.at("total").get<double>();
        const std::string method = e.at("method").get<std::string>();
        est.method = method == "oracle_gaussian" ? distance::KlMethod::OracleGaussian
                     : method == "fixed"         ? distance::KlMethod::Fixed
                                                 : distance::KlMethod::DvSampled;
        cert.kl_estimate = est;
    }
    cert.n1 = j.at("n1").get<Eigen::Index>();
    cert.n2 = j.at("n2").get<Eigen::Index>();
    cert.m = j.at("m").get<Eigen::Index>();
    cert.grad_norm_forget = j.at("grad_norm_Du").get<double>();
    const auto& c = j.at("constants");
    cert.constants.lambda = c.at("lambda").get<double>();
    cert.constants.alpha = c.at("alpha").get<double>();
    cert.constants.beta = c.at("beta").get<double>();
    cert.constants.gamma = c.at("gamma").get<double>();
    cert.constants.lipschitz = c.at("L").get<double>();
    cert.noise_seed = j.at("noise_seed").get<std::uint64_t>();
    return cert;
}

void save_certificate(const UnlearnCertificate& cert, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write certificate: " + path);
    f << certificate_to_json(cert) << '\n';
}

UnlearnCertificate load_certificate(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open certificate: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return certificate_from_json(text);
}

}  // namespace certul::unlearn

#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "certul/distance.hpp"
#include "certul/model.hpp"

namespace certul::unlearn {

struct CertBudget {
    double epsilon = 5e3;
    double delta = 1.0;

    void validate() const {
        if (epsilon <= 0.0) throw ValidationError("epsilon must be > 0");
        if (delta <= 0.0 || delta > 1.0) throw ValidationError("delta must lie in (0, 1]");
    }
};

enum class BoundKind { ExactData, SurrogateTv, SurrogateKl };

const char* to_string(BoundKind k);

// Statistical-distance input for the surrogate bound: either a TV value, a KL
// value (converted through Bretagnolle-Huber), or a fixed TV override. When
// the value came out of the estimation pipeline, its decomposition rides
// along so the certificate can record the provenance.
struct DistanceInput {
    enum class Kind { Tv, Kl } kind = Kind::Kl;
    double value = 0.0;
    std::optional<distance::KlEstimate> estimate;
};

struct UnlearnCertificate {
    BoundKind bound_kind = BoundKind::ExactData;
    double delta_bound = 0.0;  // parameter-space L2 bound
    double sigma = 0.0;
    CertBudget budget;
    double tv_used = 0.0;
    std::optional<double> kl_used;
    std::optional<distance::KlEstimate> kl_estimate;  // decomposition, when estimated
    Eigen::Index n1 = 0;  // source sample count
    Eigen::Index n2 = 0;  // surrogate sample count (n1 for the exact mechanism)
    Eigen::Index m = 0;
    double grad_norm_forget = 0.0;
    model::LossConstants constants;
    std::uint64_t noise_seed = 0;
};

struct UnlearnOutput {
    model::ModelParams theta_pre_noise;
    model::ModelParams theta_released;
    UnlearnCertificate certificate;
};

// Retain-set Hessian estimate (n*H_Ds - m*H_Du) / (n - m). Symmetric by
// construction; positive definiteness is checked at solve time.
Eigen::MatrixXd estimate_retain_hessian(const Eigen::MatrixXd& h_surrogate,
                                        const Eigen::MatrixXd& h_forget, Eigen::Index n,
                                        Eigen::Index m);

// Retain-set gradient from forget-set gradient: -(m/(n-m)) * g_Du, valid at a
// stationary point of the full-data loss.
Eigen::VectorXd retain_gradient(const Eigen::VectorXd& g_forget, Eigen::Index n, Eigen::Index m);

// One-step Newton update theta* + (m/(n-m)) * H^-1 g_Du via SPD factorization
// with optional diagonal jitter. Throws CertificationError when H + jitter*I
// is not positive definite.
model::ModelParams newton_unlearn(const model::ModelParams& theta, const Eigen::MatrixXd& h,
                                  const Eigen::VectorXd& g_forget, Eigen::Index n,
                                  Eigen::Index m, double jitter = 0.0);

// Exact-data bound 2*gamma*L*m^2 / (alpha^3 * n^2).
double bound_exact(const model::LossConstants& k, Eigen::Index n, Eigen::Index m);

// Surrogate bound: 2*gamma*L*m^2/(alpha^3*n1^2)
//   + grad_norm * (m*|n1-n2|*beta + 2*m*n2*beta*tv)
//     / ((n1*alpha - m*beta) * (n2*alpha - m*beta)).
// Requires n1, n2 >= m*beta/alpha.
double bound_surrogate(const model::LossConstants& k, Eigen::Index n1, Eigen::Index n2,
                       Eigen::Index m, double tv, double grad_norm_forget);

// Same bound with TV replaced by sqrt(1 - exp(-kl)) (Bretagnolle-Huber).
double bound_surrogate_kl(const model::LossConstants& k, Eigen::Index n1, Eigen::Index n2,
                          Eigen::Index m, double kl, double grad_norm_forget);

// sigma = (delta_bound / epsilon) * sqrt(2 * ln(1.25 / delta)).
double calibrate_sigma(double delta_bound, const CertBudget& budget);

// Adds iid N(0, sigma^2) to every parameter; deterministic given the seed.
model::ModelParams gaussian_mechanism(const model::ModelParams& theta, double sigma,
                                      std::uint64_t seed);

// Unlearn(-): the full surrogate mechanism. n is the source dataset size; the
// surrogate's own size is read off the dataset. The certificate records every
// intermediate.
UnlearnOutput unlearn_surrogate(const model::ModelParams& theta, const data::Dataset& surrogate,
                                const data::Dataset& forget, Eigen::Index n,
                                const model::LossConstants& k, const CertBudget& budget,
                                const DistanceInput& dist, std::uint64_t noise_seed,
                                double jitter = 0.0);

// Unlearn(+): baseline with the true retain set; sigma from the exact-data bound.
UnlearnOutput unlearn_exact(const model::ModelParams& theta, const data::Dataset& retain,
                            const data::Dataset& forget, const model::LossConstants& k,
                            const CertBudget& budget, std::uint64_t noise_seed,
                            double jitter = 0.0);

// Retrain-from-scratch baseline; delegates to model::train on the retain set.
model::ModelParams retrain(const data::Dataset& retain, const model::LossConstants& k,
                           const model::TrainConfig& cfg = {});

std::string certificate_to_json(const UnlearnCertificate& cert);
UnlearnCertificate certificate_from_json(const std::string& text);
void save_certificate(const UnlearnCertificate& cert, const std::string& path);
UnlearnCertificate load_certificate(const std::string& path);

}  // namespace certul::unlearn

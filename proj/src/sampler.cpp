#include "certul/sampler.hpp"

#include <cmath>

#include "certul/rng.hpp"

namespace certul::sampler {

double energy(const EnergyModel& em, const Eigen::VectorXd& x) {
    if (x.size() != em.classifier.dim()) throw ValidationError("energy: dimension mismatch");
    const Eigen::VectorXd z = em.classifier.weights * x + em.classifier.bias;
    const double zmax = z.maxCoeff();
    return -(zmax + std::log((z.array() - zmax).exp().sum()));
}

Eigen::VectorXd energy_grad(const EnergyModel& em, const Eigen::VectorXd& x) {
    if (x.size() != em.classifier.dim())
        throw ValidationError("energy_grad: dimension mismatch");
    const Eigen::VectorXd z = em.classifier.weights * x + em.classifier.bias;
    const double zmax = z.maxCoeff();
    Eigen::ArrayXd e = (z.array() - zmax).exp();
    const Eigen::VectorXd probs = (e / e.sum()).matrix();
    return -em.classifier.weights.transpose() * probs;
}

Eigen::MatrixXd sgld_sample(const EnergyModel& em, const SgldConfig& cfg) {
    cfg.validate();
    const Eigen::Index d = em.classifier.dim();
    if (cfg.init_low.size() != d)
        throw ValidationError("sgld: init bounds dimension does not match the model");

    // Noise eps ~ N(0, mu) is read as variance mu, std sqrt(mu).
    const double half_step = 0.5 * cfg.step_size;
    const double noise_std = cfg.no_noise ? 0.0 : std::sqrt(cfg.step_size);

    Eigen::MatrixXd out(cfg.sample_count, d);
    for (Eigen::Index chain = 0; chain < cfg.sample_count; ++chain) {
        Rng rng(derive_seed(cfg.seed, "sgld_chain", static_cast<std::uint64_t>(chain)));
        Eigen::VectorXd x(d);
        for (Eigen::Index j = 0; j < d; ++j)
            x[j] = rng.uniform(cfg.init_low[j], cfg.init_high[j]);
        for (int step = 0; step < cfg.steps_per_sample; ++step) {
            x -= half_step * energy_grad(em, x);
            if (noise_std > 0.0)
                for (Eigen::Index j = 0; j < d; ++j) x[j] += noise_std * rng.normal();
            if (!x.allFinite())
                throw ValidationError("sgld: non-finite state in chain " +
                                      std::to_string(chain) + " at step " +
                                      std::to_string(step));
        }
        out.row(chain) = x.transpose();
    }
    return out;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> default_init_bounds(const data::Dataset& surrogate) {
    surrogate.validate();
    return {surrogate.features.colwise().minCoeff().transpose(),
            surrogate.features.colwise().maxCoeff().transpose()};
}

}  // namespace certul::sampler

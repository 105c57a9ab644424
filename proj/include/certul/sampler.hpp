#pragma once

#include <cstdint>

#include "certul/model.hpp"

namespace certul::sampler {

struct SgldConfig {
    double step_size = 0.02;
    int steps_per_sample = 4000;
    Eigen::Index sample_count = 1000;
    Eigen::VectorXd init_low, init_high;  // per-feature uniform init bounds
    std::uint64_t seed = 0;
    bool no_noise = false;  // diagnostic gradient flow; never used for certification

    void validate() const {
        if (step_size <= 0.0) throw ValidationError("sgld: step size must be > 0");
        if (steps_per_sample < 1) throw ValidationError("sgld: steps must be >= 1");
        if (sample_count < 1) throw ValidationError("sgld: sample count must be >= 1");
        if (init_low.size() != init_high.size() || init_low.size() == 0)
            throw ValidationError("sgld: init bounds missing or mismatched");
        if ((init_low.array() > init_high.array()).any())
            throw ValidationError("sgld: init_low must be <= init_high elementwise");
    }
};

// The classifier read as an implicit energy-based model exp(-E(x))/Z; the
// normalization constant never appears anywhere.
struct EnergyModel {
    model::ModelParams classifier;
};

// E(x) = -logsumexp over class logits, max-shifted.
double energy(const EnergyModel& em, const Eigen::VectorXd& x);

// dE/dx = -W^T softmax(Wx + b).
Eigen::VectorXd energy_grad(const EnergyModel& em, const Eigen::VectorXd& x);

// k independent chains, each initialized uniform(init_low, init_high) and
// advanced steps_per_sample iterations of
//   x <- x - (mu/2) dE/dx + N(0, mu I)
// (noise variance mu, std sqrt(mu)). Chains use per-chain seeds derived from
// the master seed so results do not depend on execution order.
Eigen::MatrixXd sgld_sample(const EnergyModel& em, const SgldConfig& cfg);

// Per-feature min/max of the surrogate features, the stand-in for "the input
// space" when the source data is not available.
std::pair<Eigen::VectorXd, Eigen::VectorXd> default_init_bounds(const data::Dataset& surrogate);

}  // namespace certul::sampler

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "certul/dataset.hpp"
#include "certul/distance.hpp"
#include "certul/mechanism.hpp"
#include "certul/metrics.hpp"
#include "certul/sampler.hpp"

namespace certul::experiment {

struct KlSpec {
    distance::KlMethod method = distance::KlMethod::DvSampled;
    double fixed_value = 0.0;
};

struct ExperimentConfig {
    enum class Kind { SyntheticZetaSweep, DirichletSweep, SingleRun };
    Kind kind = Kind::SingleRun;

    std::uint64_t master_seed = 42;
    int seeds = 1;  // replicate seeds per grid cell

    model::LossConstants constants;
    unlearn::CertBudget budget;
    KlSpec kl;
    model::TrainConfig train;

    // Synthetic cells.
    int dim = 50;
    Eigen::Index n_source = 15000;
    Eigen::Index n_surrogate = 15000;
    Eigen::Index n_test = 3000;
    double label_flip_prob = 0.15;
    std::vector<double> zeta_grid = {0.02, 0.04, 0.06, 0.08, 0.1};

    // Dirichlet cells on ingested embeddings.
    std::string dataset_path;
    std::vector<double> xi_grid = {13.0, 36.0, 100.0};
    double test_fraction = 0.2;

    data::ForgetSpec forget;
    sampler::SgldConfig sgld;  // init bounds are filled per cell from the surrogate
    distance::DvNetConfig dv;
    eval::MiaConfig mia;
    eval::RelearnConfig relearn;
    eval::ForgetScoreConfig fs;
};

// Parses the JSON experiment config. Unknown keys are errors.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

struct CellResult {
    double cell_value = 0.0;  // zeta or xi
    int seed_index = 0;
    bool ok = false;
    std::string error;
    std::string error_category;  // "validation" or "certification"

    double kl_conditional = 0.0, kl_marginal = 0.0, kl_total = 0.0, kl_oracle = 0.0;
    double tv_used = 0.0;
    double delta_minus = 0.0, sigma_minus = 0.0;
    double delta_plus = 0.0, sigma_plus = 0.0;
    eval::EvaluationResult evaluation;
};

// Runs one sweep cell end to end. When cell_dir is nonempty, models,
// certificates and the per-cell metrics CSV land there.
CellResult run_cell(const ExperimentConfig& cfg, double cell_value, int grid_index,
                    int seed_index, const std::string& cell_dir);

struct RunSummary {
    bool all_ok = true;
    std::vector<CellResult> cells;
};

// Runs the configured sweep, writes per-cell artifacts plus the aggregate
// CSVs, manifest.json and timings.json under out_dir.
RunSummary run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

// Shared fail-closed JSON helpers for the CLI surfaces.
void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const std::string& where);
model::LossConstants constants_from_json(const nlohmann::json& j);
unlearn::CertBudget budget_from_json(const nlohmann::json& j);
data::ForgetSpec forget_from_json(const nlohmann::json& j);
distance::DvNetConfig dv_from_json(const nlohmann::json& j);
sampler::SgldConfig sgld_from_json(const nlohmann::json& j);

}  // namespace certul::experiment

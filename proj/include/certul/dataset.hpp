#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "certul/common.hpp"

namespace certul::data {

// Feature matrix with integer class labels. The universe for source,
// surrogate, retain and forget splits.
struct Dataset {
    Eigen::MatrixXd features;  // n x d
    std::vector<int> labels;   // values in [0, class_count)
    int class_count = 0;

    Eigen::Index rows() const { return features.rows(); }
    Eigen::Index dim() const { return features.cols(); }

    // Throws ValidationError when the invariants are broken.
    void validate() const;

    Dataset subset(const std::vector<Eigen::Index>& idx) const;
};

struct SyntheticConfig {
    int dim = 50;
    Eigen::Index n_source = 15000;
    Eigen::Index n_surrogate = 15000;
    double zeta = 0.02;            // off-diagonal covariance of the surrogate
    std::uint64_t teacher_seed = 1;
    std::uint64_t data_seed = 2;
    double label_flip_prob = 0.15;
};

struct DirichletSplitConfig {
    double xi = 100.0;  // concentration; smaller means more skewed splits
    std::uint64_t seed = 0;
};

struct ForgetSpec {
    enum class Mode { RandomFraction, WholeClass };
    Mode mode = Mode::RandomFraction;
    double ratio = 0.1;  // RandomFraction only
    int class_id = 0;    // WholeClass only
    std::uint64_t seed = 0;
};

// Source features ~ N(0, I_d); surrogate features ~ N(0, (1-zeta)I + zeta*J).
// Labels from one shared random linear teacher, flipped independently with
// label_flip_prob, so both distributions share P(y|x).
std::pair<Dataset, Dataset> gen_synthetic(const SyntheticConfig& cfg);

// Per class c draws (p_src, p_sur) ~ Dirichlet(xi, xi) and routes each sample
// of class c to the source side with probability p_src. Retries (up to 100
// draws) when one side ends up empty.
std::pair<Dataset, Dataset> dirichlet_split(const Dataset& ds, const DirichletSplitConfig& cfg);

// Carves (retain, forget) out of the source dataset. The forget set is a
// nonempty strict subset; retain ++ forget is a permutation of the input.
std::pair<Dataset, Dataset> select_forget(const Dataset& source, const ForgetSpec& spec);
std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> select_forget_indices(
    const Dataset& source, const ForgetSpec& spec);

// CSV, one row per sample, features then the integer label. A JSON sidecar
// (path + ".meta.json") records n, d, C and the generation config when known.
Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& ds, const std::string& path,
                  const std::string& meta_extra_json = "");

// Feature-only CSV (no label column), used for sampled feature matrices.
Eigen::MatrixXd load_matrix_csv(const std::string& path);
void save_matrix_csv(const Eigen::MatrixXd& m, const std::string& path);

}  // namespace certul::data

#include "certul/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "certul/rng.hpp"

namespace certul::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
    if (!j.is_object()) throw ValidationError(where + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) { ok = true; break; }
        if (!ok) throw ValidationError(where + ": unknown key '" + key + "'");
    }
}

model::LossConstants constants_from_json(const json& j) {
    check_keys(j, {"lambda", "alpha", "beta", "gamma", "L"}, "constants");
    model::LossConstants k;
    k.lambda = j.value("lambda", k.lambda);
    k.alpha = j.value("alpha", k.alpha);
    k.beta = j.value("beta", k.beta);
    k.gamma = j.value("gamma", k.gamma);
    k.lipschitz = j.value("L", k.lipschitz);
    k.validate();
    return k;
}

unlearn::CertBudget budget_from_json(const json& j) {
    check_keys(j, {"epsilon", "delta"}, "budget");
    unlearn::CertBudget b;
    b.epsilon = j.value("epsilon", b.epsilon);
    b.delta = j.value("delta", b.delta);
    b.validate();
    return b;
}

data::ForgetSpec forget_from_json(const json& j) {
    check_keys(j, {"mode", "ratio", "class_id", "seed"}, "forget");
    data::ForgetSpec spec;
    const std::string mode = j.value("mode", std::string("random_fraction"));
    if (mode == "random_fraction")
        spec.mode = data::ForgetSpec::Mode::RandomFraction;
    else if (mode == "whole_class")
        spec.mode = data::ForgetSpec::Mode::WholeClass;
    else
        throw ValidationError("forget: unknown mode '" + mode + "'");
    spec.ratio = j.value("ratio", spec.ratio);
    spec.class_id = j.value("class_id", spec.class_id);
    spec.seed = j.value("seed", spec.seed);
    return spec;
}

distance::DvNetConfig dv_from_json(const json& j) {
    check_keys(j, {"hidden1", "hidden2", "epochs", "learning_rate", "seed"}, "dv");
    distance::DvNetConfig cfg;
    cfg.hidden1 = j.value("hidden1", cfg.hidden1);
    cfg.hidden2 = j.value("hidden2", cfg.hidden2);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.validate();
    return cfg;
}

sampler::SgldConfig sgld_from_json(const json& j) {
    check_keys(j, {"step_size", "steps_per_sample", "sample_count", "seed"}, "sgld");
    sampler::SgldConfig cfg;
    cfg.step_size = j.value("step_size", cfg.step_size);
    cfg.steps_per_sample = j.value("steps_per_sample", cfg.steps_per_sample);
    cfg.sample_count = j.value("sample_count", cfg.sample_count);
    cfg.seed = j.value("seed", cfg.seed);
    return cfg;
}

ExperimentConfig parse_experiment_config(const json& j) {
    check_keys(j,
               {"kind", "master_seed", "seeds", "constants", "budget", "kl", "train",
                "synthetic", "dirichlet", "forget", "sgld", "dv", "mia", "relearn",
                "forget_score"},
               "experiment");
    ExperimentConfig cfg;
    const std::string kind = j.value("kind", std::string("single_run"));
    if (kind == "synthetic_zeta_sweep")
        cfg.kind = ExperimentConfig::Kind::SyntheticZetaSweep;
    else if (kind == "dirichlet_sweep")
        cfg.kind = ExperimentConfig::Kind::DirichletSweep;
    else if (kind == "single_run")
        cfg.kind = ExperimentConfig::Kind::SingleRun;
    else
        throw ValidationError("experiment: unknown kind '" + kind + "'");

    cfg.master_seed = j.value("master_seed", cfg.master_seed);
    cfg.seeds = j.value("seeds", cfg.seeds);
    if (cfg.seeds < 1) throw ValidationError("experiment: seeds must be >= 1");

    if (j.contains("constants")) cfg.constants = constants_from_json(j["constants"]);
    if (j.contains("budget")) cfg.budget = budget_from_json(j["budget"]);
    if (j.contains("train")) {
        check_keys(j["train"], {"grad_tol", "max_newton_iters", "ridge_jitter"}, "train");
        cfg.train.grad_tol = j["train"].value("grad_tol", cfg.train.grad_tol);
        cfg.train.max_newton_iters =
            j["train"].value("max_newton_iters", cfg.train.max_newton_iters);
        cfg.train.ridge_jitter = j["train"].value("ridge_jitter", cfg.train.ridge_jitter);
    }
    if (j.contains("kl")) {
        check_keys(j["kl"], {"method", "fixed_value"}, "kl");
        const std::string method = j["kl"].value("method", std::string("dv"));
        if (method == "oracle")
            cfg.kl.method = distance::KlMethod::OracleGaussian;
        else if (method == "dv")
            cfg.kl.method = distance::KlMethod::DvSampled;
        else if (method == "fixed")
            cfg.kl.method = distance::KlMethod::Fixed;
        else
            throw ValidationError("kl: unknown method '" + method + "'");
        cfg.kl.fixed_value = j["kl"].value("fixed_value", 0.0);
        if (cfg.kl.fixed_value < 0.0) throw ValidationError("kl: fixed_value must be >= 0");
    }
    if (j.contains("synthetic")) {
        const auto& s = j["synthetic"];
        check_keys(s,
                   {"dim", "n_source", "n_surrogate", "n_test", "label_flip_prob",
                    "zeta_grid", "zeta"},
                   "synthetic");
        cfg.dim = s.value("dim", cfg.dim);
        cfg.n_source = s.value("n_source", cfg.n_source);
        cfg.n_surrogate = s.value("n_surrogate", cfg.n_surrogate);
        cfg.n_test = s.value("n_test", cfg.n_test);
        cfg.label_flip_prob = s.value("label_flip_prob", cfg.label_flip_prob);
        if (s.contains("zeta_grid")) cfg.zeta_grid = s["zeta_grid"].get<std::vector<double>>();
        if (s.contains("zeta")) cfg.zeta_grid = {s["zeta"].get<double>()};
        if (cfg.zeta_grid.empty()) throw ValidationError("synthetic: zeta grid is empty");
        if (cfg.dim < 1 || cfg.n_source < 2 || cfg.n_surrogate < 1 || cfg.n_test < 1)
            throw ValidationError("synthetic: sizes must be positive (dim, n_source, "
                                  "n_surrogate, n_test)");
    }
    if (j.contains("dirichlet")) {
        const auto& d = j["dirichlet"];
        check_keys(d, {"dataset", "xi_grid", "test_fraction"}, "dirichlet");
        cfg.dataset_path = d.value("dataset", std::string());
        if (d.contains("xi_grid")) cfg.xi_grid = d["xi_grid"].get<std::vector<double>>();
        cfg.test_fraction = d.value("test_fraction", cfg.test_fraction);
        if (cfg.test_fraction <= 0.0 || cfg.test_fraction >= 1.0)
            throw ValidationError("dirichlet: test_fraction must lie in (0, 1)");
    }
    if (cfg.kind == ExperimentConfig::Kind::DirichletSweep && cfg.dataset_path.empty())
        throw ValidationError("dirichlet_sweep requires dirichlet.dataset");
    if (j.contains("forget")) cfg.forget = forget_from_json(j["forget"]);
    if (j.contains("sgld")) cfg.sgld = sgld_from_json(j["sgld"]);
    if (j.contains("dv")) cfg.dv = dv_from_json(j["dv"]);
    if (j.contains("mia")) {
        check_keys(j["mia"], {"folds"}, "mia");
        cfg.mia.folds = j["mia"].value("folds", cfg.mia.folds);
        cfg.mia.validate();
    }
    if (j.contains("relearn")) {
        check_keys(j["relearn"], {"learning_rate", "cap"}, "relearn");
        cfg.relearn.learning_rate = j["relearn"].value("learning_rate", cfg.relearn.learning_rate);
        cfg.relearn.cap = j["relearn"].value("cap", cfg.relearn.cap);
    }
    if (j.contains("forget_score")) {
        check_keys(j["forget_score"], {"draws_per_side", "threshold_grid_size"}, "forget_score");
        cfg.fs.draws_per_side = j["forget_score"].value("draws_per_side", cfg.fs.draws_per_side);
        cfg.fs.threshold_grid_size =
            j["forget_score"].value("threshold_grid_size", cfg.fs.threshold_grid_size);
        cfg.fs.validate();
    }
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open config file: " + path);
    json j = json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ValidationError("config file is not valid JSON: " + path);
    return parse_experiment_config(j);
}

namespace {

struct CellData {
    data::Dataset source, surrogate, test, retain, forget;
};

// Splits a loaded embedding dataset into held-out test plus source/surrogate.
CellData build_dirichlet_cell(const ExperimentConfig& cfg, double xi, std::uint64_t seed) {
    data::Dataset all = data::load_dataset(cfg.dataset_path);
    Rng rng(derive_seed(seed, "test_holdout"));
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(all.rows()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    for (Eigen::Index i = all.rows() - 1; i > 0; --i) {
        const auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    const auto n_test = static_cast<Eigen::Index>(cfg.test_fraction *
                                                  static_cast<double>(all.rows()));
    if (n_test < 1 || n_test >= all.rows())
        throw ValidationError("dirichlet: test_fraction leaves an empty split");
    const std::vector<Eigen::Index> test_idx(idx.begin(), idx.begin() + n_test);
    const std::vector<Eigen::Index> rest_idx(idx.begin() + n_test, idx.end());

    CellData cell;
    cell.test = all.subset(test_idx);
    data::Dataset rest = all.subset(rest_idx);
    data::DirichletSplitConfig split_cfg;
    split_cfg.xi = xi;
    split_cfg.seed = derive_seed(seed, "dirichlet_split");
    std::tie(cell.source, cell.surrogate) = data::dirichlet_split(rest, split_cfg);
    return cell;
}

CellData build_synthetic_cell(const ExperimentConfig& cfg, double zeta, std::uint64_t seed) {
    data::SyntheticConfig gen;
    gen.dim = cfg.dim;
    gen.n_source = cfg.n_source + cfg.n_test;  // test tail drawn from the source law
    gen.n_surrogate = cfg.n_surrogate;
    gen.zeta = zeta;
    gen.teacher_seed = derive_seed(seed, "teacher");
    gen.data_seed = derive_seed(seed, "data");
    gen.label_flip_prob = cfg.label_flip_prob;

    auto [source_plus_test, surrogate] = data::gen_synthetic(gen);
    CellData cell;
    std::vector<Eigen::Index> src_idx(static_cast<std::size_t>(cfg.n_source));
    std::iota(src_idx.begin(), src_idx.end(), Eigen::Index{0});
    std::vector<Eigen::Index> test_idx(static_cast<std::size_t>(cfg.n_test));
    std::iota(test_idx.begin(), test_idx.end(), cfg.n_source);
    cell.source = source_plus_test.subset(src_idx);
    cell.test = source_plus_test.subset(test_idx);
    cell.surrogate = std::move(surrogate);
    return cell;
}

Eigen::MatrixXd synthetic_covariance(int dim, double zeta) {
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Constant(dim, dim, zeta);
    sigma.diagonal().setOnes();
    return sigma;
}

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace

CellResult run_cell(const ExperimentConfig& cfg, double cell_value, int grid_index,
                    int seed_index, const std::string& cell_dir) {
    CellResult result;
    result.cell_value = cell_value;
    result.seed_index = seed_index;

    // Cells in one seed replicate share the data realization across the grid,
    // so sweeping the grid value is a paired comparison.
    (void)grid_index;
    const std::uint64_t cell_seed =
        derive_seed(cfg.master_seed, "cell", static_cast<std::uint64_t>(seed_index));

    try {
        const bool synthetic = cfg.kind != ExperimentConfig::Kind::DirichletSweep;
        CellData cell = synthetic ? build_synthetic_cell(cfg, cell_value, cell_seed)
                                  : build_dirichlet_cell(cfg, cell_value, cell_seed);

        data::ForgetSpec forget_spec = cfg.forget;
        forget_spec.seed = derive_seed(cell_seed, "forget");
        std::tie(cell.retain, cell.forget) = data::select_forget(cell.source, forget_spec);

        const model::ModelParams theta = model::train(cell.source, cfg.constants, cfg.train);
        const model::ModelParams theta_r = unlearn::retrain(cell.retain, cfg.constants, cfg.train);
        const model::ModelParams theta_s = model::train(cell.surrogate, cfg.constants, cfg.train);

        // KL between surrogate and source, by the configured route. The
        // Gaussian closed form (synthetic) or a data-access DV reference
        // (real data) is always recorded for comparison.
        double oracle_conditional = 0.0, oracle_marginal = 0.0;
        if (synthetic) {
            result.kl_oracle = distance::gaussian_kl(
                synthetic_covariance(cfg.dim, cell_value),
                Eigen::MatrixXd::Identity(cfg.dim, cfg.dim));
            oracle_marginal = result.kl_oracle;
        } else {
            distance::DvNetConfig ref = cfg.dv;
            ref.seed = derive_seed(cell_seed, "dv_reference");
            oracle_conditional = distance::conditional_kl_term(theta_s, theta, cell.surrogate);
            oracle_marginal =
                dv_train(cell.surrogate.features, cell.source.features, ref).second;
            result.kl_oracle = std::max(0.0, oracle_conditional + oracle_marginal);
        }

        distance::KlEstimate kl_est;
        switch (cfg.kl.method) {
            case distance::KlMethod::OracleGaussian:
                kl_est.method = distance::KlMethod::OracleGaussian;
                kl_est.conditional_term = oracle_conditional;
                kl_est.marginal_term = oracle_marginal;
                kl_est.total = result.kl_oracle;
                break;
            case distance::KlMethod::Fixed:
                kl_est.method = distance::KlMethod::Fixed;
                kl_est.marginal_term = cfg.kl.fixed_value;
                kl_est.total = cfg.kl.fixed_value;
                break;
            case distance::KlMethod::DvSampled: {
                sampler::SgldConfig sgld_cfg = cfg.sgld;
                std::tie(sgld_cfg.init_low, sgld_cfg.init_high) =
                    sampler::default_init_bounds(cell.surrogate);
                sgld_cfg.seed = derive_seed(cell_seed, "sgld");
                const Eigen::MatrixXd sampled =
                    sampler::sgld_sample(sampler::EnergyModel{theta}, sgld_cfg);
                distance::DvNetConfig dv_cfg = cfg.dv;
                dv_cfg.seed = derive_seed(cell_seed, "dv");
                kl_est = distance::kl_total(theta, theta_s, cell.surrogate, sampled, dv_cfg);
                break;
            }
        }
        result.kl_conditional = kl_est.conditional_term;
        result.kl_marginal = kl_est.marginal_term;
        result.kl_total = kl_est.total;

        unlearn::UnlearnOutput plus =
            unlearn::unlearn_exact(theta, cell.retain, cell.forget, cfg.constants, cfg.budget,
                                   derive_seed(cell_seed, "noise_plus"));
        unlearn::UnlearnOutput minus = unlearn::unlearn_surrogate(
            theta, cell.surrogate, cell.forget, cell.source.rows(), cfg.constants, cfg.budget,
            {unlearn::DistanceInput::Kind::Kl, kl_est.total, kl_est},
            derive_seed(cell_seed, "noise_minus"));

        result.tv_used = minus.certificate.tv_used;
        result.delta_minus = minus.certificate.delta_bound;
        result.sigma_minus = minus.certificate.sigma;
        result.delta_plus = plus.certificate.delta_bound;
        result.sigma_plus = plus.certificate.sigma;

        eval::EvalConfig eval_cfg;
        eval_cfg.mia = cfg.mia;
        eval_cfg.relearn = cfg.relearn;
        eval_cfg.fs = cfg.fs;
        eval_cfg.constants = cfg.constants;
        eval_cfg.seed = derive_seed(cell_seed, "eval");

        eval::ModelSet models{theta, theta_r, plus, minus};
        eval::Splits splits{cell.source, cell.test, cell.retain, cell.forget};
        result.evaluation = eval::evaluate_all(models, splits, eval_cfg);

        if (!cell_dir.empty()) {
            fs::create_directories(cell_dir);
            model::save_model(theta, cfg.constants.lambda, cell_dir + "/original.json");
            model::save_model(theta_r, cfg.constants.lambda, cell_dir + "/retrain.json");
            model::save_model(plus.theta_released, cfg.constants.lambda,
                              cell_dir + "/unlearn_plus.json");
            unlearn::save_certificate(plus.certificate, cell_dir + "/unlearn_plus.cert.json");
            model::save_model(minus.theta_released, cfg.constants.lambda,
                              cell_dir + "/unlearn_minus.json");
            unlearn::save_certificate(minus.certificate, cell_dir + "/unlearn_minus.cert.json");
            std::ofstream mf(cell_dir + "/metrics.csv", std::ios::binary);
            mf << eval::metrics_csv(result.evaluation.reports);
        }
        result.ok = true;
    } catch (const CertificationError& e) {
        result.error = e.what();
        result.error_category = "certification";
    } catch (const ValidationError& e) {
        result.error = e.what();
        result.error_category = "validation";
    }
    return result;
}

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const bool synthetic = cfg.kind != ExperimentConfig::Kind::DirichletSweep;
    const std::string axis = synthetic ? "zeta" : "xi";
    std::vector<double> grid;
    if (cfg.kind == ExperimentConfig::Kind::SyntheticZetaSweep)
        grid = cfg.zeta_grid;
    else if (cfg.kind == ExperimentConfig::Kind::DirichletSweep)
        grid = cfg.xi_grid;
    else
        grid = {cfg.zeta_grid.front()};

    RunSummary summary;
    std::string sigma_csv = axis + ",seed,kl,tv,delta_minus,sigma_minus,delta_plus,sigma_plus\n";
    std::string kl_csv = axis + ",seed,kl_conditional,kl_marginal,kl_total,kl_oracle\n";
    std::string metrics_csv_all =
        axis + ",seed,model,acc_train,acc_test,acc_retain,acc_forget,mia,rt,fs\n";
    std::string fs_csv = axis + ",seed,fs1_plus,fs1_minus,fs2_minus\n";

    json manifest;
    manifest["tool_version"] = kToolVersion;
    manifest["kind"] = synthetic ? (cfg.kind == ExperimentConfig::Kind::SingleRun
                                        ? "single_run"
                                        : "synthetic_zeta_sweep")
                                 : "dirichlet_sweep";
    manifest["master_seed"] = cfg.master_seed;
    manifest["cells"] = json::array();
    json timings;

    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        for (int si = 0; si < cfg.seeds; ++si) {
            char cell_name[128];
            std::snprintf(cell_name, sizeof(cell_name), "%s_%g_seed_%d", axis.c_str(),
                          grid[gi], si);
            const std::string cell_rel = std::string("cells/") + cell_name;
            const std::string cell_dir = out_dir + "/" + cell_rel;
            const double t0 = now_ms();
            CellResult cell =
                run_cell(cfg, grid[gi], static_cast<int>(gi), si, cell_dir);
            timings[cell_name] = {{"wall_ms", now_ms() - t0}};

            json mcell;
            mcell["name"] = cell_name;
            mcell[axis] = grid[gi];
            mcell["seed_index"] = si;
            mcell["seed"] =
                derive_seed(cfg.master_seed, "cell", static_cast<std::uint64_t>(si));
            mcell["ok"] = cell.ok;
            if (!cell.ok) {
                mcell["error"] = cell.error;
                mcell["error_category"] = cell.error_category;
                summary.all_ok = false;
            } else {
                // Paths are stored relative to the run directory so re-runs
                // reproduce the manifest byte for byte.
                mcell["artifacts"] = {cell_rel + "/original.json",
                                      cell_rel + "/retrain.json",
                                      cell_rel + "/unlearn_plus.json",
                                      cell_rel + "/unlearn_plus.cert.json",
                                      cell_rel + "/unlearn_minus.json",
                                      cell_rel + "/unlearn_minus.cert.json",
                                      cell_rel + "/metrics.csv"};
                const std::string prefix = fmt(grid[gi]) + "," + std::to_string(si) + ",";
                sigma_csv += prefix + fmt(cell.kl_total) + "," + fmt(cell.tv_used) + "," +
                             fmt(cell.delta_minus) + "," + fmt(cell.sigma_minus) + "," +
                             fmt(cell.delta_plus) + "," + fmt(cell.sigma_plus) + "\n";
                kl_csv += prefix + fmt(cell.kl_conditional) + "," + fmt(cell.kl_marginal) +
                          "," + fmt(cell.kl_total) + "," + fmt(cell.kl_oracle) + "\n";
                for (const auto& [name, r] : cell.evaluation.reports) {
                    metrics_csv_all += prefix + name + "," + fmt(r.acc_train) + "," +
                                       fmt(r.acc_test) + "," + fmt(r.acc_retain) + "," +
                                       fmt(r.acc_forget) + "," + fmt(r.mia) + "," +
                                       std::to_string(r.relearn.iterations) + "," +
                                       fmt(r.forget_score) + "\n";
                }
                fs_csv += prefix + fmt(cell.evaluation.fs1_plus) + "," +
                          fmt(cell.evaluation.fs1_minus) + "," +
                          fmt(cell.evaluation.fs2_minus) + "\n";
            }
            manifest["cells"].push_back(mcell);
            summary.cells.push_back(std::move(cell));
        }
    }

    const auto write = [&](const std::string& name, const std::string& text) {
        std::ofstream f(out_dir + "/" + name, std::ios::binary);
        f << text;
    };
    write("sigma_vs_" + axis + ".csv", sigma_csv);
    write("kl_vs_" + axis + ".csv", kl_csv);
    write("metrics.csv", metrics_csv_all);
    write("forget_scores.csv", fs_csv);
    write("manifest.json", manifest.dump(2) + "\n");
    write("timings.json", timings.dump(2) + "\n");
    return summary;
}

}  // namespace certul::experiment

// Command-line front end: dataset generation and splitting, training, the
// unlearning mechanisms, SGLD sampling, KL estimation, evaluation, and the
// experiment sweeps. Exit codes: 0 success, 1 validation error, 2
// certification error; errors are emitted as JSON on stderr.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "certul/experiment.hpp"
#include "certul/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace certul;

namespace {

json load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open config file: " + path);
    json j = json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ValidationError("config file is not valid JSON: " + path);
    return j;
}

struct CommonArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    std::optional<std::string> kl_method;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
    auto* opt = cmd->add_option("--config", args.config_path, "JSON config file");
    if (config_required) opt->required();
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "override the master seed");
    cmd->add_option("--kl-method", args.kl_method,
                    "override the KL method: oracle | dv | fixed:<value>");
}

void apply_kl_override(const std::string& text, experiment::KlSpec& spec) {
    if (text == "oracle")
        spec = {distance::KlMethod::OracleGaussian, 0.0};
    else if (text == "dv")
        spec = {distance::KlMethod::DvSampled, 0.0};
    else if (text.rfind("fixed:", 0) == 0)
        spec = {distance::KlMethod::Fixed, std::stod(text.substr(6))};
    else
        throw ValidationError("unknown --kl-method '" + text + "'");
    if (spec.fixed_value < 0.0) throw ValidationError("--kl-method fixed value must be >= 0");
}

void warn_vacuous_delta(const unlearn::CertBudget& budget) {
    if (budget.delta >= 0.05)
        std::cerr << "warning: delta = " << budget.delta
                  << " is a vacuous privacy regime; the certificate is reported as configured\n";
}

// Manifest plus a separate timing file so re-runs stay byte-identical.
struct RunRecorder {
    json manifest;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    explicit RunRecorder(const std::string& command, const json& config_snapshot) {
        manifest["tool_version"] = kToolVersion;
        manifest["command"] = command;
        manifest["config"] = config_snapshot;
        manifest["outputs"] = json::array();
    }
    void add_output(const std::string& path) { manifest["outputs"].push_back(path); }
    void finish(const std::string& out_dir) {
        for (const auto& p : manifest["outputs"])
            if (!fs::exists(p.get<std::string>()))
                throw ValidationError("manifest lists a missing output: " + p.get<std::string>());
        std::ofstream mf(out_dir + "/manifest.json", std::ios::binary);
        mf << manifest.dump(2) << '\n';
        const double ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - start)
                              .count();
        std::ofstream tf(out_dir + "/timings.json", std::ios::binary);
        tf << json{{"wall_ms", ms}}.dump(2) << '\n';
    }
};

int cmd_gen(const CommonArgs& args) {
    json j = load_config(args.config_path);
    experiment::check_keys(j,
                           {"dim", "n_source", "n_surrogate", "zeta", "teacher_seed",
                            "data_seed", "label_flip_prob"},
                           "gen");
    data::SyntheticConfig cfg;
    cfg.dim = j.value("dim", cfg.dim);
    cfg.n_source = j.value("n_source", cfg.n_source);
    cfg.n_surrogate = j.value("n_surrogate", cfg.n_surrogate);
    cfg.zeta = j.value("zeta", cfg.zeta);
    cfg.teacher_seed = j.value("teacher_seed", cfg.teacher_seed);
    cfg.data_seed = j.value("data_seed", cfg.data_seed);
    cfg.label_flip_prob = j.value("label_flip_prob", cfg.label_flip_prob);
    if (args.seed) {
        cfg.teacher_seed = derive_seed(*args.seed, "teacher");
        cfg.data_seed = derive_seed(*args.seed, "data");
    }

    fs::create_directories(args.out_dir);
    RunRecorder rec("gen", j);
    const auto [source, surrogate] = data::gen_synthetic(cfg);
    const std::string src_path = args.out_dir + "/source.csv";
    const std::string sur_path = args.out_dir + "/surrogate.csv";
    data::save_dataset(source, src_path, j.dump());
    data::save_dataset(surrogate, sur_path, j.dump());
    rec.add_output(src_path);
    rec.add_output(sur_path);
    rec.finish(args.out_dir);
    return 0;
}

int cmd_split(const CommonArgs& args) {
    json j = load_config(args.config_path);
    experiment::check_keys(j, {"dataset", "xi", "seed"}, "split");
    const data::Dataset all = data::load_dataset(j.at("dataset").get<std::string>());
    data::DirichletSplitConfig cfg;
    cfg.xi = j.value("xi", cfg.xi);
    cfg.seed = args.seed ? *args.seed : j.value("seed", cfg.seed);

    fs::create_directories(args.out_dir);
    RunRecorder rec("split", j);
    const auto [source, surrogate] = data::dirichlet_split(all, cfg);
    const std::string src_path = args.out_dir + "/source.csv";
    const std::string sur_path = args.out_dir + "/surrogate.csv";
    data::save_dataset(source, src_path, j.dump());
    data::save_dataset(surrogate, sur_path, j.dump());
    rec.add_output(src_path);
    rec.add_output(sur_path);
    rec.finish(args.out_dir);
    return 0;
}

model::TrainConfig train_from_json(const json& j) {
    model::TrainConfig cfg;
    if (!j.contains("train")) return cfg;
    experiment::check_keys(j["train"], {"grad_tol", "max_newton_iters", "ridge_jitter"},
                           "train");
    cfg.grad_tol = j["train"].value("grad_tol", cfg.grad_tol);
    cfg.max_newton_iters = j["train"].value("max_newton_iters", cfg.max_newton_iters);
    cfg.ridge_jitter = j["train"].value("ridge_jitter", cfg.ridge_jitter);
    return cfg;
}

int cmd_train(const CommonArgs& args) {
    json j = load_config(args.config_path);
    experiment::check_keys(j, {"dataset", "constants", "train"}, "train");
    const data::Dataset ds = data::load_dataset(j.at("dataset").get<std::string>());
    const model::LossConstants k =
        j.contains("constants") ? experiment::constants_from_json(j["constants"])
                                : model::LossConstants{};
    fs::create_directories(args.out_dir);
    RunRecorder rec("train", j);
    const model::ModelParams theta = model::train(ds, k, train_from_json(j));
    const std::string path = args.out_dir + "/model.json";
    model::save_model(theta, k.lambda, path);
    rec.add_output(path);
    rec.finish(args.out_dir);
    return 0;
}

int cmd_retrain(const CommonArgs& args) {
    json j = load_config(args.config_path);
    experiment::check_keys(j, {"source", "forget", "constants", "train"}, "retrain");
    const data::Dataset source = data::load_dataset(j.at("source").get<std::string>());
    data::ForgetSpec spec = experiment::forget_from_json(j.at("forget"));
    if (args.seed) spec.seed = *args.seed;
    const model::LossConstants k =
        j.contains("constants") ? experiment::constants_from_json(j["constants"])
                                : model::LossConstants{};

    fs::create_directories(args.out_dir);
    RunRecorder rec("retrain", j);
    const auto [retain, forget] = data::select_forget(source, spec);
    const model::ModelParams theta = unlearn::retrain(retain, k, train_from_json(j));
    const std::string model_path = args.out_dir + "/model.json";
    const std::string retain_path = args.out_dir + "/retain.csv";
    const std::string forget_path = args.out_dir + "/forget.csv";
    model::save_model(theta, k.lambda, model_path);
    data::save_dataset(retain, retain_path);
    data::save_dataset(forget, forget_path);
    rec.add_output(model_path);
    rec.add_output(retain_path);
    rec.add_output(forget_path);
    rec.finish(args.out_dir);
    return 0;
}

int cmd_unlearn(const CommonArgs& args) {
    json j = load_config(args.config_path);
    experiment::check_keys(j,
                           {"mechanism", "model", "surrogate_model", "forget", "surrogate",
                            "retain", "source", "n", "constants", "budget", "kl", "sgld",
                            "dv", "noise_seed", "jitter"},
                           "unlearn");
    const auto [theta, model_lambda] = model::load_model(j.at("model").get<std::string>());
    (void)model_lambda;
    const data::Dataset forget = data::load_dataset(j.at("forget").get<std::string>());
    const model::LossConstants k =
        j.contains("constants") ? experiment::constants_from_json(j["constants"])
                                : model::LossConstants{};
    const unlearn::CertBudget budget = j.contains("budget")
                                           ? experiment::budget_from_json(j["budget"])
                                           : unlearn::CertBudget{};
    warn_vacuous_delta(budget);
    const std::uint64_t noise_seed =
        args.seed ? derive_seed(*args.seed, "noise") : j.value("noise_seed", 0ULL);
    const double jitter = j.value("jitter", 0.0);
    const std::string mechanism = j.value("mechanism", std::string("surrogate"));

    fs::create_directories(args.out_dir);
    RunRecorder rec("unlearn", j);
    unlearn::UnlearnOutput out;

    if (mechanism == "exact") {
        const data::Dataset retain = data::load_dataset(j.at("retain").get<std::string>());
        out = unlearn::unlearn_exact(theta, retain, forget, k, budget, noise_seed, jitter);
    } else if (mechanism == "surrogate") {
        const data::Dataset surrogate =
            data::load_dataset(j.at("surrogate").get<std::string>());
        const auto n = j.at("n").get<Eigen::Index>();

        experiment::KlSpec kl_spec;
        if (j.contains("kl")) {
            experiment::check_keys(j["kl"], {"method", "fixed_value", "as"}, "kl");
            const std::string method = j["kl"].value("method", std::string("fixed"));
            if (method == "oracle")
                kl_spec.method = distance::KlMethod::OracleGaussian;
            else if (method == "dv")
                kl_spec.method = distance::KlMethod::DvSampled;
            else if (method == "fixed")
                kl_spec.method = distance::KlMethod::Fixed;
            else
                throw ValidationError("kl: unknown method '" + method + "'");
            kl_spec.fixed_value = j["kl"].value("fixed_value", 0.0);
        }
        if (args.kl_method) apply_kl_override(*args.kl_method, kl_spec);

        unlearn::DistanceInput dist{unlearn::DistanceInput::Kind::Kl, 0.0};
        switch (kl_spec.method) {
            case distance::KlMethod::Fixed: {
                dist.value = kl_spec.fixed_value;
                if (j.contains("kl") && j["kl"].value("as", std::string("kl")) == "tv")
                    dist.kind = unlearn::DistanceInput::Kind::Tv;
                break;
            }
            case distance::KlMethod::OracleGaussian: {
                // Closed-form Gaussian KL on empirical feature covariances;
                // needs source access, so it only serves as a baseline.
                if (!j.contains("source"))
                    throw ValidationError(
                        "kl method 'oracle' needs a 'source' dataset path for the empirical "
                        "covariance baseline");
                const data::Dataset source =
                    data::load_dataset(j.at("source").get<std::string>());
                const auto cov = [](const Eigen::MatrixXd& x) {
                    const Eigen::RowVectorXd mean = x.colwise().mean();
                    const Eigen::MatrixXd centered = x.rowwise() - mean;
                    return Eigen::MatrixXd((centered.transpose() * centered) /
                                           static_cast<double>(x.rows() - 1));
                };
                dist.value = distance::gaussian_kl(cov(surrogate.features),
                                                   cov(source.features));
                break;
            }
            case distance::KlMethod::DvSampled: {
                model::ModelParams theta_s;
                if (j.contains("surrogate_model"))
                    theta_s = model::load_model(j.at("surrogate_model").get<std::string>()).first;
                else
                    theta_s = model::train(surrogate, k);
                sampler::SgldConfig sgld_cfg =
                    j.contains("sgld") ? experiment::sgld_from_json(j["sgld"])
                                       : sampler::SgldConfig{};
                std::tie(sgld_cfg.init_low, sgld_cfg.init_high) =
                    sampler::default_init_bounds(surrogate);
                if (args.seed) sgld_cfg.seed = derive_seed(*args.seed, "sgld");
                const Eigen::MatrixXd sampled =
                    sampler::sgld_sample(sampler::EnergyModel{theta}, sgld_cfg);
                distance::DvNetConfig dv_cfg = j.contains("dv")
                                                   ? experiment::dv_from_json(j["dv"])
                                                   : distance::DvNetConfig{};
                if (args.seed) dv_cfg.seed = derive_seed(*args.seed, "dv");
                const distance::KlEstimate est =
                    distance::kl_total(theta, theta_s, surrogate, sampled, dv_cfg);
                dist.value = est.total;
                dist.estimate = est;
                break;
            }
        }
        out = unlearn::unlearn_surrogate(theta, surrogate, forget, n, k, budget, dist,
                                         noise_seed, jitter);
    } else {
        throw ValidationError("unlearn: unknown mechanism '" + mechanism + "'");
    }

    // The certificate lands first; a released model never exists without it.
    const std::string cert_path = args.out_dir + "/unlearned.cert.json";
    const std::string model_path = args.out_dir + "/unlearned.json";
    const std::string pre_path = args.out_dir + "/unlearned.pre_noise.json";
    unlearn::save_certificate(out.certificate, cert_path);
    model::save_model(out.theta_released, k.lambda, model_path);
    model::save_model(out.theta_pre_noise, k.lambda, pre_path);
    rec.add_output(cert_path);
    rec.add_output(model_path);
    rec.add_output(pre_path);
    rec.finish(args.out_dir);
    return 0;
}

int cmd_sample(const CommonArgs& args) {
    json j = load_config(args.config_path);
    experiment::check_keys(j, {"model", "surrogate", "sgld"}, "sample");
    const auto [theta, lambda] = model::load_model(j.at("model").get<std::string>());
    (void)lambda;
    const data::Dataset surrogate = data::load_dataset(j.at("surrogate").get<std::string>());
    sampler::SgldConfig cfg =
        j.contains("sgld") ? experiment::sgld_from_json(j["sgld"]) : sampler::SgldConfig{};
    std::tie(cfg.init_low, cfg.init_high) = sampler::default_init_bounds(surrogate);
    if (args.seed) cfg.seed = *args.seed;

    fs::create_directories(args.out_dir);
    RunRecorder rec("sample", j);
    const Eigen::MatrixXd samples = sampler::sgld_sample(sampler::EnergyModel{theta}, cfg);
    const std::string path = args.out_dir + "/samples.csv";
    data::save_matrix_csv(samples, path);
    json sidecar = {{"step_size", cfg.step_size},
                    {"steps_per_sample", cfg.steps_per_sample},
                    {"sample_count", cfg.sample_count},
                    {"seed", cfg.seed}};
    std::ofstream sf(args.out_dir + "/samples.config.json", std::ios::binary);
    sf << sidecar.dump(2) << '\n';
    rec.add_output(path);
    rec.add_output(args.out_dir + "/samples.config.json");
    rec.finish(args.out_dir);
    return 0;
}

int cmd_kl(const CommonArgs& args) {
    json j = load_config(args.config_path);
    experiment::check_keys(j, {"model", "surrogate_model", "surrogate", "samples", "dv"},
                           "kl");
    const auto theta = model::load_model(j.at("model").get<std::string>()).first;
    const auto theta_s = model::load_model(j.at("surrogate_model").get<std::string>()).first;
    const data::Dataset surrogate = data::load_dataset(j.at("surrogate").get<std::string>());
    const Eigen::MatrixXd samples = data::load_matrix_csv(j.at("samples").get<std::string>());
    distance::DvNetConfig dv_cfg =
        j.contains("dv") ? experiment::dv_from_json(j["dv"]) : distance::DvNetConfig{};
    if (args.seed) dv_cfg.seed = *args.seed;

    fs::create_directories(args.out_dir);
    RunRecorder rec("kl", j);
    const distance::KlEstimate est =
        distance::kl_total(theta, theta_s, surrogate, samples, dv_cfg);
    json out = {{"conditional_term", est.conditional_term},
                {"marginal_term", est.marginal_term},
                {"total", est.total},
                {"method", "dv_sampled"}};
    const std::string path = args.out_dir + "/kl.json";
    std::ofstream f(path, std::ios::binary);
    f << out.dump(2) << '\n';
    rec.add_output(path);
    rec.finish(args.out_dir);
    return 0;
}

int cmd_eval(const CommonArgs& args) {
    json j = load_config(args.config_path);
    experiment::check_keys(j,
                           {"original", "retrain", "unlearn_plus", "unlearn_minus", "splits",
                            "constants", "mia", "relearn", "forget_score", "seed"},
                           "eval");
    const auto load_unlearned = [&](const json& spec, const char* where) {
        experiment::check_keys(spec, {"released", "pre_noise", "certificate"}, where);
        unlearn::UnlearnOutput out;
        out.theta_released = model::load_model(spec.at("released").get<std::string>()).first;
        out.theta_pre_noise = model::load_model(spec.at("pre_noise").get<std::string>()).first;
        out.certificate = unlearn::load_certificate(spec.at("certificate").get<std::string>());
        return out;
    };

    eval::ModelSet models;
    models.original = model::load_model(j.at("original").get<std::string>()).first;
    models.retrained = model::load_model(j.at("retrain").get<std::string>()).first;
    models.unlearn_plus = load_unlearned(j.at("unlearn_plus"), "unlearn_plus");
    models.unlearn_minus = load_unlearned(j.at("unlearn_minus"), "unlearn_minus");

    const auto& sp = j.at("splits");
    experiment::check_keys(sp, {"train", "test", "retain", "forget"}, "splits");
    eval::Splits splits;
    splits.train = data::load_dataset(sp.at("train").get<std::string>());
    splits.test = data::load_dataset(sp.at("test").get<std::string>());
    splits.retain = data::load_dataset(sp.at("retain").get<std::string>());
    splits.forget = data::load_dataset(sp.at("forget").get<std::string>());

    eval::EvalConfig cfg;
    cfg.constants = j.contains("constants") ? experiment::constants_from_json(j["constants"])
                                            : model::LossConstants{};
    if (j.contains("mia")) {
        experiment::check_keys(j["mia"], {"folds"}, "mia");
        cfg.mia.folds = j["mia"].value("folds", cfg.mia.folds);
    }
    if (j.contains("relearn")) {
        experiment::check_keys(j["relearn"], {"learning_rate", "cap"}, "relearn");
        cfg.relearn.learning_rate = j["relearn"].value("learning_rate", cfg.relearn.learning_rate);
        cfg.relearn.cap = j["relearn"].value("cap", cfg.relearn.cap);
    }
    if (j.contains("forget_score")) {
        experiment::check_keys(j["forget_score"], {"draws_per_side", "threshold_grid_size"},
                               "forget_score");
        cfg.fs.draws_per_side =
            j["forget_score"].value("draws_per_side", cfg.fs.draws_per_side);
        cfg.fs.threshold_grid_size =
            j["forget_score"].value("threshold_grid_size", cfg.fs.threshold_grid_size);
    }
    cfg.seed = args.seed ? *args.seed : j.value("seed", 0ULL);

    fs::create_directories(args.out_dir);
    RunRecorder rec("eval", j);
    const eval::EvaluationResult result = eval::evaluate_all(models, splits, cfg);
    const std::string metrics_path = args.out_dir + "/metrics.csv";
    std::ofstream mf(metrics_path, std::ios::binary);
    mf << eval::metrics_csv(result.reports);
    mf.close();
    json fs_json = {{"fs1_plus", result.fs1_plus},
                    {"fs1_minus", result.fs1_minus},
                    {"fs2_minus", result.fs2_minus}};
    std::ofstream ff(args.out_dir + "/forget_scores.json", std::ios::binary);
    ff << fs_json.dump(2) << '\n';
    rec.add_output(metrics_path);
    rec.add_output(args.out_dir + "/forget_scores.json");
    rec.finish(args.out_dir);
    return 0;
}

int cmd_experiment(const CommonArgs& args) {
    json j = load_config(args.config_path);
    experiment::ExperimentConfig cfg = experiment::parse_experiment_config(j);
    if (args.seed) cfg.master_seed = *args.seed;
    if (args.kl_method) apply_kl_override(*args.kl_method, cfg.kl);
    warn_vacuous_delta(cfg.budget);
    const experiment::RunSummary summary = experiment::run_experiment(cfg, args.out_dir);
    int failed = 0;
    for (const auto& c : summary.cells)
        if (!c.ok) {
            ++failed;
            std::cerr << "cell " << c.cell_value << "/" << c.seed_index << " failed ("
                      << c.error_category << "): " << c.error << '\n';
        }
    if (failed > 0) {
        std::cerr << failed << " of " << summary.cells.size() << " cells failed\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"certified unlearning toolkit"};
    app.require_subcommand(1);

    CommonArgs args;
    const struct {
        const char* name;
        const char* help;
        int (*fn)(const CommonArgs&);
    } commands[] = {
        {"gen", "generate a synthetic source/surrogate pair", cmd_gen},
        {"split", "Dirichlet-split a dataset into source/surrogate", cmd_split},
        {"train", "train the classifier to stationarity", cmd_train},
        {"retrain", "carve a forget set and retrain on the remainder", cmd_retrain},
        {"unlearn", "run an unlearning mechanism and emit model + certificate", cmd_unlearn},
        {"sample", "draw SGLD samples from the model's energy", cmd_sample},
        {"kl", "estimate KL between surrogate and sampled source", cmd_kl},
        {"eval", "compute unlearning quality metrics", cmd_eval},
        {"experiment", "run a configured sweep", cmd_experiment},
    };
    for (const auto& c : commands) add_common(app.add_subcommand(c.name, c.help), args);

    CLI11_PARSE(app, argc, argv);

    try {
        for (const auto& c : commands)
            if (app.got_subcommand(c.name)) return c.fn(args);
        return 1;
    } catch (const CertificationError& e) {
        std::cerr << nlohmann::json{{"category", "certification"}, {"message", e.what()}}.dump()
                  << '\n';
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << nlohmann::json{{"category", "validation"}, {"message", e.what()}}.dump()
                  << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << nlohmann::json{{"category", "validation"}, {"message", e.what()}}.dump()
                  << '\n';
        return 1;
    }
}

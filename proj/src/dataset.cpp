#include "certul/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "certul/rng.hpp"

namespace certul::data {

void Dataset::validate() const {
    if (features.rows() < 1 || features.cols() < 1)
        throw ValidationError("dataset must have n >= 1 and d >= 1");
    if (features.rows() != static_cast<Eigen::Index>(labels.size()))
        throw ValidationError("feature row count does not match label count");
    if (class_count < 2) throw ValidationError("class_count must be >= 2");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= class_count)
            throw ValidationError("label out of range [0, C) at row " + std::to_string(i + 1));
    }
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& idx) const {
    Dataset out;
    out.class_count = class_count;
    out.features.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
    out.labels.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out.features.row(static_cast<Eigen::Index>(i)) = features.row(idx[i]);
        out.labels[i] = labels[static_cast<std::size_t>(idx[i])];
    }
    return out;
}

namespace {

// Samples a row from N(0, Sigma) given the lower Cholesky factor.
Eigen::VectorXd sample_gaussian_row(const Eigen::MatrixXd& chol_lower, Rng& rng) {
    Eigen::VectorXd z(chol_lower.rows());
    for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = rng.normal();
    return chol_lower * z;
}

int teacher_label(const Eigen::VectorXd& x, const Eigen::VectorXd& w, double flip_prob,
                  Rng& rng) {
    int y = (w.dot(x) > 0.0) ? 1 : 0;
    if (rng.uniform() < flip_prob) y = 1 - y;
    return y;
}

}  // namespace

std::pair<Dataset, Dataset> gen_synthetic(const SyntheticConfig& cfg) {
    if (cfg.dim < 1) throw ValidationError("gen_synthetic: dim must be >= 1");
    if (cfg.n_source < 1 || cfg.n_surrogate < 1)
        throw ValidationError("gen_synthetic: sample counts must be >= 1");
    if (cfg.zeta < 0.0 || cfg.zeta >= 1.0)
        throw ValidationError(
            "gen_synthetic: zeta must lie in [0, 1) for a positive definite covariance");
    if (cfg.label_flip_prob < 0.0 || cfg.label_flip_prob >= 0.5)
        throw ValidationError("gen_synthetic: label_flip_prob must lie in [0, 0.5)");

    const int d = cfg.dim;

    // Surrogate covariance: unit diagonal, zeta off the diagonal.
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Constant(d, d, cfg.zeta);
    sigma.diagonal().setOnes();
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success)
        throw ValidationError("gen_synthetic: surrogate covariance is not positive definite");
    const Eigen::MatrixXd chol = llt.matrixL();

    Rng teacher_rng(cfg.teacher_seed);
    Eigen::VectorXd teacher(d);
    for (int j = 0; j < d; ++j) teacher[j] = teacher_rng.normal();

    Dataset source, surrogate;
    source.class_count = surrogate.class_count = 2;
    source.features.resize(cfg.n_source, d);
    source.labels.resize(static_cast<std::size_t>(cfg.n_source));
    surrogate.features.resize(cfg.n_surrogate, d);
    surrogate.labels.resize(static_cast<std::size_t>(cfg.n_surrogate));

    Rng src_rng(derive_seed(cfg.data_seed, "synthetic_source"));
    for (Eigen::Index i = 0; i < cfg.n_source; ++i) {
        for (int j = 0; j < d; ++j) source.features(i, j) = src_rng.normal();
        source.labels[static_cast<std::size_t>(i)] =
            teacher_label(source.features.row(i), teacher, cfg.label_flip_prob, src_rng);
    }

    Rng sur_rng(derive_seed(cfg.data_seed, "synthetic_surrogate"));
    for (Eigen::Index i = 0; i < cfg.n_surrogate; ++i) {
        surrogate.features.row(i) = sample_gaussian_row(chol, sur_rng).transpose();
        surrogate.labels[static_cast<std::size_t>(i)] =
            teacher_label(surrogate.features.row(i), teacher, cfg.label_flip_prob, sur_rng);
    }
    return {std::move(source), std::move(surrogate)};
}

std::pair<Dataset, Dataset> dirichlet_split(const Dataset& ds, const DirichletSplitConfig& cfg) {
    ds.validate();
    if (cfg.xi <= 0.0) throw ValidationError("dirichlet_split: xi must be > 0");

    std::vector<std::vector<Eigen::Index>> by_class(static_cast<std::size_t>(ds.class_count));
    for (Eigen::Index i = 0; i < ds.rows(); ++i)
        by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);
    for (int c = 0; c < ds.class_count; ++c) {
        if (by_class[static_cast<std::size_t>(c)].size() < 2)
            throw ValidationError("dirichlet_split: class " + std::to_string(c) +
                                  " has fewer than 2 samples");
    }

    Rng rng(cfg.seed);
    for (int attempt = 0; attempt < 100; ++attempt) {
        std::vector<Eigen::Index> src_idx, sur_idx;
        src_idx.reserve(static_cast<std::size_t>(ds.rows()));
        sur_idx.reserve(static_cast<std::size_t>(ds.rows()));
        for (int c = 0; c < ds.class_count; ++c) {
            const double p_src = rng.beta(cfg.xi, cfg.xi);
            for (const Eigen::Index i : by_class[static_cast<std::size_t>(c)]) {
                if (rng.uniform() < p_src)
                    src_idx.push_back(i);
                else
                    sur_idx.push_back(i);
            }
        }
        if (!src_idx.empty() && !sur_idx.empty())
            return {ds.subset(src_idx), ds.subset(sur_idx)};
    }
    throw ValidationError(
        "dirichlet_split: one side stayed empty after 100 draws; the dataset is too small "
        "or xi too extreme for a two-way split");
}

std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> select_forget_indices(
    const Dataset& source, const ForgetSpec& spec) {
    source.validate();
    const Eigen::Index n = source.rows();
    std::vector<Eigen::Index> forget;

    if (spec.mode == ForgetSpec::Mode::RandomFraction) {
        if (spec.ratio <= 0.0 || spec.ratio >= 1.0)
            throw ValidationError("select_forget: ratio must lie in (0, 1)");
        const auto m = static_cast<Eigen::Index>(std::llround(spec.ratio * static_cast<double>(n)));
        if (m == 0 || m == n)
            throw ValidationError("select_forget: ratio " + std::to_string(spec.ratio) +
                                  " yields an empty forget or retain side at n = " +
                                  std::to_string(n));
        std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), Eigen::Index{0});
        Rng rng(spec.seed);
        // Partial Fisher-Yates: the first m entries become the forget set.
        for (Eigen::Index i = 0; i < m; ++i) {
            const auto j = i + static_cast<Eigen::Index>(
                                   rng.below(static_cast<std::uint64_t>(n - i)));
            std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
        }
        forget.assign(perm.begin(), perm.begin() + m);
        std::sort(forget.begin(), forget.end());
    } else {
        if (spec.class_id < 0 || spec.class_id >= source.class_count)
            throw ValidationError("select_forget: class id out of range");
        for (Eigen::Index i = 0; i < n; ++i)
            if (source.labels[static_cast<std::size_t>(i)] == spec.class_id) forget.push_back(i);
        if (forget.empty()) throw ValidationError("select_forget: class has no samples");
        if (static_cast<Eigen::Index>(forget.size()) == n)
            throw ValidationError("select_forget: removing the class would empty the dataset");
    }

    std::vector<Eigen::Index> retain;
    retain.reserve(static_cast<std::size_t>(n) - forget.size());
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (k < forget.size() && forget[k] == i)
            ++k;
        else
            retain.push_back(i);
    }
    return {std::move(retain), std::move(forget)};
}

std::pair<Dataset, Dataset> select_forget(const Dataset& source, const ForgetSpec& spec) {
    const auto [retain_idx, forget_idx] = select_forget_indices(source, spec);
    return {source.subset(retain_idx), source.subset(forget_idx)};
}

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

double parse_double(std::string_view tok, std::size_t line_no) {
    double v = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last)
        throw ValidationError("dataset parse error: bad float '" + std::string(tok) +
                              "' on line " + std::to_string(line_no));
    return v;
}

}  // namespace

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open dataset file: " + path);

    Dataset ds;
    std::vector<double> values;
    std::vector<int> labels;
    Eigen::Index d = -1;
    std::string line;
    std::size_t line_no = 0;
    int max_label = -1;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string_view> toks;
        std::string_view rest(line);
        while (true) {
            const auto pos = rest.find(',');
            if (pos == std::string_view::npos) {
                toks.push_back(rest);
                break;
            }
            toks.push_back(rest.substr(0, pos));
            rest.remove_prefix(pos + 1);
        }
        if (toks.size() < 2)
            throw ValidationError("dataset parse error: need at least one feature and a label "
                                  "on line " + std::to_string(line_no));
        if (d < 0) d = static_cast<Eigen::Index>(toks.size()) - 1;
        if (static_cast<Eigen::Index>(toks.size()) - 1 != d)
            throw ValidationError("dataset parse error: inconsistent column count on line " +
                                  std::to_string(line_no));
        for (Eigen::Index j = 0; j < d; ++j)
            values.push_back(parse_double(toks[static_cast<std::size_t>(j)], line_no));
        const auto& lab = toks.back();
        int y = 0;
        const auto res = std::from_chars(lab.data(), lab.data() + lab.size(), y);
        if (res.ec != std::errc{} || res.ptr != lab.data() + lab.size())
            throw ValidationError("dataset parse error: bad label '" + std::string(lab) +
                                  "' on line " + std::to_string(line_no));
        if (y < 0)
            throw ValidationError("dataset parse error: negative label on line " +
                                  std::to_string(line_no));
        labels.push_back(y);
        max_label = std::max(max_label, y);
    }
    if (labels.empty()) throw ValidationError("dataset file is empty: " + path);

    const auto n = static_cast<Eigen::Index>(labels.size());
    ds.features.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            ds.features(i, j) = values[static_cast<std::size_t>(i * d + j)];
    ds.labels = std::move(labels);
    ds.class_count = std::max(2, max_label + 1);

    // The sidecar, when present, pins C (a split file may not contain every class).
    std::ifstream meta(path + ".meta.json");
    if (meta) {
        nlohmann::json j = nlohmann::json::parse(meta, nullptr, false);
        if (!j.is_discarded() && j.contains("class_count")) {
            const int c = j["class_count"].get<int>();
            if (c <= max_label)
                throw ValidationError("dataset parse error: label " + std::to_string(max_label) +
                                      " out of range for class_count " + std::to_string(c) +
                                      " declared in sidecar of " + path);
            ds.class_count = c;
        }
    }
    ds.validate();
    return ds;
}

void save_dataset(const Dataset& ds, const std::string& path, const std::string& meta_extra_json) {
    ds.validate();
    std::string out;
    out.reserve(static_cast<std::size_t>(ds.rows()) * 16);
    for (Eigen::Index i = 0; i < ds.rows(); ++i) {
        for (Eigen::Index j = 0; j < ds.dim(); ++j) {
            append_double(out, ds.features(i, j));
            out.push_back(',');
        }
        out += std::to_string(ds.labels[static_cast<std::size_t>(i)]);
        out.push_back('\n');
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write dataset file: " + path);
    f << out;

    nlohmann::json meta;
    meta["n"] = ds.rows();
    meta["d"] = ds.dim();
    meta["class_count"] = ds.class_count;
    if (!meta_extra_json.empty()) meta["config"] = nlohmann::json::parse(meta_extra_json);
    std::ofstream mf(path + ".meta.json", std::ios::binary);
    mf << meta.dump(2) << '\n';
}

Eigen::MatrixXd load_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open matrix file: " + path);
    std::vector<double> values;
    Eigen::Index d = -1;
    std::string line;
    std::size_t line_no = 0, rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ++rows;
        std::string_view rest(line);
        Eigen::Index cols = 0;
        while (true) {
            const auto pos = rest.find(',');
            const auto tok = (pos == std::string_view::npos) ? rest : rest.substr(0, pos);
            values.push_back(parse_double(tok, line_no));
            ++cols;
            if (pos == std::string_view::npos) break;
            rest.remove_prefix(pos + 1);
        }
        if (d < 0) d = cols;
        if (cols != d)
            throw ValidationError("matrix parse error: inconsistent column count on line " +
                                  std::to_string(line_no));
    }
    if (rows == 0) throw ValidationError("matrix file is empty: " + path);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), d);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            m(i, j) = values[static_cast<std::size_t>(i * d + j)];
    return m;
}

void save_matrix_csv(const Eigen::MatrixXd& m, const std::string& path) {
    std::string out;
    out.reserve(static_cast<std::size_t>(m.rows()) * 16);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out.push_back(',');
            append_double(out, m(i, j));
        }
        out.push_back('\n');
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write matrix file: " + path);
    f << out;
}

}  // namespace certul::data

#include "figmn/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace figmn {

namespace {
constexpr double kDetFloor = 1e-300;

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}
}  // namespace

MaskedVector MaskedVector::fully_known(Vector v) {
    MaskedVector m;
    m.known.assign(v.size(), true);
    m.values = std::move(v);
    return m;
}

bool MaskedVector::all_known() const {
    return std::all_of(known.begin(), known.end(), [](bool k) { return k; });
}

std::vector<int> MaskedVector::known_indices() const {
    std::vector<int> idx;
    for (std::size_t d = 0; d < known.size(); ++d)
        if (known[d]) idx.push_back(static_cast<int>(d));
    return idx;
}

std::vector<int> MaskedVector::unknown_indices() const {
    std::vector<int> idx;
    for (std::size_t d = 0; d < known.size(); ++d)
        if (!known[d]) idx.push_back(static_cast<int>(d));
    return idx;
}

double mahalanobis_sq(const GaussianComponent& comp, std::span<const double> x) {
    if (x.size() != comp.mean.size()) throw std::invalid_argument("mahalanobis_sq: dimension mismatch");
    Vector e(x.size());
    for (std::size_t d = 0; d < x.size(); ++d) e[d] = x[d] - comp.mean[d];
    return comp.precision.quadratic_form(e);
}

double likelihood(const GaussianComponent& comp, std::span<const double> x) {
    if (comp.cov_det <= 0.0) throw NumericalFailure("likelihood: non-positive covariance determinant");
    const double d2 = mahalanobis_sq(comp, x);
    const double log_dens = -0.5 * d2 - 0.5 * std::log(comp.cov_det) -
                            0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi);
    const double dens = std::exp(log_dens);
    if (!std::isfinite(dens)) throw NumericalFailure("likelihood: non-finite density");
    return dens;
}

Mixture::Mixture(int dim, MixtureConfig config) : dim_(dim), config_(std::move(config)) {
    if (dim_ < 1) throw std::invalid_argument("Mixture: dimension must be positive");
    if (!(config_.beta > 0.0 && config_.beta < 1.0))
        throw std::invalid_argument("Mixture: beta must lie in (0,1)");
    if (static_cast<int>(config_.sigma_ini.size()) != dim_)
        throw std::invalid_argument("Mixture: sigma_ini must have one variance per dimension");
    for (double v : config_.sigma_ini)
        if (!(v > 0.0)) throw std::invalid_argument("Mixture: sigma_ini entries must be positive");
    std::sort(config_.q_dims.begin(), config_.q_dims.end());
    config_.q_dims.erase(std::unique(config_.q_dims.begin(), config_.q_dims.end()), config_.q_dims.end());
    q_mask_.assign(dim_, false);
    for (int d : config_.q_dims) {
        if (d < 0 || d >= dim_) throw std::invalid_argument("Mixture: q_dims index out of range");
        q_mask_[d] = true;
    }
    chi2_full_ = make_chi2_threshold(dim_, 1.0 - config_.beta);
}

double Mixture::chi2_threshold(int dof) const {
    if (dof == dim_) return chi2_full_.value;
    auto it = chi2_cache_.find(dof);
    if (it != chi2_cache_.end()) return it->second;
    const double v = chi2_quantile(dof, 1.0 - config_.beta);
    chi2_cache_.emplace(dof, v);
    return v;
}

std::vector<double> Mixture::posteriors(std::span<const double> x) const {
    if (components_.empty()) throw EmptyModel("posteriors: mixture has no components");
    std::vector<double> p(components_.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < components_.size(); ++j) {
        p[j] = likelihood(components_[j], x) * components_[j].prior;
        sum += p[j];
    }
    if (sum <= 0.0) {
        // every product underflowed; hard-assign to the nearest component
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < components_.size(); ++j) {
            const double d = mahalanobis_sq(components_[j], x);
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        std::fill(p.begin(), p.end(), 0.0);
        p[best] = 1.0;
        return p;
    }
    for (double& v : p) v /= sum;
    return p;
}

Mixture::ConditionalView Mixture::conditional_view(const GaussianComponent& comp, const MaskedVector& x,
                                                   std::span<const int> known,
                                                   std::span<const int> unknown) const {
    ConditionalView view;
    const SquareMatrix lambda_t = comp.precision.submatrix(unknown);
    Cholesky chol;
    try {
        chol = cholesky_factor(lambda_t);
    } catch (const NotPositiveDefinite& e) {
        throw NumericalFailure(std::string("conditional block not invertible: ") + e.what());
    }

    Vector delta(known.size());
    for (std::size_t i = 0; i < known.size(); ++i)
        delta[i] = x.values[known[i]] - comp.mean[known[i]];

    // w = Lambda_ti * delta
    Vector w(unknown.size(), 0.0);
    for (std::size_t u = 0; u < unknown.size(); ++u) {
        double s = 0.0;
        for (std::size_t i = 0; i < known.size(); ++i) s += comp.precision(unknown[u], known[i]) * delta[i];
        w[u] = s;
    }
    const Vector z = chol.solve(w);  // Lambda_t^{-1} w

    view.cond_mean.resize(unknown.size());
    for (std::size_t u = 0; u < unknown.size(); ++u) view.cond_mean[u] = comp.mean[unknown[u]] - z[u];

    // delta^T (Lambda_i - Lambda_it Lambda_t^{-1} Lambda_ti) delta
    double quad = 0.0;
    for (std::size_t a = 0; a < known.size(); ++a) {
        double row = 0.0;
        for (std::size_t b = 0; b < known.size(); ++b) row += comp.precision(known[a], known[b]) * delta[b];
        quad += delta[a] * row;
    }
    view.dist_sq = quad - dot(w, z);
    if (view.dist_sq < 0.0 && view.dist_sq > -1e-9) view.dist_sq = 0.0;
    view.known_det = comp.cov_det * chol.determinant();
    if (!std::isfinite(view.dist_sq) || !(view.known_det > 0.0) || !std::isfinite(view.known_det))
        throw NumericalFailure("conditional view: non-finite distance or determinant");
    return view;
}

std::vector<double> Mixture::masked_posteriors(const std::vector<ConditionalView>& views,
                                               std::size_t n_known) const {
    std::vector<double> p(views.size());
    const double log_norm = -0.5 * static_cast<double>(n_known) * std::log(2.0 * std::numbers::pi);
    double sum = 0.0;
    for (std::size_t j = 0; j < views.size(); ++j) {
        const double log_dens = log_norm - 0.5 * views[j].dist_sq - 0.5 * std::log(views[j].known_det);
        p[j] = std::exp(log_dens) * components_[j].prior;
        if (!std::isfinite(p[j])) throw NumericalFailure("masked posterior: non-finite product");
        sum += p[j];
    }
    if (sum <= 0.0) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < views.size(); ++j)
            if (views[j].dist_sq < views[best].dist_sq) best = j;
        std::fill(p.begin(), p.end(), 0.0);
        p[best] = 1.0;
        return p;
    }
    for (double& v : p) v /= sum;
    return p;
}

void Mixture::learn(const Vector& x) { learn(MaskedVector::fully_known(x)); }

void Mixture::learn(const MaskedVector& x) {
    if (static_cast<int>(x.values.size()) != dim_ || x.known.size() != x.values.size())
        throw std::invalid_argument("learn: dimension mismatch");
    const std::vector<int> known = x.known_indices();
    if (known.empty()) throw std::invalid_argument("learn: at least one known dimension required");

    if (components_.empty()) {
        Vector mean = x.values;
        for (std::size_t d = 0; d < mean.size(); ++d)
            if (!x.known[d]) mean[d] = 0.0;
        create(mean);
        return;
    }

    const std::vector<int> unknown = x.unknown_indices();
    const double threshold = chi2_threshold(static_cast<int>(known.size()));

    if (unknown.empty()) {
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < components_.size(); ++j) {
            const double d = mahalanobis_sq(components_[j], x.values);
            if (!std::isfinite(d)) throw NumericalFailure("learn: non-finite distance");
            best_d = std::min(best_d, d);
        }
        if (best_d < threshold) {
            update_components(x.values, posteriors(x.values));
        } else {
            create(x.values);
        }
        return;
    }

    std::vector<ConditionalView> views;
    views.reserve(components_.size());
    for (const auto& comp : components_) views.push_back(conditional_view(comp, x, known, unknown));

    std::size_t best = 0;
    for (std::size_t j = 1; j < views.size(); ++j)
        if (views[j].dist_sq < views[best].dist_sq) best = j;

    const std::vector<double> post = masked_posteriors(views, known.size());

    if (views[best].dist_sq < threshold) {
        Vector imputed(x.values);
        for (std::size_t j = 0; j < components_.size(); ++j) {
            for (std::size_t u = 0; u < unknown.size(); ++u) imputed[unknown[u]] = views[j].cond_mean[u];
            update_component(components_[j], imputed, post[j]);
        }
        renormalize_priors();
    } else {
        Vector mean = x.values;
        for (std::size_t u = 0; u < unknown.size(); ++u) {
            double s = 0.0;
            for (std::size_t j = 0; j < views.size(); ++j) s += post[j] * views[j].cond_mean[u];
            mean[unknown[u]] = s;
        }
        create(mean);
    }
}

void Mixture::update_components(const Vector& x, const std::vector<double>& post) {
    if (static_cast<int>(x.size()) != dim_) throw std::invalid_argument("update_components: dimension mismatch");
    if (post.size() != components_.size())
        throw std::invalid_argument("update_components: one posterior per component required");
    for (std::size_t j = 0; j < components_.size(); ++j) update_component(components_[j], x, post[j]);
    renormalize_priors();
}

void Mixture::update_component(GaussianComponent& comp, std::span<const double> x, double posterior) {
    comp.age += 1;
    comp.sp += posterior;

    Vector e(dim_);
    for (int d = 0; d < dim_; ++d) e[d] = x[d] - comp.mean[d];

    const double omega = posterior / comp.sp;
    const double omega_q = config_.q_alpha > 0.0 ? posterior * config_.q_alpha : omega;
    for (int d = 0; d < dim_; ++d) comp.mean[d] += (q_mask_[d] ? omega_q : omega) * e[d];

    if (omega <= 0.0) return;

    // Sherman-Morrison / determinant-lemma pair for
    // Sigma(t) = (1-w) Sigma(t-1) + w e e^T - (we)(we)^T, with the
    // pre-update precision and error.
    const Vector le = comp.precision.multiply(e);
    const double d2 = dot(e, le);
    const double one_minus = 1.0 - omega;
    const double growth = 1.0 + omega * d2;
    const double scale = 1.0 / one_minus;
    const double coeff = -omega / (one_minus * growth);
    for (int i = 0; i < dim_; ++i) {
        const double vii = comp.precision(i, i) * scale + coeff * le[i] * le[i];
        comp.precision(i, i) = vii;
        for (int j = i + 1; j < dim_; ++j) {
            const double v = comp.precision(i, j) * scale + coeff * le[i] * le[j];
            comp.precision(i, j) = v;
            comp.precision(j, i) = v;
        }
    }
    comp.cov_det *= std::pow(one_minus, dim_) * growth;

    bool healthy = std::isfinite(comp.cov_det) && comp.cov_det > kDetFloor;
    if (healthy) {
        for (double v : comp.precision.entries()) {
            if (!std::isfinite(v)) {
                healthy = false;
                break;
            }
        }
    }
    if (!healthy) reset_component_shape(comp);
}

void Mixture::reset_component_shape(GaussianComponent& comp) {
    Vector inv_var(dim_);
    double det = 1.0;
    for (int d = 0; d < dim_; ++d) {
        inv_var[d] = 1.0 / config_.sigma_ini[d];
        det *= config_.sigma_ini[d];
    }
    comp.precision = SquareMatrix::diagonal(inv_var);
    comp.cov_det = det;
}

void Mixture::create(const Vector& x) {
    if (static_cast<int>(x.size()) != dim_) throw std::invalid_argument("create: dimension mismatch");
    GaussianComponent comp;
    comp.mean = x;
    comp.sp = 1.0;
    comp.age = 1;
    reset_component_shape(comp);
    components_.push_back(std::move(comp));
    renormalize_priors();
}

void Mixture::prune() {
    if (!config_.pruning_enabled) return;
    const auto removed = std::erase_if(components_, [this](const GaussianComponent& c) {
        return static_cast<double>(c.age) > config_.v_min && c.sp < config_.sp_min;
    });
    if (removed > 0) renormalize_priors();
}

void Mixture::renormalize_priors() {
    double sum = 0.0;
    for (const auto& c : components_) sum += c.sp;
    if (sum <= 0.0) return;
    for (auto& c : components_) c.prior = c.sp / sum;
}

Vector Mixture::infer(const MaskedVector& x) const {
    if (components_.empty()) throw EmptyModel("infer: mixture has no components");
    if (static_cast<int>(x.values.size()) != dim_ || x.known.size() != x.values.size())
        throw std::invalid_argument("infer: dimension mismatch");
    const std::vector<int> known = x.known_indices();
    const std::vector<int> unknown = x.unknown_indices();
    if (known.empty() || unknown.empty())
        throw std::invalid_argument("infer: needs at least one known and one unknown dimension");

    std::vector<ConditionalView> views;
    views.reserve(components_.size());
    for (const auto& comp : components_) views.push_back(conditional_view(comp, x, known, unknown));
    const std::vector<double> post = masked_posteriors(views, known.size());

    Vector out(unknown.size(), 0.0);
    for (std::size_t j = 0; j < views.size(); ++j)
        for (std::size_t u = 0; u < unknown.size(); ++u) out[u] += post[j] * views[j].cond_mean[u];
    return out;
}

Vector Mixture::impute(const MaskedVector& x) const {
    if (components_.empty()) throw EmptyModel("impute: mixture has no components");
    if (x.all_known()) return x.values;
    const std::vector<int> unknown = x.unknown_indices();
    const Vector filled = infer(x);
    Vector out = x.values;
    for (std::size_t u = 0; u < unknown.size(); ++u) out[unknown[u]] = filled[u];
    return out;
}

namespace {

void expect_token(std::istream& in, const char* token) {
    std::string got;
    in >> got;
    if (got != token) throw std::runtime_error(std::string("model load: expected '") + token + "', got '" + got + "'");
}

template <typename T>
T read_value(std::istream& in, const char* token) {
    expect_token(in, token);
    T v{};
    if (!(in >> v)) throw std::runtime_error(std::string("model load: bad value for '") + token + "'");
    return v;
}

}  // namespace

void Mixture::save(std::ostream& out) const {
    out << std::setprecision(17);
    out << "figmn-model 1\n";
    out << "dim " << dim_ << "\n";
    out << "beta " << config_.beta << "\n";
    out << "q_alpha " << config_.q_alpha << "\n";
    out << "v_min " << config_.v_min << "\n";
    out << "sp_min " << config_.sp_min << "\n";
    out << "pruning " << (config_.pruning_enabled ? 1 : 0) << "\n";
    out << "sigma_ini";
    for (double v : config_.sigma_ini) out << ' ' << v;
    out << "\n";
    out << "q_dims " << config_.q_dims.size();
    for (int d : config_.q_dims) out << ' ' << d;
    out << "\n";
    out << "components " << components_.size() << "\n";
    for (const auto& comp : components_) {
        out << "component\n";
        out << "mean";
        for (double v : comp.mean) out << ' ' << v;
        out << "\n";
        out << "precision";
        for (int i = 0; i < dim_; ++i)
            for (int j = i; j < dim_; ++j) out << ' ' << comp.precision(i, j);
        out << "\n";
        out << "cov_det " << comp.cov_det << "\n";
        out << "sp " << comp.sp << "\n";
        out << "age " << comp.age << "\n";
        out << "prior " << comp.prior << "\n";
    }
    out << "end\n";
}

Mixture Mixture::load(std::istream& in) {
    expect_token(in, "figmn-model");
    int version = 0;
    in >> version;
    if (version != 1) throw std::runtime_error("model load: unsupported version");

    const int dim = read_value<int>(in, "dim");
    MixtureConfig cfg;
    cfg.beta = read_value<double>(in, "beta");
    cfg.q_alpha = read_value<double>(in, "q_alpha");
    cfg.v_min = read_value<double>(in, "v_min");
    cfg.sp_min = read_value<double>(in, "sp_min");
    cfg.pruning_enabled = read_value<int>(in, "pruning") != 0;
    expect_token(in, "sigma_ini");
    cfg.sigma_ini.resize(dim);
    for (double& v : cfg.sigma_ini)
        if (!(in >> v)) throw std::runtime_error("model load: bad sigma_ini");
    const auto n_q = read_value<std::size_t>(in, "q_dims");
    cfg.q_dims.resize(n_q);
    for (int& d : cfg.q_dims)
        if (!(in >> d)) throw std::runtime_error("model load: bad q_dims");

    Mixture m(dim, std::move(cfg));
    const auto n_comp = read_value<std::size_t>(in, "components");
    m.components_.reserve(n_comp);
    for (std::size_t c = 0; c < n_comp; ++c) {
        expect_token(in, "component");
        GaussianComponent comp;
        expect_token(in, "mean");
        comp.mean.resize(dim);
        for (double& v : comp.mean)
            if (!(in >> v)) throw std::runtime_error("model load: bad mean");
        expect_token(in, "precision");
        comp.precision = SquareMatrix(dim);
        for (int i = 0; i < dim; ++i)
            for (int j = i; j < dim; ++j) {
                double v;
                if (!(in >> v)) throw std::runtime_error("model load: bad precision");
                comp.precision(i, j) = v;
                comp.precision(j, i) = v;
            }
        comp.cov_det = read_value<double>(in, "cov_det");
        comp.sp = read_value<double>(in, "sp");
        comp.age = read_value<std::int64_t>(in, "age");
        comp.prior = read_value<double>(in, "prior");
        m.components_.push_back(std::move(comp));
    }
    expect_token(in, "end");
    return m;
}

void save_model(const Mixture& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_model: cannot open " + path);
    m.save(out);
    if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

Mixture load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_model: cannot open " + path);
    return Mixture::load(in);
}

}  // namespace figmn

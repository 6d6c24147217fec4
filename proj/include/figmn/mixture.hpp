#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "figmn/numerics.hpp"

namespace figmn {

/// A data vector in which some dimensions may be unobserved. The model
/// never updates or conditions on unknown dimensions directly.
struct MaskedVector {
    Vector values;
    std::vector<bool> known;

    static MaskedVector fully_known(Vector v);

    std::size_t size() const { return values.size(); }
    bool all_known() const;
    std::vector<int> known_indices() const;
    std::vector<int> unknown_indices() const;
};

/// One Gaussian of the mixture. The precision matrix and the covariance
/// determinant are maintained incrementally; the covariance itself is
/// never stored.
struct GaussianComponent {
    Vector mean;
    SquareMatrix precision;
    double cov_det = 1.0;
    double sp = 1.0;
    std::int64_t age = 1;
    double prior = 1.0;
};

/// (x - mu)^T Lambda (x - mu)
double mahalanobis_sq(const GaussianComponent& comp, std::span<const double> x);

/// Multivariate normal density at x using the stored determinant.
double likelihood(const GaussianComponent& comp, std::span<const double> x);

struct MixtureConfig {
    double beta = 0.1;             // creation test uses the 1 - beta percentile
    Vector sigma_ini;              // per-dimension initial variances
    double v_min = 5.0;
    double sp_min = 3.0;
    bool pruning_enabled = false;
    std::vector<int> q_dims;       // dimensions holding Q-values
    double q_alpha = 0.0;          // independent Q learning rate; 0 disables
};

/// Incremental Gaussian mixture over joint input-output vectors.
/// Single writer; the read-only queries may run concurrently with each
/// other but not with learn/create/prune.
class Mixture {
public:
    Mixture(int dim, MixtureConfig config);

    int dimension() const { return dim_; }
    std::size_t size() const { return components_.size(); }
    bool empty() const { return components_.empty(); }
    const GaussianComponent& component(std::size_t j) const { return components_[j]; }
    const std::vector<GaussianComponent>& components() const { return components_; }
    const MixtureConfig& config() const { return config_; }
    const Chi2Threshold& chi2() const { return chi2_full_; }

    void set_q_alpha(double alpha) { config_.q_alpha = alpha; }

    /// Normalized p(j|x) for a fully observed vector. All-zero products
    /// fall back to a hard assignment to the nearest component.
    std::vector<double> posteriors(std::span<const double> x) const;

    /// One online step: creation test on the known dimensions, then
    /// either a component update or a new component.
    void learn(const MaskedVector& x);
    void learn(const Vector& x);

    /// Applies the update equations to every component with the given
    /// posteriors, then renormalizes priors.
    void update_components(const Vector& x, const std::vector<double>& posteriors);

    /// Appends a component centered at x and recomputes all priors.
    void create(const Vector& x);

    /// Removes components with age > v_min and sp < sp_min. No-op unless
    /// pruning is enabled.
    void prune();

    /// Conditional-mean prediction of the unknown dimensions given the
    /// known ones, weighted by masked posteriors.
    Vector infer(const MaskedVector& x) const;

    /// x with unknown dimensions filled by the model's prediction.
    Vector impute(const MaskedVector& x) const;

    /// Creation threshold for a vector with `dof` known dimensions,
    /// cached per dof. Only the writer path touches the cache.
    double chi2_threshold(int dof) const;

    void save(std::ostream& out) const;
    static Mixture load(std::istream& in);

private:
    // Per-component products of the known/unknown split of Algorithm 4.
    struct ConditionalView {
        double dist_sq = 0.0;   // Mahalanobis over known dims
        double known_det = 0.0; // |Sigma_i|
        Vector cond_mean;       // conditional mean of unknown dims
    };

    ConditionalView conditional_view(const GaussianComponent& comp, const MaskedVector& x,
                                     std::span<const int> known, std::span<const int> unknown) const;

    std::vector<double> masked_posteriors(const std::vector<ConditionalView>& views,
                                          std::size_t n_known) const;

    void update_component(GaussianComponent& comp, std::span<const double> x, double posterior);
    void renormalize_priors();
    void reset_component_shape(GaussianComponent& comp);

    int dim_ = 0;
    MixtureConfig config_;
    Chi2Threshold chi2_full_;
    std::vector<GaussianComponent> components_;
    std::vector<bool> q_mask_;
    mutable std::map<int, double> chi2_cache_;
};

void save_model(const Mixture& m, const std::string& path);
Mixture load_model(const std::string& path);

}  // namespace figmn

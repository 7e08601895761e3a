#pragma once

#include <cstdint>
#include <vector>

#include "streplica/common.hpp"
#include "streplica/rng.hpp"

namespace streplica {

// Two-component spherical Gaussian mixture with centroids at +-v/sqrt(N),
// v = (1,...,1)^T. The labeled and unlabeled domains each carry a cluster
// fraction rho, a per-coordinate noise variance delta and a sample ratio
// alpha (M = round(alpha * N)).
struct MixtureConfig {
    int n_dim = 0;          // N
    double rho_l = 0.5;     // labeled cluster fraction, in (0, 0.5]
    double rho_u = 0.5;     // unlabeled cluster fraction, in (0, 0.5]
    double delta_l = 1.0;   // labeled noise variance
    double delta_u = 1.0;   // unlabeled noise variance
    double alpha_l = 1.0;   // M_L / N
    double alpha_u = 1.0;   // M_U / N
    int n_batches = 0;      // T

    int m_labeled() const { return static_cast<int>(std::llround(alpha_l * n_dim)); }
    int m_unlabeled() const { return static_cast<int>(std::llround(alpha_u * n_dim)); }

    void validate() const {
        require(n_dim > 0, "n_dim must be positive");
        require(rho_l > 0.0 && rho_l <= 0.5, "rho_l must lie in (0, 0.5]");
        require(rho_u > 0.0 && rho_u <= 0.5, "rho_u must lie in (0, 0.5]");
        require(delta_l > 0.0, "delta_l must be positive");
        require(delta_u > 0.0, "delta_u must be positive");
        require(alpha_l > 0.0, "alpha_l must be positive");
        require(alpha_u > 0.0, "alpha_u must be positive");
        require(n_batches >= 0, "n_batches must be non-negative");
        require(m_labeled() > 0, "alpha_l * n_dim rounds to zero samples");
    }
};

enum class DatasetDomain { labeled, unlabeled_batch };

// Row-major M x N feature matrix plus labels. For unlabeled batches the
// ground-truth labels are retained for evaluation only; the fitting code
// never reads them.
class Dataset {
  public:
    Dataset(int m, int n, DatasetDomain domain, int batch_index)
        : m_(m), n_(n), domain_(domain), batch_index_(batch_index),
          features_(static_cast<std::size_t>(m) * n), labels_(m) {}

    int rows() const { return m_; }
    int cols() const { return n_; }
    DatasetDomain domain() const { return domain_; }
    int batch_index() const { return batch_index_; }

    const double* row(int i) const { return features_.data() + static_cast<std::size_t>(i) * n_; }
    double* mutable_row(int i) { return features_.data() + static_cast<std::size_t>(i) * n_; }
    const std::vector<double>& features() const { return features_; }

    // Training labels; only legal for the labeled domain.
    const std::vector<int>& labels() const {
        if (domain_ != DatasetDomain::labeled)
            throw std::logic_error("training labels of an unlabeled batch are hidden; "
                                   "use ground_truth_for_eval()");
        return labels_;
    }

    // Evaluation-only access to hidden ground truth (error audits, logit
    // coloring). Must never feed a fit.
    const std::vector<int>& ground_truth_for_eval() const { return labels_; }

    std::vector<int>& mutable_labels() { return labels_; }

  private:
    int m_, n_;
    DatasetDomain domain_;
    int batch_index_;
    std::vector<double> features_;
    std::vector<int> labels_;
};

namespace detail {

inline void fill_rows(Dataset& ds, const MixtureConfig& cfg, double rho, double delta, Rng& rng) {
    const int n = ds.cols();
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
    const double sd = std::sqrt(delta);
    for (int i = 0; i < ds.rows(); ++i) {
        const int y = rng.next_bernoulli(rho) ? 1 : 0;
        ds.mutable_labels()[i] = y;
        const double mean = (2 * y - 1) * inv_sqrt_n;
        double* r = ds.mutable_row(i);
        for (int j = 0; j < n; ++j) r[j] = mean + sd * rng.next_normal();
    }
    (void)cfg;
}

} // namespace detail

inline Dataset sample_labeled(const MixtureConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Dataset ds(cfg.m_labeled(), cfg.n_dim, DatasetDomain::labeled, -1);
    Rng rng(seed, "labeled");
    detail::fill_rows(ds, cfg, cfg.rho_l, cfg.delta_l, rng);
    return ds;
}

// Batch index t runs 1..T; each batch draws from its own stream so batches
// are independent and reproducible in isolation.
inline Dataset sample_unlabeled_batch(const MixtureConfig& cfg, int t, std::uint64_t seed) {
    cfg.validate();
    require(t >= 1 && t <= cfg.n_batches, "unlabeled batch index t must lie in [1, T]");
    Dataset ds(cfg.m_unlabeled(), cfg.n_dim, DatasetDomain::unlabeled_batch, t);
    Rng rng(seed, "unlabeled", static_cast<std::uint64_t>(t));
    detail::fill_rows(ds, cfg, cfg.rho_u, cfg.delta_u, rng);
    return ds;
}

} // namespace streplica

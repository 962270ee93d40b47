#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "vcmi/matrix.hpp"
#include "vcmi/rng.hpp"

namespace vcmi::copula {

// Component parameterization. Constrained keeps mu = 0 and identity diagonal
// blocks (a vector Gaussian copula on already-uniform block ranks);
// unconstrained lets mean and full covariance float to absorb residual
// marginal misfit in the rank lattice.
enum class Mode { constrained, unconstrained };

const char* mode_name(Mode m);
Mode mode_from_name(const std::string& s);

struct EmConfig {
    int max_iters = 500;
    double tol = 1e-5;       // stop when mean train log-likelihood gains less
    int restarts = 5;        // k-means++ initializations, best final LL kept
    int kmeans_iters = 25;
    double eig_floor = 1e-6; // smallest admissible covariance eigenvalue
    double reg = 1e-4;       // diagonal boost for starving components
    double prune = 1e-4;     // drop weights below this at convergence
};

struct Component {
    std::vector<double> mu;
    Matrix sigma;
};

struct FitInfo {
    double train_ll = 0.0;   // mean copula log-density over training rows
    int iters = 0;
    int restarts_used = 0;
    std::vector<double> ll_trace;  // E-step mean LL per iteration (best restart)
};

struct CopulaModel {
    Mode mode = Mode::unconstrained;
    int dx = 0;
    int dy = 0;
    std::vector<double> weights;
    std::vector<Component> comps;
    FitInfo fit;

    int dim() const { return dx + dy; }
    int k() const { return static_cast<int>(weights.size()); }
};

// Log density of the mixture copula at one rank vector (dim() entries, each
// strictly inside (0,1)).
double mixture_log_density(const CopulaModel& m, const double* u);

// Batched log densities over the rows of U.
std::vector<double> mixture_log_density_rows(const CopulaModel& m, const Matrix& U);

// Mean mixture log-density over the rows of U: the entropy-based mutual
// information value of the fitted copula.
double copula_entropy_estimate(const CopulaModel& m, const Matrix& U);

// Posterior component responsibilities for each rank row; rows sum to 1.
Matrix component_responsibilities(const CopulaModel& m, const Matrix& U);

// n rank vectors drawn from the model.
Matrix sample_copula(const CopulaModel& m, int n, Rng& rng);

// Maximum-likelihood mixture fit in the Gaussian latent space of the ranks:
// z = gauss_quantile(u) column-wise, EM over K components, k-means++ restarts.
// Requires n > 10*K. The uniform base density is component-independent, so
// z-space responsibilities equal copula-space responsibilities.
CopulaModel fit_copula_mle(const Matrix& U, int dx, int dy, int K, Mode mode,
                           const EmConfig& cfg, uint64_t seed);

struct LadderEntry {
    int K = 0;
    bool fitted = false;
    std::string skip_reason;
    double train_ll = 0.0;
    double val_ll = 0.0;
};

struct Selection {
    CopulaModel model;
    double val_ll = 0.0;
    std::vector<LadderEntry> ladder;
};

// Fits each ladder entry on a seeded 80/20 split of the rank rows and keeps
// the model with the best validation mean log-likelihood. Walks the ladder in
// order and stops after the first entry that fails to improve, unless fit_all
// is set (ablation mode fits every entry). Entries whose K violates
// n_train > 10*K are skipped with a reason.
Selection select_copula(const Matrix& U, int dx, int dy,
                        const std::vector<int>& ladder, Mode mode,
                        const EmConfig& cfg, uint64_t seed, bool fit_all = false);

// Structured text serialization; floats carry 17 significant digits so a
// save/load cycle reproduces the model bit-for-bit, fit metadata included.
void save_copula(std::ostream& out, const CopulaModel& m);
CopulaModel load_copula(std::istream& in);

}  // namespace vcmi::copula

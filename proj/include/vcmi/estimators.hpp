#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vcmi/copula.hpp"
#include "vcmi/flow.hpp"
#include "vcmi/matrix.hpp"

namespace vcmi::estimators {

enum class Kind { vce, vce_prime, gauss_copula, dv_mine, infonce, smile };

const char* kind_name(Kind k);
Kind kind_from_name(const std::string& s);

// ----- shared flow + rank front end ---------------------------------------

// Gaussianize each variable block with its own flow, then take element-wise
// empirical ranks of the concatenated encodings. The rank matrix is the
// common input of the copula-based estimators; the diagnostics quantify how
// much work the downstream copula model still has to do.
struct RankPipelineResult {
    int dx = 0;
    int dy = 0;
    Matrix u;            // n x (dx+dy) empirical ranks of the encoded blocks
    flow::FlowModel flow_x;
    flow::FlowModel flow_y;
    double t_stat_x = 0.0;  // residual within-block rank dependence
    double t_stat_y = 0.0;
    double flow_rt_x = 0.0;  // max abs decode(encode(.)) error on probe rows
    double flow_rt_y = 0.0;
    double wall_seconds = 0.0;
};

RankPipelineResult flow_rank_pipeline(const Matrix& X, const Matrix& Y,
                                      const flow::FlowConfig& cfg, uint64_t seed,
                                      int probe_rows = 256);

// ----- copula-entropy estimator (mixture model on ranks) -------------------

struct VceConfig {
    flow::FlowConfig flow;
    copula::EmConfig em;
    std::vector<int> k_ladder = {1, 4, 8, 16, 32};
    copula::Mode mode = copula::Mode::unconstrained;
    bool fit_all_k = false;   // ablation: fit every rung instead of stopping
    double t_warn = 0.2;      // residual-dependence warning threshold
    int probe_rows = 256;     // rows used for flow round-trip diagnostics
};

struct VceResult {
    double mi = 0.0;     // mean mixture copula log-density over all rank rows
    int selected_k = 0;  // ladder rung that won validation likelihood
    double val_ll = 0.0; // its validation mean log-likelihood (held-out MI)
    copula::CopulaModel model;
    std::vector<copula::LadderEntry> ladder;
    RankPipelineResult ranks;
    double wall_seconds = 0.0;
    std::vector<std::string> warnings;
};

// Copula stage only, on a precomputed rank pipeline output. `seed` must be
// the same master seed handed to the pipeline for the two-stage path to be
// bit-identical with vce_estimate.
VceResult vce_from_ranks(const RankPipelineResult& pipe, const VceConfig& cfg,
                         uint64_t seed);

VceResult vce_estimate(const Matrix& X, const Matrix& Y, const VceConfig& cfg,
                       uint64_t seed);

// ----- classifier variant on the same ranks --------------------------------

struct PrimeConfig {
    flow::FlowConfig flow;
    int hidden_width = 256;
    int hidden_layers = 3;
    double lr = 5e-4;
    int batch = 512;
    int max_epochs = 60;
    int patience = 8;
    double val_fraction = 0.2;
    int probe_rows = 256;
};

struct PrimeResult {
    double mi = 0.0;          // mean logit over all data rank rows
    double best_val_loss = 0.0;
    int epochs = 0;
    RankPipelineResult ranks;
    double wall_seconds = 0.0;
    std::vector<std::string> warnings;
};

// Trains a logistic classifier separating rank rows from i.i.d. uniform
// vectors; its logit estimates the log copula density.
PrimeResult vce_prime_from_ranks(const RankPipelineResult& pipe,
                                 const PrimeConfig& cfg, uint64_t seed);

PrimeResult vce_prime_estimate(const Matrix& X, const Matrix& Y,
                               const PrimeConfig& cfg, uint64_t seed);

// ----- closed-form Gaussian copula baseline --------------------------------

// Ranks of the raw columns (no flows), Gaussian scores, and the Gaussian MI
// formula 0.5*(logdet Rxx + logdet Ryy - logdet R) on their correlation
// matrix. Exactly invariant under strictly monotone per-column transforms.
double gaussian_copula_mi(const Matrix& X, const Matrix& Y);

// ----- variational critic baselines ----------------------------------------

struct CriticConfig {
    int hidden_width = 256;
    int hidden_layers = 3;
    double lr = 5e-4;
    int batch = 512;
    int max_epochs = 60;
    int patience = 8;
    double val_fraction = 0.2;
    double smile_tau = 5.0;  // log-ratio clip of the smile estimator
};

struct CriticResult {
    double mi = 0.0;  // held-out objective value of the best critic
    double best_val_objective = 0.0;
    int epochs = 0;
    double wall_seconds = 0.0;
    std::vector<std::string> warnings;
};

// kind must be dv_mine, infonce, or smile.
CriticResult critic_estimate(Kind kind, const Matrix& X, const Matrix& Y,
                             const CriticConfig& cfg, uint64_t seed);

// ----- uniform entry point for the CLI -------------------------------------

struct EstimatorConfig {
    VceConfig vce;
    PrimeConfig prime;
    CriticConfig critic;
};

struct EstimateOutcome {
    double mi = 0.0;
    int selected_k = -1;       // -1 when the estimator has no model selection
    double val_metric = 0.0;   // validation mean LL / loss / objective
    bool has_val_metric = false;
    double wall_seconds = 0.0;
    std::vector<std::string> warnings;
};

EstimateOutcome estimate_mi(Kind kind, const Matrix& X, const Matrix& Y,
                            const EstimatorConfig& cfg, uint64_t seed);

}  // namespace vcmi::estimators

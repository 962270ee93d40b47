#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vcmi/matrix.hpp"

namespace vcmi::bench {

// Base joint distributions the synthetic tasks draw from.
enum class Base { gaussian, student_t, mog1, mog2 };

// Per-block diffeomorphisms applied after the base draw. They never change
// the mutual information, so every transformed task inherits its base task's
// ground truth exactly.
//   tanh_exp   : x_j -> tanh(x_j), y_j -> exp(y_j)
//   cube       : elementwise v -> v^3 on both blocks
//   spiral     : consecutive coordinate pairs within each block are rotated
//                by an angle equal to their radius (a volume-preserving twist);
//                needs at least two coordinates per block
//   swiss_roll : each scalar is placed on the spiral (t cos t, t sin t) and
//                re-parameterized by signed arclength s(t) = (t*sqrt(1+t^2)
//                + asinh(t))/2, a strictly increasing map; blocks are 1-D
enum class Transform { none, tanh_exp, cube, spiral, swiss_roll };

// Optional invertible mixing applied last: a seeded orthogonal matrix times a
// diagonal scale in [0.8, 1.25], so the condition number is at most 1.5625.
enum class Mixing { identity, rotation };

const char* base_name(Base b);
const char* transform_name(Transform t);
const char* mixing_name(Mixing m);

// One synthetic estimation task. d_x() == d_y() == pairs: coordinate j of X
// is coupled with coordinate j of Y by the base joint.
//   gaussian  : per-pair correlation rho
//   student_t : the same correlated Gaussian divided by a shared
//               sqrt(chi^2_nu / nu) variable (one per sample row)
//   mog1      : equal mixture of two zero-mean components with per-pair
//               cross-correlation +0.75 and -0.75; block marginals are
//               exactly standard normal and the overall correlation is zero
//   mog2      : equal mixture of four components with means (+-1, +-1) per
//               pair and cross-correlation +0.6 for aligned signs, -0.6 for
//               opposed signs; block marginals are two-component mixtures
struct BenchmarkTask {
    std::string family;  // report label; sweep family or the spec's leading token
    Base base = Base::gaussian;
    int pairs = 1;
    double rho = 0.0;  // gaussian / student_t only
    double nu = 3.0;   // student_t only
    Transform transform = Transform::none;
    Mixing mixing = Mixing::identity;

    int d_x() const { return pairs; }
    int d_y() const { return pairs; }
    // Canonical, parsable description, e.g. "gaussian:d=8:rho=0.6:tf=cube:mix=rot".
    std::string spec() const;
    // Truth identity: base distribution parameters only. Transform and mixing
    // do not appear, so transformed tasks share the stored ground truth with
    // their base task bit for bit.
    std::string base_key() const;
};

struct PairedDataset {
    Matrix x, y;
};

struct GroundTruth {
    double value = 0.0;
    double sigma = 0.0;    // standard error; 0 for analytic truths
    bool analytic = true;  // false => Monte-Carlo oracle
    long samples = 0;      // oracle sample count (0 for analytic)
};

// Parses a task spec string: "<family>[:key=value]...". Families: gaussian,
// student, mog1, mog2, plus transform shorthands tanh-exp, cube, spiral,
// swiss-roll (Gaussian base with that transform). Keys: d (per-block
// dimension), rho, nu (student only), tf (none|tanh-exp|cube|spiral|
// swiss-roll), mix (none|rot). Unknown families, unknown keys, malformed or
// out-of-range values throw TaskError.
BenchmarkTask task_from_spec(const std::string& spec);

// Validates a task's field combination (ranges, transform arity); throws
// TaskError on violations. task_from_spec and paper_sweep call it themselves.
void validate_task(const BenchmarkTask& t);

// Draws n paired rows. Bit-deterministic: one seed gives one dataset,
// independent of the transform (the base draw order is fixed), so transformed
// tasks are elementwise transforms of their base task's samples.
PairedDataset sample_task(const BenchmarkTask& t, int n, uint64_t seed);

// The mixing matrix a task applies to block 'x' or 'y' (identity tasks get
// the identity). Deterministic in the task's base_key and the block label.
Matrix mixing_matrix(const BenchmarkTask& t, char block);

bool has_analytic_truth(const BenchmarkTask& t);

// Monte-Carlo oracle: mean of log p(x,y) - log p(x) - log p(y) over `samples`
// fresh base draws, all densities in closed form. Available for every base
// family; `samples` >= 2. The returned sigma is the standard error.
GroundTruth mc_oracle(const BenchmarkTask& t, long samples, uint64_t seed);

// Ground truth with provenance. Gaussian-based tasks are analytic:
// I = pairs * (-log(1 - rho^2) / 2). Student-t and mixture tasks run the
// Monte-Carlo oracle with a seed derived from base_key(), so repeated calls
// and transformed variants return the same stored number exactly.
// oracle_samples must be >= 1e6 (the oracle floor for reported truths).
GroundTruth ground_truth_mi(const BenchmarkTask& t, long oracle_samples = 1000000);

// Predefined sweep grids mirroring the evaluation figures, at desk scale.
// Dimension entries are total dimensions d_x + d_y (even, >= 2); entries
// above dim_cap are dropped. rho entries must lie in (-1, 1).
struct SweepSpec {
    std::string family;
    std::vector<double> rho_grid = {0.2, 0.4, 0.6, 0.8};
    std::vector<int> dim_grid = {2, 4, 8, 16};  // total dimension per task
    int dim_cap = 16;
    bool mixed = true;  // seeded rotation mixing on families that allow it
};

// Families: rho sweeps at fixed dimension — "gaussian-rho" (16-D total at the
// default cap), "tanh-exp-rho", "cube-rho", "student-rho" (nu=3),
// "swiss-roll-rho" (2-D total); dimension sweeps at rho 0.6 — "spiral-dim",
// "cube-dim", "student-dim"; and mixture dimension sweeps "mog-dim" (mog1),
// "mog2-dim". Unknown family names throw TaskError.
std::vector<BenchmarkTask> paper_sweep(const SweepSpec& spec);

std::vector<std::string> sweep_family_names();

}  // namespace vcmi::bench

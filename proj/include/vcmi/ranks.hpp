#pragma once

#include <string>
#include <vector>

#include "vcmi/matrix.hpp"

namespace vcmi::ranks {

// Standard normal CDF, absolute error < 1e-10 over |z| <= 8.
double gauss_cdf(double z);

// Standard normal quantile (AS241 rational approximation plus one Newton
// refinement against gauss_cdf). Domain is the open interval (0,1).
double gauss_quantile(double p);

// Empirical rank transform of one column:
//   r_i = (1/(n+1)) * #{ j : x_i >= x_j }.
// Ties share the count of their tie group, so outputs lie exactly on the
// lattice {1,...,n}/(n+1). Inputs must be finite, n >= 1.
std::vector<double> empirical_rank(const std::vector<double>& x);

// Column-wise empirical ranks of a latent matrix.
struct RankMatrix {
    Matrix u;
    std::vector<std::string> labels;
};
RankMatrix compute_vector_ranks(const Matrix& latents);

// Residual cross-dimension dependence of a rank matrix: correlation matrix of
// gauss_quantile(u) with the 5% / 95% quantiles of its off-diagonal entries.
// t_stat = max(|q05|, |q95|); 0 for a single column. Requires n >= 2 columns
// of nonzero variance.
struct RankDiagnostics {
    Matrix corr;
    double q05 = 0.0;
    double q95 = 0.0;
    double t_stat = 0.0;
};
RankDiagnostics rank_diagnostics(const Matrix& u);

}  // namespace vcmi::ranks

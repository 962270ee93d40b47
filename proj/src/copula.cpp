#include "vcmi/copula.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "vcmi/errors.hpp"
#include "vcmi/kernels.hpp"
#include "vcmi/ranks.hpp"
#include "vcmi/textio.hpp"

namespace vcmi::copula {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using EMat = Eigen::MatrixXd;

EMat to_eigen(const Matrix& m) {
    EMat e(m.rows, m.cols);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) e(i, j) = m.at(i, j);
    return e;
}

Matrix from_eigen(const EMat& e) {
    Matrix m(static_cast<int>(e.rows()), static_cast<int>(e.cols()));
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) m.at(i, j) = e(i, j);
    return m;
}

Matrix latent_from_ranks(const Matrix& U) {
    if (U.rows < 1 || U.cols < 1) throw ShapeError("rank matrix is empty");
    Matrix Z(U.rows, U.cols);
    const double* src = U.data();
    double* dst = Z.data();
    const size_t total = U.size();
    for (size_t i = 0; i < total; ++i) dst[i] = ranks::gauss_quantile(src[i]);
    return Z;
}

void validate_model(const CopulaModel& m) {
    const int d = m.dim();
    if (m.dx < 1 || m.dy < 1) throw ShapeError("copula blocks must be nonempty");
    if (m.k() < 1) throw ShapeError("copula model has no components");
    if (m.comps.size() != m.weights.size())
        throw ShapeError("copula weights/components length mismatch");
    double wsum = 0.0;
    for (double w : m.weights) {
        if (!std::isfinite(w) || w < 0.0) throw DataError("copula weight is invalid");
        wsum += w;
    }
    if (wsum <= 0.0) throw DataError("copula weights sum to zero");
    for (const Component& c : m.comps) {
        if (static_cast<int>(c.mu.size()) != d || c.sigma.rows != d || c.sigma.cols != d)
            throw ShapeError("copula component dimensions mismatch");
    }
}

// Per-component quantities needed to score latent rows: precision matrix,
// log-determinant, log-weight.
struct CompCache {
    std::vector<double> mu;
    Matrix inv;
    double logdet = 0.0;
    double logw = kNegInf;
};

std::vector<CompCache> build_cache(const CopulaModel& m) {
    validate_model(m);
    const int d = m.dim();
    std::vector<CompCache> cache(m.comps.size());
    for (size_t k = 0; k < m.comps.size(); ++k) {
        const Component& c = m.comps[k];
        Eigen::LLT<EMat> llt(to_eigen(c.sigma));
        if (llt.info() != Eigen::Success)
            throw FitError("copula component covariance is not positive definite");
        double logdet = 0.0;
        const EMat L = llt.matrixL();
        for (int i = 0; i < d; ++i) logdet += 2.0 * std::log(L(i, i));
        cache[k].mu = c.mu;
        cache[k].inv = from_eigen(llt.solve(EMat::Identity(d, d)));
        cache[k].logdet = logdet;
        cache[k].logw = m.weights[k] > 0.0 ? std::log(m.weights[k]) : kNegInf;
    }
    return cache;
}

// scores(i,k) = log w_k + log N(z_i; mu_k, Sigma_k). Scratch matrices are
// caller-owned so EM can reuse them across iterations.
void component_scores(const std::vector<CompCache>& cache, const Matrix& Z,
                      Matrix& zc, Matrix& wbuf, std::vector<double>& quad,
                      Matrix& scores) {
    const auto& kt = kernels::active();
    const int n = Z.rows;
    const int d = Z.cols;
    const int K = static_cast<int>(cache.size());
    for (int k = 0; k < K; ++k) {
        const CompCache& cc = cache[k];
        for (int i = 0; i < n; ++i) {
            const double* z = Z.row(i);
            double* o = zc.row(i);
            for (int j = 0; j < d; ++j) o[j] = z[j] - cc.mu[j];
        }
        kt.gemm_nn(n, d, d, zc.data(), cc.inv.data(), wbuf.data(), false);
        kt.rowdot(n, d, wbuf.data(), zc.data(), quad.data());
        const double base = cc.logw - 0.5 * (d * kLog2Pi + cc.logdet);
        for (int i = 0; i < n; ++i) scores.at(i, k) = base - 0.5 * quad[i];
    }
}

// Copula log-density per row from the score matrix; optionally normalizes the
// scores in place into posterior responsibilities.
std::vector<double> density_from_scores(const Matrix& Z, Matrix& scores,
                                        bool make_resp) {
    const auto& kt = kernels::active();
    const int n = Z.rows;
    const int d = Z.cols;
    const int K = scores.cols;
    std::vector<double> out(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double* s = scores.row(i);
        double mx = s[0];
        for (int k = 1; k < K; ++k) mx = std::max(mx, s[k]);
        if (!std::isfinite(mx)) throw FitError("copula density underflowed");
        double acc = 0.0;
        for (int k = 0; k < K; ++k) acc += std::exp(s[k] - mx);
        const double lse = mx + std::log(acc);
        const double sumsq = kt.dot(Z.row(i), Z.row(i), d);
        out[static_cast<size_t>(i)] = lse + 0.5 * (d * kLog2Pi + sumsq);
        if (make_resp) {
            double* r = scores.row(i);
            for (int k = 0; k < K; ++k) r[k] = std::exp(s[k] - lse);
        }
    }
    return out;
}

double mean_of(const std::vector<double>& v) {
    const auto& kt = kernels::active();
    return kt.reduce_sum(v.data(), static_cast<int>(v.size())) /
           static_cast<double>(v.size());
}

// Projects a raw covariance update onto the admissible set of its mode.
// Constrained: unit-diagonal blocks with the cross block shrunk so the
// smallest eigenvalue 1 - sigma_max(C) stays at or above the floor.
// Unconstrained: eigenvalue clamp, applied only when it binds so an exact
// MLE update passes through untouched.
void project_sigma(Matrix& sigma, Mode mode, int dx, double eig_floor, double reg,
                   bool starving) {
    const int d = sigma.rows;
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            const double v = 0.5 * (sigma.at(i, j) + sigma.at(j, i));
            sigma.at(i, j) = v;
            sigma.at(j, i) = v;
        }
    if (starving)
        for (int i = 0; i < d; ++i) sigma.at(i, i) += reg;

    if (mode == Mode::constrained) {
        const int dy = d - dx;
        std::vector<double> s(static_cast<size_t>(d));
        for (int i = 0; i < d; ++i) {
            double v = sigma.at(i, i);
            if (!(v > 1e-12)) v = 1e-12;
            s[static_cast<size_t>(i)] = 1.0 / std::sqrt(v);
        }
        EMat C(dx, dy);
        for (int i = 0; i < dx; ++i)
            for (int j = 0; j < dy; ++j)
                C(i, j) = sigma.at(i, dx + j) * s[static_cast<size_t>(i)] *
                          s[static_cast<size_t>(dx + j)];
        // Spectrum of [[I, C], [C^T, I]] is 1 +/- singular values of C (plus
        // ones), so capping sigma_max enforces the eigenvalue floor while
        // keeping the diagonal blocks exactly identity.
        Eigen::JacobiSVD<EMat> svd(C);
        const double smax = svd.singularValues()(0);
        if (smax > 1.0 - eig_floor) C *= (1.0 - eig_floor) / smax;
        sigma.set_zero();
        for (int i = 0; i < d; ++i) sigma.at(i, i) = 1.0;
        for (int i = 0; i < dx; ++i)
            for (int j = 0; j < dy; ++j) {
                sigma.at(i, dx + j) = C(i, j);
                sigma.at(dx + j, i) = C(i, j);
            }
    } else {
        Eigen::SelfAdjointEigenSolver<EMat> es(to_eigen(sigma));
        if (es.info() != Eigen::Success)
            throw FitError("covariance eigendecomposition failed");
        if (es.eigenvalues()(0) < eig_floor) {
            Eigen::VectorXd lam = es.eigenvalues().cwiseMax(eig_floor);
            EMat fixed = es.eigenvectors() * lam.asDiagonal() *
                         es.eigenvectors().transpose();
            fixed = 0.5 * (fixed + fixed.transpose()).eval();
            sigma = from_eigen(fixed);
        }
    }
}

// k-means++ seeding plus Lloyd iterations; returns the hard assignment.
std::vector<int> kmeans_assign(const Matrix& Z, int K, int iters, Rng& rng) {
    const auto& kt = kernels::active();
    const int n = Z.rows;
    const int d = Z.cols;
    std::vector<double> znorm(static_cast<size_t>(n));
    kt.rowdot(n, d, Z.data(), Z.data(), znorm.data());

    Matrix centers(K, d);
    std::vector<double> cnorm(static_cast<size_t>(K), 0.0);
    std::vector<double> mind(static_cast<size_t>(n),
                             std::numeric_limits<double>::max());
    auto place_center = [&](int k, int row) {
        std::copy(Z.row(row), Z.row(row) + d, centers.row(k));
        cnorm[static_cast<size_t>(k)] = znorm[static_cast<size_t>(row)];
    };
    place_center(0, rng.uniform_int(n));
    for (int k = 1; k < K; ++k) {
        const double* c = centers.row(k - 1);
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            const double dist =
                std::max(0.0, znorm[static_cast<size_t>(i)] -
                                  2.0 * kt.dot(Z.row(i), c, d) +
                                  cnorm[static_cast<size_t>(k - 1)]);
            mind[static_cast<size_t>(i)] = std::min(mind[static_cast<size_t>(i)], dist);
            total += mind[static_cast<size_t>(i)];
        }
        int pick = n - 1;
        if (total > 0.0) {
            double r = rng.uniform() * total;
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                acc += mind[static_cast<size_t>(i)];
                if (r < acc) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.uniform_int(n);
        }
        place_center(k, pick);
    }

    std::vector<int> assign(static_cast<size_t>(n), 0);
    Matrix dots(n, K);
    std::vector<double> rowdist(static_cast<size_t>(n));
    for (int it = 0; it < iters; ++it) {
        kt.gemm_nt(n, K, d, Z.data(), centers.data(), dots.data(), false);
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            const double* dr = dots.row(i);
            int bk = 0;
            double bd = znorm[static_cast<size_t>(i)] - 2.0 * dr[0] + cnorm[0];
            for (int k = 1; k < K; ++k) {
                const double dist = znorm[static_cast<size_t>(i)] - 2.0 * dr[k] +
                                    cnorm[static_cast<size_t>(k)];
                if (dist < bd) {
                    bd = dist;
                    bk = k;
                }
            }
            rowdist[static_cast<size_t>(i)] = std::max(0.0, bd);
            if (assign[static_cast<size_t>(i)] != bk) {
                assign[static_cast<size_t>(i)] = bk;
                changed = true;
            }
        }
        centers.set_zero();
        std::vector<int> counts(static_cast<size_t>(K), 0);
        for (int i = 0; i < n; ++i) {
            const int k = assign[static_cast<size_t>(i)];
            counts[static_cast<size_t>(k)]++;
            kt.axpy(d, 1.0, Z.row(i), centers.row(k));
        }
        for (int k = 0; k < K; ++k) {
            if (counts[static_cast<size_t>(k)] > 0) {
                const double inv = 1.0 / counts[static_cast<size_t>(k)];
                double* c = centers.row(k);
                for (int j = 0; j < d; ++j) c[j] *= inv;
            } else {
                // Re-seed an empty cluster on the row farthest from its center.
                int far = 0;
                for (int i = 1; i < n; ++i)
                    if (rowdist[static_cast<size_t>(i)] > rowdist[static_cast<size_t>(far)])
                        far = i;
                std::copy(Z.row(far), Z.row(far) + d, centers.row(k));
                rowdist[static_cast<size_t>(far)] = 0.0;
                changed = true;
            }
            cnorm[static_cast<size_t>(k)] = kt.dot(centers.row(k), centers.row(k), d);
        }
        if (!changed) break;
    }
    return assign;
}

CopulaModel init_from_assignment(const Matrix& Z, const std::vector<int>& assign,
                                 int dx, int K, Mode mode, const EmConfig& cfg) {
    const int n = Z.rows;
    const int d = Z.cols;
    CopulaModel m;
    m.mode = mode;
    m.dx = dx;
    m.dy = d - dx;
    m.weights.assign(static_cast<size_t>(K), 0.0);
    m.comps.assign(static_cast<size_t>(K), Component{});

    std::vector<int> counts(static_cast<size_t>(K), 0);
    for (int i = 0; i < n; ++i) counts[static_cast<size_t>(assign[static_cast<size_t>(i)])]++;

    for (int k = 0; k < K; ++k) {
        Component& c = m.comps[static_cast<size_t>(k)];
        c.mu.assign(static_cast<size_t>(d), 0.0);
        c.sigma = Matrix(d, d);
        const int nk = counts[static_cast<size_t>(k)];
        m.weights[static_cast<size_t>(k)] = static_cast<double>(nk) / n;
        if (nk == 0) {
            for (int i = 0; i < d; ++i) c.sigma.at(i, i) = 1.0;
            continue;
        }
        if (mode == Mode::unconstrained) {
            for (int i = 0; i < n; ++i) {
                if (assign[static_cast<size_t>(i)] != k) continue;
                const double* z = Z.row(i);
                for (int j = 0; j < d; ++j) c.mu[static_cast<size_t>(j)] += z[j];
            }
            for (int j = 0; j < d; ++j) c.mu[static_cast<size_t>(j)] /= nk;
        }
        for (int i = 0; i < n; ++i) {
            if (assign[static_cast<size_t>(i)] != k) continue;
            const double* z = Z.row(i);
            for (int a = 0; a < d; ++a) {
                const double za = z[a] - c.mu[static_cast<size_t>(a)];
                for (int b = a; b < d; ++b) {
                    const double zb = z[b] - c.mu[static_cast<size_t>(b)];
                    c.sigma.at(a, b) += za * zb;
                }
            }
        }
        for (int a = 0; a < d; ++a)
            for (int b = a; b < d; ++b) {
                const double v = c.sigma.at(a, b) / nk;
                c.sigma.at(a, b) = v;
                c.sigma.at(b, a) = v;
            }
        project_sigma(c.sigma, mode, dx, cfg.eig_floor, cfg.reg, nk < d + 1);
    }
    return m;
}

struct EmResult {
    CopulaModel model;
    double ll = kNegInf;
};

EmResult run_em(const Matrix& Z, int dx, int K, Mode mode, const EmConfig& cfg,
                Rng rng) {
    const auto& kt = kernels::active();
    const int n = Z.rows;
    const int d = Z.cols;

    const std::vector<int> assign = kmeans_assign(Z, K, cfg.kmeans_iters, rng);
    CopulaModel model = init_from_assignment(Z, assign, dx, K, mode, cfg);

    Matrix scores(n, K), zc(n, d), wbuf(n, d), zs(n, d), mu_acc(K, d);
    std::vector<double> quad(static_cast<size_t>(n));

    std::vector<double> trace;
    double prev = kNegInf;
    int iters = 0;
    for (int it = 0; it < cfg.max_iters; ++it) {
        const std::vector<CompCache> cache = build_cache(model);
        component_scores(cache, Z, zc, wbuf, quad, scores);
        const std::vector<double> ll_rows = density_from_scores(Z, scores, true);
        const double ll = mean_of(ll_rows);
        trace.push_back(ll);
        iters = it + 1;
        if (it > 0 && ll - prev < cfg.tol) break;
        prev = ll;

        // M-step; `scores` now holds responsibilities.
        std::vector<double> nk(static_cast<size_t>(K), 0.0);
        for (int i = 0; i < n; ++i) {
            const double* r = scores.row(i);
            for (int k = 0; k < K; ++k) nk[static_cast<size_t>(k)] += r[k];
        }
        kt.gemm_tn(K, d, n, scores.data(), Z.data(), mu_acc.data(), false);
        double wsum = 0.0;
        for (int k = 0; k < K; ++k) {
            Component& c = model.comps[static_cast<size_t>(k)];
            const double count = nk[static_cast<size_t>(k)];
            if (!(count > 1e-9)) {
                model.weights[static_cast<size_t>(k)] = 0.0;
                std::fill(c.mu.begin(), c.mu.end(), 0.0);
                c.sigma.set_zero();
                for (int i = 0; i < d; ++i) c.sigma.at(i, i) = 1.0;
                continue;
            }
            model.weights[static_cast<size_t>(k)] = count / n;
            wsum += count / n;
            if (mode == Mode::unconstrained) {
                for (int j = 0; j < d; ++j)
                    c.mu[static_cast<size_t>(j)] = mu_acc.at(k, j) / count;
            }
            for (int i = 0; i < n; ++i) {
                const double w = std::sqrt(scores.at(i, k));
                const double* z = Z.row(i);
                double* o = zs.row(i);
                for (int j = 0; j < d; ++j)
                    o[j] = w * (z[j] - c.mu[static_cast<size_t>(j)]);
            }
            kt.gemm_tn(d, d, n, zs.data(), zs.data(), c.sigma.data(), false);
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) c.sigma.at(a, b) /= count;
            project_sigma(c.sigma, mode, dx, cfg.eig_floor, cfg.reg, count < d + 1);
        }
        if (!(wsum > 0.0)) throw FitError("all mixture components died");
        for (double& w : model.weights) w /= wsum;
    }

    // Drop negligible components, keeping at least the heaviest one.
    std::vector<size_t> keep;
    for (size_t k = 0; k < model.weights.size(); ++k)
        if (model.weights[k] >= cfg.prune) keep.push_back(k);
    if (keep.empty()) {
        size_t best = 0;
        for (size_t k = 1; k < model.weights.size(); ++k)
            if (model.weights[k] > model.weights[best]) best = k;
        keep.push_back(best);
    }
    if (keep.size() != model.weights.size()) {
        std::vector<double> w2;
        std::vector<Component> c2;
        for (size_t k : keep) {
            w2.push_back(model.weights[k]);
            c2.push_back(std::move(model.comps[k]));
        }
        model.weights = std::move(w2);
        model.comps = std::move(c2);
    }
    double wsum = 0.0;
    for (double w : model.weights) wsum += w;
    for (double& w : model.weights) w /= wsum;

    const int kFinal = model.k();
    Matrix fin_scores(n, kFinal);
    const std::vector<CompCache> cache = build_cache(model);
    component_scores(cache, Z, zc, wbuf, quad, fin_scores);
    const double final_ll = mean_of(density_from_scores(Z, fin_scores, false));

    model.fit.train_ll = final_ll;
    model.fit.iters = iters;
    model.fit.ll_trace = std::move(trace);
    return EmResult{std::move(model), final_ll};
}

void validate_em_config(const EmConfig& cfg) {
    if (cfg.max_iters < 1 || cfg.restarts < 1 || cfg.kmeans_iters < 1)
        throw ConfigError("EM iteration/restart counts must be positive");
    if (!(cfg.tol >= 0.0) || !(cfg.eig_floor > 0.0) || !(cfg.eig_floor < 1.0) ||
        !(cfg.reg >= 0.0) || !(cfg.prune >= 0.0) || !(cfg.prune < 1.0))
        throw ConfigError("EM tolerances out of range");
}

}  // namespace

const char* mode_name(Mode m) {
    return m == Mode::constrained ? "constrained" : "unconstrained";
}

Mode mode_from_name(const std::string& s) {
    if (s == "constrained") return Mode::constrained;
    if (s == "unconstrained") return Mode::unconstrained;
    throw ConfigError("unknown copula mode: " + s);
}

std::vector<double> mixture_log_density_rows(const CopulaModel& m, const Matrix& U) {
    if (U.cols != m.dim()) throw ShapeError("rank matrix width != copula dimension");
    if (U.rows == 0) return {};
    const Matrix Z = latent_from_ranks(U);
    const std::vector<CompCache> cache = build_cache(m);
    const int n = U.rows;
    const int d = U.cols;
    Matrix scores(n, m.k()), zc(n, d), wbuf(n, d);
    std::vector<double> quad(static_cast<size_t>(n));
    component_scores(cache, Z, zc, wbuf, quad, scores);
    return density_from_scores(Z, scores, false);
}

double mixture_log_density(const CopulaModel& m, const double* u) {
    Matrix U(1, m.dim());
    std::copy(u, u + m.dim(), U.data());
    return mixture_log_density_rows(m, U)[0];
}

double copula_entropy_estimate(const CopulaModel& m, const Matrix& U) {
    if (U.rows < 1) throw ShapeError("need at least one rank row");
    return mean_of(mixture_log_density_rows(m, U));
}

Matrix component_responsibilities(const CopulaModel& m, const Matrix& U) {
    if (U.cols != m.dim()) throw ShapeError("rank matrix width != copula dimension");
    if (U.rows < 1) throw ShapeError("need at least one rank row");
    const Matrix Z = latent_from_ranks(U);
    const std::vector<CompCache> cache = build_cache(m);
    const int n = U.rows;
    const int d = U.cols;
    Matrix scores(n, m.k()), zc(n, d), wbuf(n, d);
    std::vector<double> quad(static_cast<size_t>(n));
    component_scores(cache, Z, zc, wbuf, quad, scores);
    density_from_scores(Z, scores, true);
    return scores;
}

Matrix sample_copula(const CopulaModel& m, int n, Rng& rng) {
    if (n < 1) throw ShapeError("sample count must be positive");
    validate_model(m);
    const int d = m.dim();
    const int K = m.k();
    double wsum = 0.0;
    for (double w : m.weights) wsum += w;

    std::vector<Matrix> chol(static_cast<size_t>(K));
    for (int k = 0; k < K; ++k) {
        Eigen::LLT<EMat> llt(to_eigen(m.comps[static_cast<size_t>(k)].sigma));
        if (llt.info() != Eigen::Success)
            throw FitError("copula component covariance is not positive definite");
        chol[static_cast<size_t>(k)] = from_eigen(EMat(llt.matrixL()));
    }

    const double u_hi = std::nextafter(1.0, 0.0);
    const double u_lo = 1e-300;
    Matrix out(n, d);
    std::vector<double> g(static_cast<size_t>(d));
    for (int i = 0; i < n; ++i) {
        const double r = rng.uniform() * wsum;
        int k = K - 1;
        double acc = 0.0;
        for (int j = 0; j < K; ++j) {
            acc += m.weights[static_cast<size_t>(j)];
            if (r < acc) {
                k = j;
                break;
            }
        }
        rng.fill_normal(g.data(), d);
        const Component& c = m.comps[static_cast<size_t>(k)];
        const Matrix& L = chol[static_cast<size_t>(k)];
        double* row = out.row(i);
        for (int a = 0; a < d; ++a) {
            double z = c.mu[static_cast<size_t>(a)];
            const double* lr = L.row(a);
            for (int b = 0; b <= a; ++b) z += lr[b] * g[static_cast<size_t>(b)];
            row[a] = std::clamp(ranks::gauss_cdf(z), u_lo, u_hi);
        }
    }
    return out;
}

CopulaModel fit_copula_mle(const Matrix& U, int dx, int dy, int K, Mode mode,
                           const EmConfig& cfg, uint64_t seed) {
    validate_em_config(cfg);
    if (dx < 1 || dy < 1) throw ShapeError("copula blocks must be nonempty");
    if (U.cols != dx + dy) throw ShapeError("rank matrix width != dx + dy");
    if (K < 1) throw ConfigError("component count must be positive");
    if (U.rows <= 10 * K)
        throw FitError("mixture fit needs more than 10*K rows");

    const Matrix Z = latent_from_ranks(U);
    const Rng master(seed);
    const int restarts = K == 1 ? 1 : cfg.restarts;

    EmResult best;
    for (int r = 0; r < restarts; ++r) {
        EmResult cur = run_em(Z, dx, K, mode, cfg,
                              master.child("restart " + std::to_string(r)));
        if (cur.ll > best.ll) best = std::move(cur);
    }
    best.model.fit.restarts_used = restarts;
    return std::move(best.model);
}

Selection select_copula(const Matrix& U, int dx, int dy,
                        const std::vector<int>& ladder, Mode mode,
                        const EmConfig& cfg, uint64_t seed, bool fit_all) {
    validate_em_config(cfg);
    if (ladder.empty()) throw ConfigError("component ladder is empty");
    for (size_t i = 0; i < ladder.size(); ++i) {
        if (ladder[i] < 1) throw ConfigError("ladder entries must be positive");
        if (i > 0 && ladder[i] <= ladder[i - 1])
            throw ConfigError("ladder must be strictly increasing");
    }
    if (U.rows < 2) throw FitError("model selection needs at least two rows");

    const Rng master(seed);
    std::vector<int> idx(static_cast<size_t>(U.rows));
    for (int i = 0; i < U.rows; ++i) idx[static_cast<size_t>(i)] = i;
    Rng split_rng = master.child("split");
    split_rng.shuffle(idx);
    const int n_val = std::max(1, static_cast<int>(std::lround(0.2 * U.rows)));
    const int n_train = U.rows - n_val;
    if (n_train < 1) throw FitError("model selection needs at least one training row");
    const Matrix U_train = U.gather_rows(
        std::vector<int>(idx.begin(), idx.begin() + n_train));
    const Matrix U_val = U.gather_rows(
        std::vector<int>(idx.begin() + n_train, idx.end()));

    Selection sel;
    sel.val_ll = kNegInf;
    bool have_model = false;
    for (int K : ladder) {
        LadderEntry entry;
        entry.K = K;
        if (n_train <= 10 * K) {
            entry.skip_reason = "needs more than 10*K training rows";
            sel.ladder.push_back(entry);
            continue;
        }
        CopulaModel model = fit_copula_mle(
            U_train, dx, dy, K, mode, cfg,
            master.child("fit K=" + std::to_string(K)).seed());
        entry.fitted = true;
        entry.train_ll = model.fit.train_ll;
        entry.val_ll = copula_entropy_estimate(model, U_val);
        sel.ladder.push_back(entry);
        const bool improved = entry.val_ll > sel.val_ll;
        if (improved) {
            sel.val_ll = entry.val_ll;
            sel.model = std::move(model);
            have_model = true;
        }
        if (!improved && !fit_all) break;
    }
    if (!have_model) throw FitError("no ladder entry could be fitted");
    return sel;
}

void save_copula(std::ostream& out, const CopulaModel& m) {
    validate_model(m);
    using textio::g17;
    out << "vcmi-copula 1\n";
    out << "mode " << mode_name(m.mode) << "\n";
    out << "dims " << m.dx << " " << m.dy << "\n";
    out << "k " << m.k() << "\n";
    out << "weights";
    for (double w : m.weights) out << " " << g17(w);
    out << "\n";
    const int d = m.dim();
    for (int k = 0; k < m.k(); ++k) {
        const Component& c = m.comps[static_cast<size_t>(k)];
        out << "component " << k << "\n";
        out << "mu";
        for (double v : c.mu) out << " " << g17(v);
        out << "\n";
        out << "sigma\n";
        for (int i = 0; i < d; ++i) {
            textio::write_doubles(out, c.sigma.row(i), d);
            out << "\n";
        }
    }
    out << "fit " << g17(m.fit.train_ll) << " " << m.fit.iters << " "
        << m.fit.restarts_used << "\n";
    out << "trace " << m.fit.ll_trace.size();
    for (double v : m.fit.ll_trace) out << " " << g17(v);
    out << "\nend\n";
    if (!out) throw IoError("copula serialization failed");
}

CopulaModel load_copula(std::istream& in) {
    textio::TokenReader tr(in);
    tr.expect("vcmi-copula");
    if (tr.next_int() != 1) throw IoError("unsupported copula format version");
    CopulaModel m;
    tr.expect("mode");
    const std::string mode = tr.next();
    if (mode == "constrained")
        m.mode = Mode::constrained;
    else if (mode == "unconstrained")
        m.mode = Mode::unconstrained;
    else
        throw IoError("unknown copula mode tag: " + mode);
    tr.expect("dims");
    m.dx = tr.next_int();
    m.dy = tr.next_int();
    if (m.dx < 1 || m.dy < 1 || m.dx > 65536 || m.dy > 65536)
        throw IoError("copula dims out of range");
    tr.expect("k");
    const int K = tr.next_int();
    if (K < 1 || K > 65536) throw IoError("copula component count out of range");
    tr.expect("weights");
    m.weights.resize(static_cast<size_t>(K));
    for (double& w : m.weights) w = tr.next_double();
    const int d = m.dim();
    m.comps.resize(static_cast<size_t>(K));
    for (int k = 0; k < K; ++k) {
        tr.expect("component");
        if (tr.next_int() != k) throw IoError("copula component index mismatch");
        Component& c = m.comps[static_cast<size_t>(k)];
        tr.expect("mu");
        c.mu.resize(static_cast<size_t>(d));
        for (double& v : c.mu) v = tr.next_double();
        tr.expect("sigma");
        c.sigma = Matrix(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) c.sigma.at(i, j) = tr.next_double();
    }
    tr.expect("fit");
    m.fit.train_ll = tr.next_double();
    m.fit.iters = tr.next_int();
    m.fit.restarts_used = tr.next_int();
    tr.expect("trace");
    const long tlen = tr.next_long();
    if (tlen < 0 || tlen > 10000000) throw IoError("copula trace length out of range");
    m.fit.ll_trace.resize(static_cast<size_t>(tlen));
    for (double& v : m.fit.ll_trace) v = tr.next_double();
    tr.expect("end");
    validate_model(m);
    return m;
}

}  // namespace vcmi::copula

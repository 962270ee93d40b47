#include "vcmi/estimators.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "vcmi/errors.hpp"
#include "vcmi/kernels.hpp"
#include "vcmi/mlp.hpp"
#include "vcmi/ranks.hpp"
#include "vcmi/rng.hpp"

namespace vcmi::estimators {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

void check_paired(const Matrix& X, const Matrix& Y) {
    if (X.rows != Y.rows) throw ShapeError("X and Y row counts differ");
    if (X.rows < 2) throw ShapeError("need at least two paired rows");
    if (X.cols < 1 || Y.cols < 1) throw ShapeError("X and Y must be nonempty");
}

void check_finite(const Matrix& m, const char* name) {
    for (double v : m.a)
        if (!std::isfinite(v))
            throw DataError(std::string(name) + " contains a non-finite value");
}

Matrix take_cols(const Matrix& m, int c0, int c1) {
    Matrix out(m.rows, c1 - c0);
    for (int i = 0; i < m.rows; ++i) {
        const double* src = m.row(i) + c0;
        std::copy(src, src + (c1 - c0), out.row(i));
    }
    return out;
}

Matrix head_rows(const Matrix& m, int p) {
    Matrix out(p, m.cols);
    std::copy(m.data(), m.data() + static_cast<size_t>(p) * m.cols, out.data());
    return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    double d = 0.0;
    for (size_t i = 0; i < a.size(); ++i)
        d = std::max(d, std::abs(a.a[i] - b.a[i]));
    return d;
}

// Mean scalar output of the net over the rows of U, evaluated in chunks.
double mean_logit(const nn::MlpParams& net, const Matrix& U) {
    constexpr int kChunk = 4096;
    Matrix out;
    double acc = 0.0;
    for (int start = 0; start < U.rows; start += kChunk) {
        const int rows = std::min(kChunk, U.rows - start);
        Matrix sub(rows, U.cols);
        std::copy(U.row(start), U.row(start) + static_cast<size_t>(rows) * U.cols,
                  sub.data());
        nn::forward(net, sub, out);
        for (int i = 0; i < rows; ++i) acc += out.at(i, 0);
    }
    return acc / U.rows;
}

void warn_pipeline(const RankPipelineResult& pipe, double t_warn,
                   std::vector<std::string>& w) {
    if (pipe.flow_x.fit.fallback)
        w.push_back("flow for X fell back to whitening (too few rows)");
    if (pipe.flow_y.fit.fallback)
        w.push_back("flow for Y fell back to whitening (too few rows)");
    if (pipe.t_stat_x > t_warn)
        w.push_back("X block keeps residual within-block rank dependence (t_stat=" +
                    fmt(pipe.t_stat_x) + ")");
    if (pipe.t_stat_y > t_warn)
        w.push_back("Y block keeps residual within-block rank dependence (t_stat=" +
                    fmt(pipe.t_stat_y) + ")");
}

using EMat = Eigen::MatrixXd;

double logdet_spd(const EMat& s, const char* what) {
    Eigen::LLT<EMat> llt(s);
    if (llt.info() != Eigen::Success)
        throw EstimatorError(std::string(what) + " is not positive definite");
    double ld = 0.0;
    const EMat L = llt.matrixL();
    for (int i = 0; i < s.rows(); ++i) ld += 2.0 * std::log(L(i, i));
    return ld;
}

}  // namespace

const char* kind_name(Kind k) {
    switch (k) {
        case Kind::vce: return "vce";
        case Kind::vce_prime: return "vce_prime";
        case Kind::gauss_copula: return "gauss_copula";
        case Kind::dv_mine: return "dv_mine";
        case Kind::infonce: return "infonce";
        case Kind::smile: return "smile";
    }
    throw ConfigError("unknown estimator kind");
}

Kind kind_from_name(const std::string& s) {
    if (s == "vce") return Kind::vce;
    if (s == "vce_prime") return Kind::vce_prime;
    if (s == "gauss_copula") return Kind::gauss_copula;
    if (s == "dv_mine") return Kind::dv_mine;
    if (s == "infonce") return Kind::infonce;
    if (s == "smile") return Kind::smile;
    throw ConfigError("unknown estimator: " + s);
}

// ----- shared flow + rank front end ----------------------------------------

RankPipelineResult flow_rank_pipeline(const Matrix& X, const Matrix& Y,
                                      const flow::FlowConfig& cfg, uint64_t seed,
                                      int probe_rows) {
    const auto t0 = Clock::now();
    check_paired(X, Y);
    if (probe_rows < 1) throw ConfigError("probe_rows must be positive");

    const Rng master(seed);
    RankPipelineResult out;
    out.dx = X.cols;
    out.dy = Y.cols;
    out.flow_x = flow::train_marginal_flow(X, cfg, master.child("flow X").seed());
    out.flow_y = flow::train_marginal_flow(Y, cfg, master.child("flow Y").seed());

    const Matrix ex = flow::encode(out.flow_x, X);
    const Matrix ey = flow::encode(out.flow_y, Y);
    out.u = ranks::compute_vector_ranks(hcat(ex, ey)).u;

    out.t_stat_x = ranks::rank_diagnostics(take_cols(out.u, 0, out.dx)).t_stat;
    out.t_stat_y =
        ranks::rank_diagnostics(take_cols(out.u, out.dx, out.dx + out.dy)).t_stat;

    const int p = std::min(probe_rows, X.rows);
    out.flow_rt_x =
        max_abs_diff(flow::decode(out.flow_x, head_rows(ex, p)), head_rows(X, p));
    out.flow_rt_y =
        max_abs_diff(flow::decode(out.flow_y, head_rows(ey, p)), head_rows(Y, p));

    out.wall_seconds = seconds_since(t0);
    return out;
}

// ----- copula-entropy estimator ---------------------------------------------

VceResult vce_from_ranks(const RankPipelineResult& pipe, const VceConfig& cfg,
                         uint64_t seed) {
    const auto t0 = Clock::now();
    if (pipe.u.cols != pipe.dx + pipe.dy || pipe.dx < 1 || pipe.dy < 1)
        throw ShapeError("rank pipeline result is inconsistent");
    if (!(cfg.t_warn >= 0.0)) throw ConfigError("t_warn must be nonnegative");

    const Rng master(seed);
    copula::Selection sel =
        copula::select_copula(pipe.u, pipe.dx, pipe.dy, cfg.k_ladder, cfg.mode,
                              cfg.em, master.child("copula").seed(), cfg.fit_all_k);

    VceResult r;
    r.mi = copula::copula_entropy_estimate(sel.model, pipe.u);
    r.val_ll = sel.val_ll;
    r.model = std::move(sel.model);
    r.ladder = std::move(sel.ladder);
    r.ranks = pipe;
    for (const copula::LadderEntry& e : r.ladder)
        if (e.fitted && e.val_ll == r.val_ll) {
            r.selected_k = e.K;
            break;
        }

    warn_pipeline(pipe, cfg.t_warn, r.warnings);
    int top_fitted = 0;
    for (const copula::LadderEntry& e : r.ladder)
        if (e.fitted) top_fitted = e.K;
    if (!cfg.k_ladder.empty() && r.selected_k == cfg.k_ladder.back() &&
        r.selected_k == top_fitted)
        r.warnings.push_back("selected component count sits at the top of the ladder");
    if (!std::isfinite(r.mi)) throw EstimatorError("copula MI estimate is not finite");

    r.wall_seconds = pipe.wall_seconds + seconds_since(t0);
    return r;
}

VceResult vce_estimate(const Matrix& X, const Matrix& Y, const VceConfig& cfg,
                       uint64_t seed) {
    return vce_from_ranks(flow_rank_pipeline(X, Y, cfg.flow, seed, cfg.probe_rows),
                          cfg, seed);
}

// ----- classifier variant -----------------------------------------------------

namespace {

void validate_net_config(int width, int layers, double lr, int batch, int epochs,
                         int patience, double val_fraction) {
    if (width < 1 || layers < 1) throw ConfigError("net shape must be positive");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (batch < 1 || epochs < 0 || patience < 0)
        throw ConfigError("training counts out of range");
    if (!(val_fraction > 0.0) || !(val_fraction < 1.0))
        throw ConfigError("validation fraction must lie in (0,1)");
}

nn::MlpParams make_critic_net(int d, int width, int layers, Rng init_rng) {
    std::vector<int> sizes;
    sizes.push_back(d);
    for (int l = 0; l < layers; ++l) sizes.push_back(width);
    sizes.push_back(1);
    nn::MlpParams net =
        nn::make_mlp(sizes, nn::Activation::leaky_relu, /*input_skip=*/true, 0.01);
    nn::init_params(net, init_rng);
    return net;
}

// Mean logistic loss of the classifier on fixed data/reference rows.
double prime_val_loss(const nn::MlpParams& net, const Matrix& data,
                      const Matrix& ref) {
    Matrix out;
    nn::forward(net, data, out);
    double acc = 0.0;
    for (int i = 0; i < data.rows; ++i) acc += softplus(-out.at(i, 0));
    double a = acc / data.rows;
    nn::forward(net, ref, out);
    acc = 0.0;
    for (int i = 0; i < ref.rows; ++i) acc += softplus(out.at(i, 0));
    return 0.5 * (a + acc / ref.rows);
}

}  // namespace

PrimeResult vce_prime_from_ranks(const RankPipelineResult& pipe,
                                 const PrimeConfig& cfg, uint64_t seed) {
    const auto t0 = Clock::now();
    if (pipe.u.cols != pipe.dx + pipe.dy || pipe.dx < 1 || pipe.dy < 1)
        throw ShapeError("rank pipeline result is inconsistent");
    validate_net_config(cfg.hidden_width, cfg.hidden_layers, cfg.lr, cfg.batch,
                        cfg.max_epochs, cfg.patience, cfg.val_fraction);

    const Matrix& U = pipe.u;
    const int n = U.rows;
    const int d = U.cols;
    if (n < 10) throw DataError("classifier estimator needs at least 10 rows");

    const Rng master(seed);
    const Rng prime = master.child("prime");
    nn::MlpParams net =
        make_critic_net(d, cfg.hidden_width, cfg.hidden_layers, prime.child("init"));

    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    {
        Rng r_split = prime.child("split");
        r_split.shuffle(idx);
    }
    const int n_val = std::max(1, static_cast<int>(std::lround(cfg.val_fraction * n)));
    const int n_train = n - n_val;
    if (n_train < 1) throw DataError("classifier split left no training rows");
    const Matrix Utr = U.gather_rows(std::vector<int>(idx.begin(), idx.begin() + n_train));
    const Matrix Uval = U.gather_rows(std::vector<int>(idx.begin() + n_train, idx.end()));

    Matrix ref_val(n_val, d);
    {
        Rng r_ref = prime.child("val ref");
        r_ref.fill_uniform_open(ref_val.data(), n_val * d);
    }

    double best_val = prime_val_loss(net, Uval, ref_val);
    nn::MlpParams best_params = net;
    nn::AdamState adam = nn::make_adam(net, cfg.lr);
    nn::Workspace ws;
    nn::Gradients grads;
    Matrix out;

    const int batch = std::min(cfg.batch, n_train);
    int epochs = 0;
    int bad = 0;
    for (int e = 0; e < cfg.max_epochs; ++e) {
        Rng r_ep = prime.child("epoch " + std::to_string(e));
        std::vector<int> order(static_cast<size_t>(n_train));
        for (int i = 0; i < n_train; ++i) order[static_cast<size_t>(i)] = i;
        r_ep.shuffle(order);

        for (int start = 0; start < n_train; start += batch) {
            const int b = std::min(batch, n_train - start);
            Matrix input(2 * b, d), dY(2 * b, 1);
            for (int i = 0; i < b; ++i)
                std::copy(Utr.row(order[static_cast<size_t>(start + i)]),
                          Utr.row(order[static_cast<size_t>(start + i)]) + d,
                          input.row(i));
            r_ep.fill_uniform_open(input.row(b), b * d);

            nn::forward(net, input, out, &ws);
            double loss = 0.0;
            const double inv = 1.0 / (2.0 * b);
            for (int i = 0; i < b; ++i) {
                const double t = out.at(i, 0);
                loss += softplus(-t);
                dY.at(i, 0) = -sigmoid(-t) * inv;
            }
            for (int i = b; i < 2 * b; ++i) {
                const double t = out.at(i, 0);
                loss += softplus(t);
                dY.at(i, 0) = sigmoid(t) * inv;
            }
            if (!std::isfinite(loss))
                throw EstimatorError("classifier training diverged");
            nn::backward(net, input, ws, dY, grads);
            nn::adam_step(net, grads, adam);
        }
        epochs = e + 1;
        const double val = prime_val_loss(net, Uval, ref_val);
        if (val < best_val) {
            best_val = val;
            best_params = net;
            bad = 0;
        } else if (++bad > cfg.patience) {
            break;
        }
    }
    net = std::move(best_params);

    PrimeResult r;
    r.mi = mean_logit(net, U);
    if (!std::isfinite(r.mi))
        throw EstimatorError("classifier MI estimate is not finite");
    r.best_val_loss = best_val;
    r.epochs = epochs;
    r.ranks = pipe;
    warn_pipeline(pipe, 0.2, r.warnings);
    r.wall_seconds = pipe.wall_seconds + seconds_since(t0);
    return r;
}

PrimeResult vce_prime_estimate(const Matrix& X, const Matrix& Y,
                               const PrimeConfig& cfg, uint64_t seed) {
    return vce_prime_from_ranks(
        flow_rank_pipeline(X, Y, cfg.flow, seed, cfg.probe_rows), cfg, seed);
}

// ----- Gaussian copula baseline ----------------------------------------------

double gaussian_copula_mi(const Matrix& X, const Matrix& Y) {
    check_paired(X, Y);
    check_finite(X, "X");
    check_finite(Y, "Y");
    const int dx = X.cols;
    const int d = X.cols + Y.cols;
    const Matrix U = ranks::compute_vector_ranks(hcat(X, Y)).u;
    const int n = U.rows;

    // A column with one distinct value yields identical ranks; its quantile
    // scores center to roundoff noise rather than exact zeros, so degeneracy
    // must be detected on the rank lattice, not on the variance.
    for (int j = 0; j < d; ++j) {
        const double first = U.at(0, j);
        bool varies = false;
        for (int i = 1; i < n && !varies; ++i) varies = U.at(i, j) != first;
        if (!varies)
            throw DataError("column " + std::to_string(j) +
                            " of the joint data is constant");
    }

    Matrix Z(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) Z.at(i, j) = ranks::gauss_quantile(U.at(i, j));
    std::vector<double> mean(static_cast<size_t>(d), 0.0);
    for (int i = 0; i < n; ++i) {
        const double* r = Z.row(i);
        for (int j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += r[j];
    }
    for (double& v : mean) v /= n;
    for (int i = 0; i < n; ++i) {
        double* r = Z.row(i);
        for (int j = 0; j < d; ++j) r[j] -= mean[static_cast<size_t>(j)];
    }
    Matrix S(d, d);
    kernels::active().gemm_tn(d, d, n, Z.data(), Z.data(), S.data(), false);

    EMat R(d, d);
    for (int i = 0; i < d; ++i) {
        if (!(S.at(i, i) > 0.0))
            throw DataError("rank scores of column " + std::to_string(i) +
                            " have zero variance");
    }
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            R(i, j) = S.at(i, j) / std::sqrt(S.at(i, i) * S.at(j, j));

    const double ld_all = logdet_spd(R, "rank correlation matrix");
    const double ld_x =
        logdet_spd(R.topLeftCorner(dx, dx), "X-block rank correlation");
    const double ld_y = logdet_spd(R.bottomRightCorner(d - dx, d - dx),
                                   "Y-block rank correlation");
    return 0.5 * (ld_x + ld_y - ld_all);
}

// ----- variational critic baselines -------------------------------------------

namespace {

void add_gradients(nn::Gradients& acc, const nn::Gradients& g) {
    const auto& kt = kernels::active();
    for (size_t l = 0; l < acc.dW.size(); ++l) {
        kt.axpy(static_cast<int>(acc.dW[l].size()), 1.0, g.dW[l].data(),
                acc.dW[l].data());
        kt.axpy(static_cast<int>(acc.db[l].size()), 1.0, g.db[l].data(),
                acc.db[l].data());
    }
}

// [x_i | y_j] feature row.
void fill_pair(const Matrix& X, const Matrix& Y, int i, int j, double* dst) {
    std::copy(X.row(i), X.row(i) + X.cols, dst);
    std::copy(Y.row(j), Y.row(j) + Y.cols, dst + X.cols);
}

// Critic outputs on positive pairs (idx) and shuffled pairs (idx, perm).
void critic_pos_neg(const nn::MlpParams& net, const Matrix& X, const Matrix& Y,
                    const std::vector<int>& idx, const std::vector<int>& perm,
                    std::vector<double>& t_pos, std::vector<double>& t_neg) {
    const int b = static_cast<int>(idx.size());
    const int d = X.cols + Y.cols;
    Matrix input(2 * b, d), out;
    for (int i = 0; i < b; ++i) {
        fill_pair(X, Y, idx[static_cast<size_t>(i)], idx[static_cast<size_t>(i)],
                  input.row(i));
        fill_pair(X, Y, idx[static_cast<size_t>(i)], perm[static_cast<size_t>(i)],
                  input.row(b + i));
    }
    nn::forward(net, input, out);
    t_pos.resize(static_cast<size_t>(b));
    t_neg.resize(static_cast<size_t>(b));
    for (int i = 0; i < b; ++i) {
        t_pos[static_cast<size_t>(i)] = out.at(i, 0);
        t_neg[static_cast<size_t>(i)] = out.at(b + i, 0);
    }
}

double logmeanexp(const std::vector<double>& v) {
    double mx = v[0];
    for (double x : v) mx = std::max(mx, x);
    if (!std::isfinite(mx)) return mx;
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - mx);
    return mx + std::log(acc / static_cast<double>(v.size()));
}

// Donsker-Varadhan objective; with clipping it becomes the smile variant.
double dv_objective(const std::vector<double>& t_pos, std::vector<double> t_neg,
                    double clip_tau) {
    double pos = 0.0;
    for (double t : t_pos) pos += t;
    pos /= static_cast<double>(t_pos.size());
    if (clip_tau > 0.0)
        for (double& t : t_neg) t = std::clamp(t, -clip_tau, clip_tau);
    return pos - logmeanexp(t_neg);
}

// InfoNCE objective on one batch of row indices; T is evaluated on the full
// b x b pair grid in row chunks.
double infonce_objective(const nn::MlpParams& net, const Matrix& X, const Matrix& Y,
                         const std::vector<int>& idx, Matrix* t_out) {
    const int b = static_cast<int>(idx.size());
    const int d = X.cols + Y.cols;
    Matrix T(b, b);
    constexpr int kChunk = 2048;
    Matrix out;
    for (int start = 0; start < b * b; start += kChunk) {
        const int rows = std::min(kChunk, b * b - start);
        Matrix input(rows, d);
        for (int r = 0; r < rows; ++r) {
            const int flat = start + r;
            fill_pair(X, Y, idx[static_cast<size_t>(flat / b)],
                      idx[static_cast<size_t>(flat % b)], input.row(r));
        }
        nn::forward(net, input, out);
        for (int r = 0; r < rows; ++r) T.a[static_cast<size_t>(start + r)] = out.at(r, 0);
    }
    double obj = 0.0;
    const double logb = std::log(static_cast<double>(b));
    for (int i = 0; i < b; ++i) {
        const double* row = T.row(i);
        double mx = row[0];
        for (int j = 1; j < b; ++j) mx = std::max(mx, row[j]);
        double acc = 0.0;
        for (int j = 0; j < b; ++j) acc += std::exp(row[j] - mx);
        obj += row[i] - (mx + std::log(acc)) + logb;
    }
    if (t_out) *t_out = std::move(T);
    return obj / b;
}

struct CriticEval {
    // Fixed held-out evaluation data, prepared once.
    std::vector<int> val_idx;
    std::vector<int> val_perm;  // fixed shuffle for DV/smile negatives
    int batch = 0;
};

double critic_val_objective(Kind kind, const nn::MlpParams& net, const Matrix& X,
                            const Matrix& Y, const CriticEval& ev, double tau) {
    if (kind == Kind::infonce) {
        double acc = 0.0;
        int nb = 0;
        const int nv = static_cast<int>(ev.val_idx.size());
        for (int start = 0; start < nv; start += ev.batch) {
            const int b = std::min(ev.batch, nv - start);
            if (b < 2) break;  // a trailing singleton carries no contrast
            const std::vector<int> chunk(ev.val_idx.begin() + start,
                                         ev.val_idx.begin() + start + b);
            acc += infonce_objective(net, X, Y, chunk, nullptr);
            ++nb;
        }
        if (nb == 0) throw EstimatorError("validation split too small for critic");
        return acc / nb;
    }
    std::vector<double> t_pos, t_neg;
    critic_pos_neg(net, X, Y, ev.val_idx, ev.val_perm, t_pos, t_neg);
    return dv_objective(t_pos, std::move(t_neg), kind == Kind::smile ? tau : 0.0);
}

}  // namespace

CriticResult critic_estimate(Kind kind, const Matrix& X, const Matrix& Y,
                             const CriticConfig& cfg, uint64_t seed) {
    if (kind != Kind::dv_mine && kind != Kind::infonce && kind != Kind::smile)
        throw ConfigError("critic_estimate expects a critic estimator kind");
    const auto t0 = Clock::now();
    check_paired(X, Y);
    check_finite(X, "X");
    check_finite(Y, "Y");
    validate_net_config(cfg.hidden_width, cfg.hidden_layers, cfg.lr, cfg.batch,
                        cfg.max_epochs, cfg.patience, cfg.val_fraction);
    if (!(cfg.smile_tau > 0.0)) throw ConfigError("smile_tau must be positive");
    const int n = X.rows;
    if (n < 10) throw DataError("critic estimator needs at least 10 rows");

    const int d = X.cols + Y.cols;
    const Rng master(seed);
    const Rng crng = master.child("critic");
    nn::MlpParams net =
        make_critic_net(d, cfg.hidden_width, cfg.hidden_layers, crng.child("init"));

    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    {
        Rng r_split = crng.child("split");
        r_split.shuffle(idx);
    }
    const int n_val = std::max(2, static_cast<int>(std::lround(cfg.val_fraction * n)));
    const int n_train = n - n_val;
    if (n_train < 2) throw DataError("critic split left too few training rows");

    CriticEval ev;
    ev.val_idx.assign(idx.begin() + n_train, idx.end());
    ev.batch = std::min(cfg.batch, static_cast<int>(ev.val_idx.size()));
    {
        std::vector<int> perm(ev.val_idx);
        Rng r_perm = crng.child("val perm");
        r_perm.shuffle(perm);
        ev.val_perm = std::move(perm);
    }

    double best_val = critic_val_objective(kind, net, X, Y, ev, cfg.smile_tau);
    if (!std::isfinite(best_val))
        throw EstimatorError("critic objective is not finite at initialization");
    nn::MlpParams best_params = net;
    nn::AdamState adam = nn::make_adam(net, cfg.lr);
    nn::Workspace ws;
    nn::Gradients grads, grads_acc;
    Matrix out;

    const int batch = std::min(cfg.batch, n_train);
    int epochs = 0;
    int bad = 0;
    for (int e = 0; e < cfg.max_epochs && n_train >= 2; ++e) {
        Rng r_ep = crng.child("epoch " + std::to_string(e));
        std::vector<int> order(idx.begin(), idx.begin() + n_train);
        r_ep.shuffle(order);

        for (int start = 0; start < n_train; start += batch) {
            const int b = std::min(batch, n_train - start);
            if (b < 2) break;  // a singleton batch carries no contrast
            const std::vector<int> rows(order.begin() + start,
                                        order.begin() + start + b);

            if (kind == Kind::infonce) {
                Matrix T;
                const double obj = infonce_objective(net, X, Y, rows, &T);
                if (!std::isfinite(obj))
                    throw EstimatorError("infonce training diverged");
                // dL/dT_ij = -(1/b) [1{i=j} - softmax_j(T_i.)]
                Matrix dT(b, b);
                for (int i = 0; i < b; ++i) {
                    const double* trow = T.row(i);
                    double mx = trow[0];
                    for (int j = 1; j < b; ++j) mx = std::max(mx, trow[j]);
                    double acc = 0.0;
                    for (int j = 0; j < b; ++j) acc += std::exp(trow[j] - mx);
                    for (int j = 0; j < b; ++j) {
                        const double soft = std::exp(trow[j] - mx) / acc;
                        dT.at(i, j) = -((i == j ? 1.0 : 0.0) - soft) / b;
                    }
                }
                // Second chunked pass accumulates parameter gradients.
                constexpr int kChunk = 2048;
                bool first = true;
                for (int cs = 0; cs < b * b; cs += kChunk) {
                    const int rows_c = std::min(kChunk, b * b - cs);
                    Matrix input(rows_c, d), dY(rows_c, 1);
                    for (int r = 0; r < rows_c; ++r) {
                        const int flat = cs + r;
                        fill_pair(X, Y, rows[static_cast<size_t>(flat / b)],
                                  rows[static_cast<size_t>(flat % b)], input.row(r));
                        dY.at(r, 0) = dT.a[static_cast<size_t>(flat)];
                    }
                    nn::forward(net, input, out, &ws);
                    nn::backward(net, input, ws, dY, grads);
                    if (first) {
                        grads_acc = grads;
                        first = false;
                    } else {
                        add_gradients(grads_acc, grads);
                    }
                }
                nn::adam_step(net, grads_acc, adam);
                continue;
            }

            // DV / smile: positives plus one in-batch shuffle of y.
            std::vector<int> perm(rows);
            r_ep.shuffle(perm);
            Matrix input(2 * b, d), dY(2 * b, 1);
            for (int i = 0; i < b; ++i) {
                fill_pair(X, Y, rows[static_cast<size_t>(i)],
                          rows[static_cast<size_t>(i)], input.row(i));
                fill_pair(X, Y, rows[static_cast<size_t>(i)],
                          perm[static_cast<size_t>(i)], input.row(b + i));
            }
            nn::forward(net, input, out, &ws);
            double mx = -std::numeric_limits<double>::infinity();
            for (int i = 0; i < b; ++i) {
                double t = out.at(b + i, 0);
                if (kind == Kind::smile) t = std::clamp(t, -cfg.smile_tau, cfg.smile_tau);
                mx = std::max(mx, t);
            }
            double zsum = 0.0;
            for (int i = 0; i < b; ++i) {
                double t = out.at(b + i, 0);
                if (kind == Kind::smile) t = std::clamp(t, -cfg.smile_tau, cfg.smile_tau);
                zsum += std::exp(t - mx);
            }
            if (!std::isfinite(mx) || !(zsum > 0.0))
                throw EstimatorError("critic training diverged");
            double obj_check = 0.0;
            for (int i = 0; i < b; ++i) {
                dY.at(i, 0) = -1.0 / b;
                obj_check += out.at(i, 0);
            }
            for (int i = 0; i < b; ++i) {
                const double t_raw = out.at(b + i, 0);
                const bool clipped =
                    kind == Kind::smile && std::abs(t_raw) > cfg.smile_tau;
                const double t_eff =
                    kind == Kind::smile ? std::clamp(t_raw, -cfg.smile_tau, cfg.smile_tau)
                                        : t_raw;
                dY.at(b + i, 0) = clipped ? 0.0 : std::exp(t_eff - mx) / zsum;
            }
            if (!std::isfinite(obj_check))
                throw EstimatorError("critic training diverged");
            nn::backward(net, input, ws, dY, grads);
            nn::adam_step(net, grads, adam);
        }
        epochs = e + 1;
        const double val = critic_val_objective(kind, net, X, Y, ev, cfg.smile_tau);
        if (!std::isfinite(val)) throw EstimatorError("critic validation diverged");
        if (val > best_val) {
            best_val = val;
            best_params = net;
            bad = 0;
        } else if (++bad > cfg.patience) {
            break;
        }
    }
    net = std::move(best_params);

    CriticResult r;
    r.mi = critic_val_objective(kind, net, X, Y, ev, cfg.smile_tau);
    if (!std::isfinite(r.mi)) throw EstimatorError("critic MI estimate is not finite");
    r.best_val_objective = best_val;
    r.epochs = epochs;
    r.wall_seconds = seconds_since(t0);
    if (kind == Kind::infonce)
        r.warnings.push_back("infonce estimates saturate at log(batch) = " +
                             fmt(std::log(static_cast<double>(ev.batch))));
    return r;
}

// ----- uniform entry point ------------------------------------------------

EstimateOutcome estimate_mi(Kind kind, const Matrix& X, const Matrix& Y,
                            const EstimatorConfig& cfg, uint64_t seed) {
    EstimateOutcome o;
    switch (kind) {
        case Kind::vce: {
            VceResult r = vce_estimate(X, Y, cfg.vce, seed);
            o.mi = r.mi;
            o.selected_k = r.selected_k;
            o.val_metric = r.val_ll;
            o.has_val_metric = true;
            o.wall_seconds = r.wall_seconds;
            o.warnings = std::move(r.warnings);
            break;
        }
        case Kind::vce_prime: {
            PrimeResult r = vce_prime_estimate(X, Y, cfg.prime, seed);
            o.mi = r.mi;
            o.val_metric = r.best_val_loss;
            o.has_val_metric = true;
            o.wall_seconds = r.wall_seconds;
            o.warnings = std::move(r.warnings);
            break;
        }
        case Kind::gauss_copula: {
            const auto t0 = Clock::now();
            o.mi = gaussian_copula_mi(X, Y);
            o.wall_seconds = seconds_since(t0);
            break;
        }
        case Kind::dv_mine:
        case Kind::infonce:
        case Kind::smile: {
            CriticResult r = critic_estimate(kind, X, Y, cfg.critic, seed);
            o.mi = r.mi;
            o.val_metric = r.best_val_objective;
            o.has_val_metric = true;
            o.wall_seconds = r.wall_seconds;
            o.warnings = std::move(r.warnings);
            break;
        }
    }
    return o;
}

}  // namespace vcmi::estimators

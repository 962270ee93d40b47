#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "vcmi/copula.hpp"
#include "vcmi/errors.hpp"
#include "vcmi/estimators.hpp"
#include "vcmi/matrix.hpp"
#include "vcmi/rng.hpp"

using namespace vcmi;
using namespace vcmi::estimators;

namespace {

// Bivariate Gaussian with correlation rho; X gets column 0, Y column 1.
void gauss_pair(int n, double rho, uint64_t seed, Matrix& X, Matrix& Y) {
    Rng r(seed);
    X = Matrix(n, 1);
    Y = Matrix(n, 1);
    const double s = std::sqrt(1.0 - rho * rho);
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        X.at(i, 0) = z;
        Y.at(i, 0) = rho * z + s * r.normal();
    }
}

// 2+2 dimensional pair: Y_j = a X_j + sqrt(1-a^2) noise, X standard normal.
// True mutual information is -log(1 - a^2).
void gauss_block_pair(int n, double a, uint64_t seed, Matrix& X, Matrix& Y) {
    Rng r(seed);
    X = Matrix(n, 2);
    Y = Matrix(n, 2);
    const double s = std::sqrt(1.0 - a * a);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 2; ++j) {
            const double z = r.normal();
            X.at(i, j) = z;
            Y.at(i, j) = a * z + s * r.normal();
        }
}

flow::FlowConfig small_flow() {
    flow::FlowConfig f;
    f.hidden_width = 32;
    f.hidden_layers = 2;
    f.max_epochs = 40;
    f.patience = 6;
    f.batch = 256;
    f.rk4_steps = 32;
    return f;
}

flow::FlowConfig tiny_flow() {
    flow::FlowConfig f;
    f.hidden_width = 16;
    f.hidden_layers = 2;
    f.max_epochs = 3;
    f.patience = 2;
    f.batch = 128;
    f.rk4_steps = 16;
    return f;
}

VceConfig tiny_vce() {
    VceConfig cfg;
    cfg.flow = tiny_flow();
    cfg.k_ladder = {1};
    cfg.em.restarts = 1;
    return cfg;
}

std::string serialize(const copula::CopulaModel& m) {
    std::ostringstream os;
    copula::save_copula(os, m);
    return os.str();
}

constexpr double kMiRho05 = 0.14384103622589045;  // -0.5*log(1-0.25)
constexpr double kMiRho08 = 0.51082562376599072;  // -0.5*log(1-0.64)
constexpr double kMiRho09 = 0.83035746560943971;  // -0.5*log(1-0.81)

}  // namespace

TEST_CASE("gaussian copula baseline recovers bivariate Gaussian MI") {
    Matrix X, Y;
    gauss_pair(100000, 0.5, 42, X, Y);
    const double mi = gaussian_copula_mi(X, Y);
    CHECK(mi >= 0.0);
    CHECK(std::abs(mi - kMiRho05) < 0.01);
}

TEST_CASE("gaussian copula baseline is bit-identical under monotone maps") {
    Matrix X, Y;
    gauss_pair(20000, 0.5, 43, X, Y);
    const double base = gaussian_copula_mi(X, Y);

    Matrix Xm(X.rows, 1), Ym(Y.rows, 1);
    for (int i = 0; i < X.rows; ++i) {
        Xm.at(i, 0) = std::exp(X.at(i, 0));  // strictly increasing
        const double y = Y.at(i, 0);
        Ym.at(i, 0) = y * y * y;  // strictly increasing
    }
    const double mapped = gaussian_copula_mi(Xm, Ym);
    CHECK(mapped == base);  // identical ranks, identical arithmetic
}

TEST_CASE("gaussian copula baseline handles block dependence") {
    Matrix X, Y;
    gauss_block_pair(100000, 0.6, 44, X, Y);
    const double truth = -std::log(1.0 - 0.36);
    const double mi = gaussian_copula_mi(X, Y);
    CHECK(mi >= 0.0);
    CHECK(std::abs(mi - truth) < 0.03);
}

TEST_CASE("gaussian copula baseline is near zero for independent data") {
    Matrix X, Y;
    gauss_pair(10000, 0.0, 45, X, Y);
    const double mi = gaussian_copula_mi(X, Y);
    CHECK(mi >= 0.0);
    CHECK(mi < 1e-3);
}

TEST_CASE("gaussian copula baseline input validation") {
    Matrix X(50, 1), Y(50, 1);
    Rng r(7);
    r.fill_normal(X.data(), 50);
    r.fill_normal(Y.data(), 50);

    Matrix Yshort(49, 1);
    CHECK_THROWS_AS((void)gaussian_copula_mi(X, Yshort), ShapeError);
    Matrix X1(1, 1), Y1(1, 1);
    CHECK_THROWS_AS((void)gaussian_copula_mi(X1, Y1), ShapeError);

    Matrix Xc(50, 1);
    for (int i = 0; i < 50; ++i) Xc.at(i, 0) = 3.0;  // constant column
    CHECK_THROWS_AS((void)gaussian_copula_mi(Xc, Y), DataError);

    Matrix Xn = X;
    Xn.at(3, 0) = std::nan("");
    CHECK_THROWS_AS((void)gaussian_copula_mi(Xn, Y), DataError);
}

TEST_CASE("rank pipeline produces lattice ranks and diagnostics") {
    Matrix X, Y;
    gauss_block_pair(800, 0.6, 46, X, Y);
    RankPipelineResult pipe = flow_rank_pipeline(X, Y, tiny_flow(), 11);

    CHECK(pipe.dx == 2);
    CHECK(pipe.dy == 2);
    CHECK(pipe.u.rows == 800);
    CHECK(pipe.u.cols == 4);
    for (double v : pipe.u.a) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    CHECK(pipe.flow_x.dim == 2);
    CHECK(pipe.flow_y.dim == 2);
    CHECK(std::isfinite(pipe.t_stat_x));
    CHECK(pipe.t_stat_x >= 0.0);
    CHECK(std::isfinite(pipe.flow_rt_x));
    CHECK(std::isfinite(pipe.flow_rt_y));
    CHECK(pipe.wall_seconds > 0.0);
}

TEST_CASE("rank pipeline round-trip diagnostic is tight on Gaussian data") {
    Matrix X, Y;
    gauss_pair(500, 0.5, 47, X, Y);
    RankPipelineResult pipe = flow_rank_pipeline(X, Y, tiny_flow(), 12);
    // Single-column blocks have no cross-dimension rank dependence by
    // construction, and the flow integrator inverts to near machine accuracy.
    CHECK(pipe.t_stat_x == 0.0);
    CHECK(pipe.t_stat_y == 0.0);
    CHECK(pipe.flow_rt_x < 1e-8);
    CHECK(pipe.flow_rt_y < 1e-8);
}

TEST_CASE("vce recovers correlated Gaussian MI within 15 percent") {
    VceConfig cfg;
    cfg.flow = small_flow();
    cfg.k_ladder = {1, 4};
    cfg.em.restarts = 2;

    Matrix X, Y;
    gauss_pair(3000, 0.8, 901, X, Y);
    VceResult r = vce_estimate(X, Y, cfg, 1);

    CHECK(std::abs(r.mi - kMiRho08) < 0.15 * kMiRho08);
    CHECK(r.selected_k == 1);  // Gaussian data needs one component
    CHECK(r.model.k() == 1);
    CHECK(std::isfinite(r.val_ll));
    CHECK(r.warnings.empty());
    CHECK(r.wall_seconds > 0.0);
    REQUIRE(!r.ladder.empty());
    CHECK(r.ladder[0].K == 1);
    CHECK(r.ladder[0].fitted);
    // The ranks carried in the result are the pipeline's ranks.
    CHECK(r.ranks.u.rows == 3000);
    CHECK(r.ranks.u.cols == 2);
}

TEST_CASE("vce is near zero on independent data") {
    VceConfig cfg;
    cfg.flow = small_flow();
    cfg.k_ladder = {1, 4};
    cfg.em.restarts = 2;

    Matrix X, Y;
    gauss_pair(3000, 0.0, 702, X, Y);
    VceResult r = vce_estimate(X, Y, cfg, 2);
    CHECK(std::abs(r.mi) <= 0.05);
    CHECK(r.selected_k == 1);
}

TEST_CASE("vce two-stage and one-stage paths agree bitwise") {
    Matrix X, Y;
    gauss_pair(500, 0.7, 48, X, Y);
    const VceConfig cfg = tiny_vce();
    const uint64_t seed = 9;

    RankPipelineResult pipe = flow_rank_pipeline(X, Y, cfg.flow, seed, cfg.probe_rows);
    VceResult two = vce_from_ranks(pipe, cfg, seed);
    VceResult one = vce_estimate(X, Y, cfg, seed);

    CHECK(one.mi == two.mi);
    CHECK(one.val_ll == two.val_ll);
    CHECK(one.selected_k == two.selected_k);
    CHECK(serialize(one.model) == serialize(two.model));

    VceResult again = vce_estimate(X, Y, cfg, seed);
    CHECK(again.mi == one.mi);
    CHECK(again.val_ll == one.val_ll);
    CHECK(serialize(again.model) == serialize(one.model));

    VceResult other = vce_estimate(X, Y, cfg, seed + 1);
    CHECK(other.mi != one.mi);  // seed actually steers the pipeline
}

TEST_CASE("vce flags a selection that hits the top of the ladder") {
    Matrix X, Y;
    gauss_pair(400, 0.6, 49, X, Y);
    VceConfig cfg = tiny_vce();  // ladder {1}: the only rung is the top
    VceResult r = vce_estimate(X, Y, cfg, 3);
    REQUIRE(r.selected_k == 1);
    bool flagged = false;
    for (const std::string& w : r.warnings)
        if (w.find("top of the ladder") != std::string::npos) flagged = true;
    CHECK(flagged);
}

TEST_CASE("vce input validation") {
    VceConfig cfg = tiny_vce();
    Matrix X, Y;
    gauss_pair(200, 0.5, 50, X, Y);

    Matrix Yshort(199, 1);
    CHECK_THROWS_AS((void)vce_estimate(X, Yshort, cfg, 1), ShapeError);

    Matrix Xn = X;
    Xn.at(0, 0) = std::nan("");
    CHECK_THROWS_AS((void)vce_estimate(Xn, Y, cfg, 1), DataError);

    VceConfig bad = cfg;
    bad.probe_rows = 0;
    CHECK_THROWS_AS((void)vce_estimate(X, Y, bad, 1), ConfigError);

    RankPipelineResult pipe = flow_rank_pipeline(X, Y, cfg.flow, 1, cfg.probe_rows);
    pipe.dx = 5;  // inconsistent with the rank matrix
    CHECK_THROWS_AS((void)vce_from_ranks(pipe, cfg, 1), ShapeError);
}

TEST_CASE("classifier variant recovers strong dependence within 30 percent") {
    PrimeConfig cfg;
    cfg.flow = small_flow();
    cfg.hidden_width = 64;
    cfg.max_epochs = 30;
    cfg.batch = 256;

    Matrix X, Y;
    gauss_pair(3000, 0.9, 502, X, Y);
    PrimeResult r = vce_prime_estimate(X, Y, cfg, 2);

    CHECK(std::abs(r.mi - kMiRho09) < 0.30 * kMiRho09);
    CHECK(std::isfinite(r.best_val_loss));
    CHECK(r.epochs > 0);
    CHECK(r.epochs <= cfg.max_epochs);
    CHECK(r.ranks.u.rows == 3000);
    CHECK(r.wall_seconds > 0.0);
}

TEST_CASE("classifier variant is deterministic and validates input") {
    PrimeConfig cfg;
    cfg.flow = tiny_flow();
    cfg.hidden_width = 16;
    cfg.max_epochs = 3;
    cfg.batch = 64;

    Matrix X, Y;
    gauss_pair(500, 0.6, 51, X, Y);
    PrimeResult a = vce_prime_estimate(X, Y, cfg, 4);
    PrimeResult b = vce_prime_estimate(X, Y, cfg, 4);
    CHECK(a.mi == b.mi);
    CHECK(a.best_val_loss == b.best_val_loss);
    CHECK(a.epochs == b.epochs);

    Matrix Yshort(499, 1);
    CHECK_THROWS_AS((void)vce_prime_estimate(X, Yshort, cfg, 1), ShapeError);
    PrimeConfig bad = cfg;
    bad.val_fraction = 1.5;
    CHECK_THROWS_AS((void)vce_prime_estimate(X, Y, bad, 1), ConfigError);
}

TEST_CASE("dv critic lands near the bivariate Gaussian MI") {
    CriticConfig cfg;
    cfg.hidden_width = 64;
    cfg.batch = 128;
    cfg.max_epochs = 40;
    cfg.patience = 8;

    Matrix X, Y;
    gauss_pair(2000, 0.8, 301, X, Y);
    CriticResult r = critic_estimate(Kind::dv_mine, X, Y, cfg, 1);
    CHECK(std::abs(r.mi - kMiRho08) < 0.2);
    CHECK(r.mi == r.best_val_objective);  // restore-best then re-evaluate
    CHECK(r.epochs > 0);
    CHECK(r.wall_seconds > 0.0);
}

TEST_CASE("smile critic matches dv closely at a loose clip") {
    CriticConfig cfg;
    cfg.hidden_width = 64;
    cfg.batch = 128;
    cfg.max_epochs = 40;
    cfg.patience = 8;

    Matrix X, Y;
    gauss_pair(2000, 0.8, 302, X, Y);
    CriticResult r = critic_estimate(Kind::smile, X, Y, cfg, 2);
    CHECK(std::abs(r.mi - kMiRho08) < 0.25);
    CHECK(std::isfinite(r.best_val_objective));
}

TEST_CASE("infonce critic respects its structural log-batch ceiling") {
    CriticConfig cfg;
    cfg.hidden_width = 32;
    cfg.batch = 4;  // bound ln 4 = 1.386 sits below the true MI 1.96
    cfg.max_epochs = 30;
    cfg.patience = 6;

    Matrix X, Y;
    gauss_pair(400, 0.99, 101, X, Y);
    CriticResult r = critic_estimate(Kind::infonce, X, Y, cfg, 1);
    CHECK(r.mi <= std::log(4.0) + 1e-12);
    CHECK(r.mi > 0.5);  // it does learn most of what the bound allows
    REQUIRE(!r.warnings.empty());
    CHECK(r.warnings[0].find("saturate") != std::string::npos);
}

TEST_CASE("critics are deterministic per seed") {
    CriticConfig cfg;
    cfg.hidden_width = 16;
    cfg.batch = 64;
    cfg.max_epochs = 3;

    Matrix X, Y;
    gauss_pair(300, 0.7, 303, X, Y);
    CriticResult a = critic_estimate(Kind::dv_mine, X, Y, cfg, 5);
    CriticResult b = critic_estimate(Kind::dv_mine, X, Y, cfg, 5);
    CHECK(a.mi == b.mi);
    CHECK(a.best_val_objective == b.best_val_objective);
    CHECK(a.epochs == b.epochs);
}

TEST_CASE("training blow-ups surface as estimator errors") {
    Matrix X, Y;
    gauss_pair(500, 0.5, 52, X, Y);

    CriticConfig ccfg;
    ccfg.hidden_width = 16;
    ccfg.batch = 128;
    ccfg.max_epochs = 3;
    ccfg.lr = 1e300;  // first optimizer step catapults the weights
    CHECK_THROWS_AS((void)critic_estimate(Kind::dv_mine, X, Y, ccfg, 1),
                    EstimatorError);

    PrimeConfig pcfg;
    pcfg.flow = tiny_flow();
    pcfg.hidden_width = 16;
    pcfg.batch = 128;
    pcfg.max_epochs = 3;
    pcfg.lr = 1e300;
    CHECK_THROWS_AS((void)vce_prime_estimate(X, Y, pcfg, 1), EstimatorError);
}

TEST_CASE("critic input validation") {
    Matrix X, Y;
    gauss_pair(100, 0.5, 53, X, Y);
    CriticConfig cfg;
    cfg.max_epochs = 1;

    CHECK_THROWS_AS((void)critic_estimate(Kind::vce, X, Y, cfg, 1), ConfigError);
    Matrix Yshort(99, 1);
    CHECK_THROWS_AS((void)critic_estimate(Kind::dv_mine, X, Yshort, cfg, 1),
                    ShapeError);
    Matrix Xn = X;
    Xn.at(0, 0) = std::nan("");
    CHECK_THROWS_AS((void)critic_estimate(Kind::dv_mine, Xn, Y, cfg, 1), DataError);
    CriticConfig bad = cfg;
    bad.smile_tau = 0.0;
    CHECK_THROWS_AS((void)critic_estimate(Kind::smile, X, Y, bad, 1), ConfigError);
}

TEST_CASE("estimator names round-trip") {
    const Kind kinds[] = {Kind::vce,     Kind::vce_prime, Kind::gauss_copula,
                          Kind::dv_mine, Kind::infonce,   Kind::smile};
    for (Kind k : kinds) CHECK(kind_from_name(kind_name(k)) == k);
    CHECK_THROWS_AS((void)kind_from_name("bogus"), ConfigError);
}

TEST_CASE("uniform entry point dispatches and fills the outcome") {
    Matrix X, Y;
    gauss_pair(500, 0.7, 54, X, Y);
    EstimatorConfig cfg;
    cfg.vce = tiny_vce();
    cfg.prime.flow = tiny_flow();
    cfg.prime.hidden_width = 16;
    cfg.prime.max_epochs = 2;
    cfg.critic.hidden_width = 16;
    cfg.critic.batch = 64;
    cfg.critic.max_epochs = 2;

    EstimateOutcome g = estimate_mi(Kind::gauss_copula, X, Y, cfg, 1);
    CHECK(g.mi == gaussian_copula_mi(X, Y));
    CHECK(g.selected_k == -1);
    CHECK(!g.has_val_metric);

    EstimateOutcome v = estimate_mi(Kind::vce, X, Y, cfg, 7);
    VceResult vr = vce_estimate(X, Y, cfg.vce, 7);
    CHECK(v.mi == vr.mi);
    CHECK(v.selected_k == vr.selected_k);
    CHECK(v.has_val_metric);
    CHECK(v.val_metric == vr.val_ll);

    EstimateOutcome p = estimate_mi(Kind::vce_prime, X, Y, cfg, 7);
    CHECK(std::isfinite(p.mi));
    CHECK(p.has_val_metric);
    CHECK(p.selected_k == -1);

    EstimateOutcome c = estimate_mi(Kind::dv_mine, X, Y, cfg, 7);
    CHECK(std::isfinite(c.mi));
    CHECK(c.has_val_metric);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "vcmi/benchmarks.hpp"
#include "vcmi/errors.hpp"
#include "vcmi/kernels.hpp"
#include "vcmi/matrix.hpp"

using namespace vcmi;
using namespace vcmi::bench;

namespace {

double pearson(const Matrix& a, int ca, const Matrix& b, int cb) {
    const int n = a.rows;
    double ma = 0, mb = 0;
    for (int i = 0; i < n; ++i) {
        ma += a.at(i, ca);
        mb += b.at(i, cb);
    }
    ma /= n;
    mb /= n;
    double saa = 0, sbb = 0, sab = 0;
    for (int i = 0; i < n; ++i) {
        const double da = a.at(i, ca) - ma, db = b.at(i, cb) - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    return sab / std::sqrt(saa * sbb);
}

double abs_quantile(const Matrix& m, int col, double p) {
    std::vector<double> v(static_cast<size_t>(m.rows));
    for (int i = 0; i < m.rows; ++i) v[static_cast<size_t>(i)] = std::abs(m.at(i, col));
    std::sort(v.begin(), v.end());
    return v[static_cast<size_t>(p * (m.rows - 1))];
}

bool same_bits(const Matrix& a, const Matrix& b) {
    return a.rows == b.rows && a.cols == b.cols &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Keep in sync with the library's documented arclength map.
double arclength(double t) {
    return 0.5 * (t * std::sqrt(1.0 + t * t) + std::asinh(t));
}

}  // namespace

TEST_CASE("gaussian ground truth is analytic and matches the pair formula") {
    BenchmarkTask t = task_from_spec("gaussian:d=1:rho=0");
    GroundTruth g = ground_truth_mi(t);
    CHECK(g.value == 0.0);
    CHECK(g.analytic);
    CHECK(g.sigma == 0.0);

    BenchmarkTask t8 = task_from_spec("gaussian:d=8:rho=0.6");
    GroundTruth g8 = ground_truth_mi(t8);
    CHECK(std::abs(g8.value - 1.7851484105136781) < 1e-12);
    CHECK(std::abs(g8.value - 1.785) < 1e-3);  // the 8-pair reference value

    // A diffeomorphic variant inherits the truth exactly.
    BenchmarkTask cubed = task_from_spec("cube:d=8:rho=0.6");
    CHECK(ground_truth_mi(cubed).value == g8.value);
}

TEST_CASE("cube task samples are elementwise cubes of the gaussian samples") {
    BenchmarkTask base = task_from_spec("gaussian:d=1:rho=0.6");
    BenchmarkTask cubed = task_from_spec("cube:d=1:rho=0.6");
    PairedDataset a = sample_task(base, 500, 77);
    PairedDataset b = sample_task(cubed, 500, 77);
    for (int i = 0; i < 500; ++i) {
        const double x = a.x.at(i, 0), y = a.y.at(i, 0);
        CHECK(b.x.at(i, 0) == x * x * x);
        CHECK(b.y.at(i, 0) == y * y * y);
    }
}

TEST_CASE("samplers are bit-deterministic in the seed") {
    for (const char* spec :
         {"student:d=3:rho=0.5:nu=3", "mog2:d=4:mix=rot",
          "gaussian:d=4:rho=0.7:tf=spiral:mix=rot", "swiss-roll:rho=0.8"}) {
        BenchmarkTask t = task_from_spec(spec);
        PairedDataset a = sample_task(t, 300, 5);
        PairedDataset b = sample_task(t, 300, 5);
        CHECK(same_bits(a.x, b.x));
        CHECK(same_bits(a.y, b.y));
        PairedDataset c = sample_task(t, 300, 6);
        CHECK(!same_bits(a.x, c.x));
    }
}

TEST_CASE("independent gaussian task has uncorrelated blocks") {
    BenchmarkTask t = task_from_spec("gaussian:d=2:rho=0");
    PairedDataset d = sample_task(t, 10000, 11);
    for (int j = 0; j < 2; ++j) CHECK(std::abs(pearson(d.x, j, d.y, j)) < 0.05);
}

TEST_CASE("student nu=1 samples carry heavy tails") {
    BenchmarkTask heavy = task_from_spec("student:d=2:rho=0.3:nu=1");
    PairedDataset dh = sample_task(heavy, 100000, 13);
    const double ratio_heavy =
        abs_quantile(dh.x, 0, 0.999) / abs_quantile(dh.x, 0, 0.90);
    CHECK(ratio_heavy > 20.0);  // Cauchy-like tails

    BenchmarkTask light = task_from_spec("gaussian:d=2:rho=0.3");
    PairedDataset dl = sample_task(light, 100000, 13);
    const double ratio_light =
        abs_quantile(dl.x, 0, 0.999) / abs_quantile(dl.x, 0, 0.90);
    CHECK(ratio_light < 5.0);  // normal tails: about 3.29/1.64
}

TEST_CASE("mc oracle agrees with the analytic gaussian value within 3 sigma") {
    BenchmarkTask t = task_from_spec("gaussian:d=4:rho=0.6");
    const double truth = ground_truth_mi(t).value;
    GroundTruth g = mc_oracle(t, 200000, 99);
    CHECK(!g.analytic);
    CHECK(g.sigma > 0.0);
    CHECK(g.samples == 200000);
    CHECK(std::abs(g.value - truth) < 3.0 * g.sigma);
}

TEST_CASE("monte-carlo truths are identical across diffeomorphic variants") {
    BenchmarkTask base = task_from_spec("student:d=2:rho=0.5:nu=3");
    BenchmarkTask moved = task_from_spec("student:d=2:rho=0.5:nu=3:tf=cube:mix=rot");
    GroundTruth a = ground_truth_mi(base);
    GroundTruth b = ground_truth_mi(moved);
    CHECK(a.value == b.value);  // same stored number, bit for bit
    CHECK(a.sigma == b.sigma);
    CHECK(!a.analytic);
    CHECK(a.samples == 1000000);
    CHECK(a.value > 0.0);
}

TEST_CASE("mixture tasks hide dependence from correlation but not from MI") {
    BenchmarkTask t = task_from_spec("mog1:d=2");
    PairedDataset d = sample_task(t, 20000, 17);
    for (int j = 0; j < 2; ++j) {
        CHECK(std::abs(pearson(d.x, j, d.y, j)) < 0.05);  // correlation-blind
        double mean = 0, var = 0;
        for (int i = 0; i < d.x.rows; ++i) mean += d.x.at(i, j);
        mean /= d.x.rows;
        for (int i = 0; i < d.x.rows; ++i) {
            const double c = d.x.at(i, j) - mean;
            var += c * c;
        }
        var /= d.x.rows;
        CHECK(std::abs(mean) < 0.05);  // block marginals are standard normal
        CHECK(std::abs(var - 1.0) < 0.05);
    }
    GroundTruth g = ground_truth_mi(t);
    CHECK(g.value > 0.1);
    CHECK(g.sigma < 0.01);

    // The four-component variant has bimodal marginals: E|x| for a mixture of
    // N(+-1, 1) is about 1.17 versus 0.80 for a standard normal.
    BenchmarkTask t2 = task_from_spec("mog2:d=1");
    PairedDataset d2 = sample_task(t2, 40000, 18);
    double mean_abs = 0;
    for (int i = 0; i < d2.x.rows; ++i) mean_abs += std::abs(d2.x.at(i, 0));
    mean_abs /= d2.x.rows;
    CHECK(mean_abs > 1.0);
    CHECK(std::abs(pearson(d2.x, 0, d2.y, 0)) < 0.05);
}

TEST_CASE("mixture MI grows with the number of shared-component pairs") {
    BenchmarkTask small = task_from_spec("mog1:d=1");
    BenchmarkTask big = task_from_spec("mog1:d=4");
    GroundTruth a = mc_oracle(small, 200000, 7);
    GroundTruth b = mc_oracle(big, 200000, 7);
    CHECK(b.value > a.value + 5.0 * (a.sigma + b.sigma));
}

TEST_CASE("mixing matrices are well-conditioned and deterministic") {
    BenchmarkTask t = task_from_spec("gaussian:d=4:rho=0.5:mix=rot");
    Matrix A = mixing_matrix(t, 'x');
    Matrix B = mixing_matrix(t, 'y');
    CHECK(!same_bits(A, B));  // per-block streams differ
    CHECK(same_bits(A, mixing_matrix(t, 'x')));

    // A = Q * diag(scale) with orthonormal Q, so A^T A is diagonal with the
    // squared scales: column norms in [0.8, 1.25] and cond(A) <= 1.5625.
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            double dot = 0;
            for (int k = 0; k < 4; ++k) dot += A.at(k, i) * A.at(k, j);
            if (i == j) {
                CHECK(dot > 0.64 - 1e-12);
                CHECK(dot < 1.5625 + 1e-12);
            } else {
                CHECK(std::abs(dot) < 1e-10);
            }
        }

    BenchmarkTask id = task_from_spec("gaussian:d=4:rho=0.5");
    Matrix I = mixing_matrix(id, 'x');
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) CHECK(I.at(i, j) == (i == j ? 1.0 : 0.0));
}

TEST_CASE("mixed samples equal the unmixed samples times the mixing matrix") {
    BenchmarkTask plain = task_from_spec("gaussian:d=4:rho=0.5");
    BenchmarkTask mixed = task_from_spec("gaussian:d=4:rho=0.5:mix=rot");
    PairedDataset u = sample_task(plain, 200, 21);
    PairedDataset m = sample_task(mixed, 200, 21);
    const Matrix Ax = mixing_matrix(mixed, 'x');
    Matrix expect(200, 4);
    kernels::active().gemm_nt(200, 4, 4, u.x.data(), Ax.data(), expect.data(),
                              false);
    CHECK(same_bits(m.x, expect));
}

TEST_CASE("spiral twist preserves pair radii") {
    BenchmarkTask plain = task_from_spec("gaussian:d=4:rho=0.6");
    BenchmarkTask spiral = task_from_spec("spiral:d=4:rho=0.6");
    PairedDataset u = sample_task(plain, 400, 23);
    PairedDataset s = sample_task(spiral, 400, 23);
    for (int i = 0; i < 400; ++i)
        for (int j = 0; j < 4; j += 2) {
            const double r0 = std::hypot(u.x.at(i, j), u.x.at(i, j + 1));
            const double r1 = std::hypot(s.x.at(i, j), s.x.at(i, j + 1));
            CHECK(std::abs(r0 - r1) < 1e-12);
        }
}

TEST_CASE("swiss-roll task applies the monotone arclength map exactly") {
    BenchmarkTask plain = task_from_spec("gaussian:d=1:rho=0.8");
    BenchmarkTask roll = task_from_spec("swiss-roll:rho=0.8");
    PairedDataset u = sample_task(plain, 300, 29);
    PairedDataset s = sample_task(roll, 300, 29);
    for (int i = 0; i < 300; ++i) {
        CHECK(s.x.at(i, 0) == arclength(u.x.at(i, 0)));
        CHECK(s.y.at(i, 0) == arclength(u.y.at(i, 0)));
    }
    for (double t = -3.0; t < 3.0; t += 0.25)
        CHECK(arclength(t + 0.25) > arclength(t));  // strictly increasing
}

TEST_CASE("task specs round-trip through their canonical form") {
    for (const char* spec :
         {"gaussian:d=8:rho=0.6", "student:d=4:rho=0.5:nu=3", "mog1:d=2",
          "mog2:d=4:mix=rot", "cube:d=8:rho=0.6", "tanh-exp:d=4:rho=0.4",
          "spiral:d=2:rho=0.6", "swiss-roll:rho=0.8:mix=none"}) {
        BenchmarkTask t = task_from_spec(spec);
        BenchmarkTask u = task_from_spec(t.spec());
        CHECK(u.base == t.base);
        CHECK(u.pairs == t.pairs);
        CHECK(u.rho == t.rho);
        CHECK(u.nu == t.nu);
        CHECK(u.transform == t.transform);
        CHECK(u.mixing == t.mixing);
        CHECK(u.spec() == t.spec());
    }
    // Shorthand families expand to a gaussian base with that transform.
    BenchmarkTask c = task_from_spec("cube:d=8:rho=0.6");
    CHECK(c.base == Base::gaussian);
    CHECK(c.transform == Transform::cube);
    BenchmarkTask sp = task_from_spec("spiral");
    CHECK(sp.pairs == 2);  // smallest block the twist acts on
}

TEST_CASE("task spec validation") {
    CHECK_THROWS_AS((void)task_from_spec(""), TaskError);
    CHECK_THROWS_AS((void)task_from_spec("squircle:d=2"), TaskError);
    CHECK_THROWS_AS((void)task_from_spec("gaussian:k=3"), TaskError);
    CHECK_THROWS_AS((void)task_from_spec("gaussian:rho=abc"), TaskError);
    CHECK_THROWS_AS((void)task_from_spec("gaussian:rho=1.0"), TaskError);
    CHECK_THROWS_AS((void)task_from_spec("gaussian:d=2.5"), TaskError);
    CHECK_THROWS_AS((void)task_from_spec("gaussian:d=0"), TaskError);
    CHECK_THROWS_AS((void)task_from_spec("student:d=2:nu=0.5"), TaskError);
    CHECK_THROWS_AS((void)task_from_spec("mog1:rho=0.5"), TaskError);
    CHECK_THROWS_AS((void)task_from_spec("gaussian:nu=3"), TaskError);
    CHECK_THROWS_AS((void)task_from_spec("swiss-roll:d=2"), TaskError);
    CHECK_THROWS_AS((void)task_from_spec("gaussian:d=1:tf=spiral"), TaskError);
    CHECK_THROWS_AS((void)task_from_spec("gaussian:tf=donut"), TaskError);
    CHECK_THROWS_AS((void)task_from_spec("gaussian:mix=shear"), TaskError);
    CHECK_THROWS_AS((void)task_from_spec("gaussian:d"), TaskError);

    BenchmarkTask ok = task_from_spec("gaussian:d=2:rho=0.5");
    CHECK_THROWS_AS((void)sample_task(ok, 0, 1), ShapeError);
    CHECK_THROWS_AS((void)mc_oracle(ok, 1, 1), ConfigError);
    BenchmarkTask mog = task_from_spec("mog1:d=1");
    CHECK_THROWS_AS((void)ground_truth_mi(mog, 100000), ConfigError);
}

TEST_CASE("sweep grids materialize the figure families at desk scale") {
    SweepSpec g;
    g.family = "gaussian-rho";
    std::vector<BenchmarkTask> tasks = paper_sweep(g);
    REQUIRE(tasks.size() == 4);
    for (size_t i = 0; i < tasks.size(); ++i) {
        CHECK(tasks[i].pairs == 8);  // 16 total at the default cap
        CHECK(tasks[i].rho == g.rho_grid[i]);
        CHECK(tasks[i].mixing == Mixing::rotation);
        CHECK(has_analytic_truth(tasks[i]));
        CHECK(tasks[i].family == "gaussian-rho");
    }

    SweepSpec m;
    m.family = "mog-dim";
    std::vector<BenchmarkTask> mog = paper_sweep(m);
    REQUIRE(mog.size() == 4);
    const int want_pairs[] = {1, 2, 4, 8};
    for (size_t i = 0; i < mog.size(); ++i) {
        CHECK(mog[i].base == Base::mog1);
        CHECK(mog[i].pairs == want_pairs[i]);
        CHECK(!has_analytic_truth(mog[i]));
    }

    SweepSpec s;
    s.family = "swiss-roll-rho";
    for (const BenchmarkTask& t : paper_sweep(s)) {
        CHECK(t.pairs == 1);
        CHECK(t.transform == Transform::swiss_roll);
        CHECK(t.mixing == Mixing::identity);  // manifold kept untouched
    }

    SweepSpec sp;
    sp.family = "spiral-dim";
    std::vector<BenchmarkTask> spiral = paper_sweep(sp);
    REQUIRE(spiral.size() == 3);  // the 2-D entry has no room for a twist
    CHECK(spiral[0].pairs == 2);

    SweepSpec capped;
    capped.family = "cube-dim";
    capped.dim_cap = 8;
    CHECK(paper_sweep(capped).size() == 3);  // 16 is capped out

    SweepSpec full;
    full.family = "gaussian-rho";
    full.dim_cap = 64;  // paper-scale flag
    CHECK(paper_sweep(full)[0].pairs == 32);

    SweepSpec bad;
    bad.family = "squircle-rho";
    CHECK_THROWS_AS((void)paper_sweep(bad), TaskError);
    SweepSpec odd;
    odd.family = "cube-dim";
    odd.dim_grid = {3};
    CHECK_THROWS_AS((void)paper_sweep(odd), TaskError);
    SweepSpec empty;
    empty.family = "spiral-dim";
    empty.dim_grid = {2};
    CHECK_THROWS_AS((void)paper_sweep(empty), TaskError);
    SweepSpec badrho;
    badrho.family = "gaussian-rho";
    badrho.rho_grid = {0.5, 1.0};
    CHECK_THROWS_AS((void)paper_sweep(badrho), TaskError);

    for (const std::string& name : sweep_family_names()) {
        SweepSpec any;
        any.family = name;
        CHECK(!paper_sweep(any).empty());
    }
}

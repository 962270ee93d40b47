#include "vcmi/benchmarks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "vcmi/errors.hpp"
#include "vcmi/kernels.hpp"
#include "vcmi/rng.hpp"

namespace vcmi::bench {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr uint64_t kOracleSalt = 0x6f7261636c65ull;  // stirs the truth stream
constexpr uint64_t kMixSalt = 0x6d697878ull;         // stirs the mixing stream
constexpr double kSweepRho = 0.6;  // fixed dependence for dimension sweeps

std::string fmt_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string fmt_exact(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// One mixture component: per-pair means and cross-correlation.
struct MogComp {
    double mx, my, c;
};

const std::vector<MogComp>& mog_components(Base b) {
    static const std::vector<MogComp> one = {{0.0, 0.0, 0.75}, {0.0, 0.0, -0.75}};
    static const std::vector<MogComp> two = {{1.0, 1.0, 0.6},
                                             {-1.0, -1.0, 0.6},
                                             {1.0, -1.0, -0.6},
                                             {-1.0, 1.0, -0.6}};
    return b == Base::mog1 ? one : two;
}

// Fixed base draw order, independent of transform and mixing, so a transformed
// task's samples are elementwise transforms of its base task's samples.
void draw_base_row(const BenchmarkTask& t, Rng& r, double* x, double* y) {
    switch (t.base) {
        case Base::gaussian:
        case Base::student_t: {
            const double s = std::sqrt(1.0 - t.rho * t.rho);
            for (int j = 0; j < t.pairs; ++j) {
                const double a = r.normal();
                x[j] = a;
                y[j] = t.rho * a + s * r.normal();
            }
            if (t.base == Base::student_t) {
                const double w = r.chi_square(t.nu) / t.nu;
                const double inv = 1.0 / std::sqrt(w);
                for (int j = 0; j < t.pairs; ++j) {
                    x[j] *= inv;
                    y[j] *= inv;
                }
            }
            return;
        }
        case Base::mog1:
        case Base::mog2: {
            const auto& comps = mog_components(t.base);
            const MogComp& k = comps[static_cast<size_t>(
                r.uniform_int(static_cast<int>(comps.size())))];
            const double s = std::sqrt(1.0 - k.c * k.c);
            for (int j = 0; j < t.pairs; ++j) {
                const double a = r.normal();
                const double b = k.c * a + s * r.normal();
                x[j] = k.mx + a;
                y[j] = k.my + b;
            }
            return;
        }
    }
    throw TaskError("unknown base family");
}

// Signed arclength of the spiral (t cos t, t sin t); strictly increasing.
double swiss_roll_arclength(double t) {
    return 0.5 * (t * std::sqrt(1.0 + t * t) + std::asinh(t));
}

// Rotate consecutive coordinate pairs by an angle equal to their radius.
void twist_block(double* v, int d) {
    for (int j = 0; j + 1 < d; j += 2) {
        const double a = v[j], b = v[j + 1];
        const double r = std::sqrt(a * a + b * b);
        const double ca = std::cos(r), sa = std::sin(r);
        v[j] = ca * a - sa * b;
        v[j + 1] = sa * a + ca * b;
    }
}

void apply_transform(const BenchmarkTask& t, double* x, double* y) {
    switch (t.transform) {
        case Transform::none:
            return;
        case Transform::tanh_exp:
            for (int j = 0; j < t.pairs; ++j) x[j] = std::tanh(x[j]);
            for (int j = 0; j < t.pairs; ++j) y[j] = std::exp(y[j]);
            return;
        case Transform::cube:
            for (int j = 0; j < t.pairs; ++j) x[j] = x[j] * x[j] * x[j];
            for (int j = 0; j < t.pairs; ++j) y[j] = y[j] * y[j] * y[j];
            return;
        case Transform::spiral:
            twist_block(x, t.pairs);
            twist_block(y, t.pairs);
            return;
        case Transform::swiss_roll:
            for (int j = 0; j < t.pairs; ++j) x[j] = swiss_roll_arclength(x[j]);
            for (int j = 0; j < t.pairs; ++j) y[j] = swiss_roll_arclength(y[j]);
            return;
    }
    throw TaskError("unknown transform");
}

// ----- closed-form log densities for the oracle --------------------------

// log N2((a,b); means 0, unit variances, correlation c) minus the two
// standard-normal marginal log densities.
double pair_gauss_log_ratio(double a, double b, double c) {
    const double om = 1.0 - c * c;
    const double quad = (a * a - 2.0 * c * a * b + b * b) / om;
    return -0.5 * std::log(om) - 0.5 * (quad - a * a - b * b);
}

// log density of a p-dimensional multivariate t with dof nu, scale matrix
// log-determinant ld, and Mahalanobis quadratic q.
double mvt_logpdf(double q, double ld, int p, double nu) {
    return std::lgamma(0.5 * (nu + p)) - std::lgamma(0.5 * nu) -
           0.5 * p * std::log(nu * M_PI) - 0.5 * ld -
           0.5 * (nu + p) * std::log1p(q / nu);
}

double log_normal1(double v) { return -0.5 * (kLog2Pi + v * v); }

double log_normal2(double a, double b, double c) {
    const double om = 1.0 - c * c;
    return -kLog2Pi - 0.5 * std::log(om) -
           0.5 * (a * a - 2.0 * c * a * b + b * b) / om;
}

double logsumexp(const double* v, int n) {
    double mx = v[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, v[i]);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += std::exp(v[i] - mx);
    return mx + std::log(acc);
}

// log p(x,y) - log p(x) - log p(y) for one base draw.
double base_log_ratio(const BenchmarkTask& t, const double* x, const double* y) {
    switch (t.base) {
        case Base::gaussian: {
            double acc = 0.0;
            for (int j = 0; j < t.pairs; ++j)
                acc += pair_gauss_log_ratio(x[j], y[j], t.rho);
            return acc;
        }
        case Base::student_t: {
            const double om = 1.0 - t.rho * t.rho;
            double qj = 0.0, qx = 0.0, qy = 0.0;
            for (int j = 0; j < t.pairs; ++j) {
                qj += (x[j] * x[j] - 2.0 * t.rho * x[j] * y[j] + y[j] * y[j]) / om;
                qx += x[j] * x[j];
                qy += y[j] * y[j];
            }
            const double ld = t.pairs * std::log(om);
            return mvt_logpdf(qj, ld, 2 * t.pairs, t.nu) -
                   mvt_logpdf(qx, 0.0, t.pairs, t.nu) -
                   mvt_logpdf(qy, 0.0, t.pairs, t.nu);
        }
        case Base::mog1:
        case Base::mog2: {
            const auto& comps = mog_components(t.base);
            const int K = static_cast<int>(comps.size());
            const double logw = -std::log(static_cast<double>(K));
            double lj[4] = {}, lx[4] = {}, ly[4] = {};
            for (int k = 0; k < K; ++k) {
                const MogComp& c = comps[static_cast<size_t>(k)];
                double aj = 0.0, ax = 0.0, ay = 0.0;
                for (int j = 0; j < t.pairs; ++j) {
                    aj += log_normal2(x[j] - c.mx, y[j] - c.my, c.c);
                    ax += log_normal1(x[j] - c.mx);
                    ay += log_normal1(y[j] - c.my);
                }
                lj[k] = logw + aj;
                lx[k] = logw + ax;
                ly[k] = logw + ay;
            }
            return logsumexp(lj, K) - logsumexp(lx, K) - logsumexp(ly, K);
        }
    }
    throw TaskError("unknown base family");
}

}  // namespace

// ----- names and specs ------------------------------------------------------

const char* base_name(Base b) {
    switch (b) {
        case Base::gaussian: return "gaussian";
        case Base::student_t: return "student";
        case Base::mog1: return "mog1";
        case Base::mog2: return "mog2";
    }
    throw TaskError("unknown base family");
}

const char* transform_name(Transform t) {
    switch (t) {
        case Transform::none: return "none";
        case Transform::tanh_exp: return "tanh-exp";
        case Transform::cube: return "cube";
        case Transform::spiral: return "spiral";
        case Transform::swiss_roll: return "swiss-roll";
    }
    throw TaskError("unknown transform");
}

const char* mixing_name(Mixing m) {
    return m == Mixing::identity ? "none" : "rot";
}

std::string BenchmarkTask::spec() const {
    std::string s = base_name(base);
    s += ":d=" + std::to_string(pairs);
    if (base == Base::gaussian || base == Base::student_t)
        s += ":rho=" + fmt_g(rho);
    if (base == Base::student_t) s += ":nu=" + fmt_g(nu);
    s += std::string(":tf=") + transform_name(transform);
    s += std::string(":mix=") + mixing_name(mixing);
    return s;
}

std::string BenchmarkTask::base_key() const {
    std::string s = base_name(base);
    s += ":d=" + std::to_string(pairs);
    if (base == Base::gaussian || base == Base::student_t)
        s += ":rho=" + fmt_exact(rho);
    if (base == Base::student_t) s += ":nu=" + fmt_exact(nu);
    return s;
}

void validate_task(const BenchmarkTask& t) {
    if (t.pairs < 1) throw TaskError("per-block dimension must be at least 1");
    if (t.base == Base::gaussian || t.base == Base::student_t) {
        if (!std::isfinite(t.rho) || std::abs(t.rho) >= 1.0)
            throw TaskError("rho must lie in (-1, 1)");
    }
    if (t.base == Base::student_t && (!std::isfinite(t.nu) || t.nu < 1.0))
        throw TaskError("nu must be >= 1");
    if (t.transform == Transform::swiss_roll && t.pairs != 1)
        throw TaskError("the swiss-roll task is 1+1 dimensional");
    if (t.transform == Transform::spiral && t.pairs < 2)
        throw TaskError("the spiral twist needs at least two coordinates per block");
}

BenchmarkTask task_from_spec(const std::string& spec) {
    std::vector<std::string> parts;
    size_t pos = 0;
    while (pos <= spec.size()) {
        const size_t next = spec.find(':', pos);
        const size_t end = next == std::string::npos ? spec.size() : next;
        parts.push_back(spec.substr(pos, end - pos));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    if (parts.empty() || parts[0].empty())
        throw TaskError("empty task spec");

    BenchmarkTask t;
    t.family = parts[0];
    const std::string& head = parts[0];
    bool d_set = false;
    if (head == "gaussian") {
        t.base = Base::gaussian;
    } else if (head == "student") {
        t.base = Base::student_t;
    } else if (head == "mog1") {
        t.base = Base::mog1;
    } else if (head == "mog2") {
        t.base = Base::mog2;
    } else if (head == "tanh-exp") {
        t.transform = Transform::tanh_exp;
    } else if (head == "cube") {
        t.transform = Transform::cube;
    } else if (head == "spiral") {
        t.transform = Transform::spiral;
        t.pairs = 2;
    } else if (head == "swiss-roll") {
        t.transform = Transform::swiss_roll;
    } else {
        throw TaskError("unknown task family: " + head);
    }

    auto parse_double = [&](const std::string& key, const std::string& val) {
        try {
            size_t used = 0;
            const double v = std::stod(val, &used);
            if (used != val.size()) throw TaskError("");
            return v;
        } catch (...) {
            throw TaskError("malformed value for " + key + ": " + val);
        }
    };

    for (size_t i = 1; i < parts.size(); ++i) {
        const std::string& kv = parts[i];
        const size_t eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw TaskError("malformed task spec field: " + kv);
        const std::string key = kv.substr(0, eq);
        const std::string val = kv.substr(eq + 1);
        if (key == "d") {
            const double v = parse_double(key, val);
            if (v != std::floor(v) || v < 1 || v > 1024)
                throw TaskError("d must be a small positive integer");
            t.pairs = static_cast<int>(v);
            d_set = true;
        } else if (key == "rho") {
            if (t.base != Base::gaussian && t.base != Base::student_t)
                throw TaskError("mixture tasks take no rho parameter");
            t.rho = parse_double(key, val);
        } else if (key == "nu") {
            if (t.base != Base::student_t)
                throw TaskError("only student tasks take nu");
            t.nu = parse_double(key, val);
        } else if (key == "tf") {
            bool found = false;
            for (Transform tr : {Transform::none, Transform::tanh_exp,
                                 Transform::cube, Transform::spiral,
                                 Transform::swiss_roll})
                if (val == transform_name(tr)) {
                    t.transform = tr;
                    found = true;
                }
            if (!found) throw TaskError("unknown transform: " + val);
        } else if (key == "mix") {
            if (val == "none" || val == "identity") {
                t.mixing = Mixing::identity;
            } else if (val == "rot" || val == "rotation") {
                t.mixing = Mixing::rotation;
            } else {
                throw TaskError("unknown mixing: " + val);
            }
        } else {
            throw TaskError("unknown task spec key: " + key);
        }
    }
    if (t.transform == Transform::spiral && !d_set) t.pairs = 2;
    validate_task(t);
    return t;
}

// ----- sampling -------------------------------------------------------------

Matrix mixing_matrix(const BenchmarkTask& t, char block) {
    if (block != 'x' && block != 'y') throw TaskError("block must be 'x' or 'y'");
    const int d = t.pairs;
    Matrix A(d, d);
    if (t.mixing == Mixing::identity) {
        for (int i = 0; i < d; ++i) A.at(i, i) = 1.0;
        return A;
    }
    Rng r(fnv1a64(t.base_key() + ":mix:" + block) ^ kMixSalt);
    Eigen::MatrixXd M(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) M(i, j) = r.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
    Eigen::MatrixXd Q = qr.householderQ();
    const Eigen::MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < d; ++j)
        if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
    for (int j = 0; j < d; ++j) {
        const double scale = 0.8 + 0.45 * r.uniform();  // in [0.8, 1.25]
        Q.col(j) *= scale;
    }
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) A.at(i, j) = Q(i, j);
    return A;
}

PairedDataset sample_task(const BenchmarkTask& t, int n, uint64_t seed) {
    validate_task(t);
    if (n < 1) throw ShapeError("sample count must be at least 1");

    PairedDataset out;
    out.x = Matrix(n, t.pairs);
    out.y = Matrix(n, t.pairs);
    Rng r(seed);
    for (int i = 0; i < n; ++i) {
        draw_base_row(t, r, out.x.row(i), out.y.row(i));
        apply_transform(t, out.x.row(i), out.y.row(i));
    }
    if (t.mixing == Mixing::rotation) {
        const Matrix Ax = mixing_matrix(t, 'x');
        const Matrix Ay = mixing_matrix(t, 'y');
        Matrix mx(n, t.pairs), my(n, t.pairs);
        kernels::active().gemm_nt(n, t.pairs, t.pairs, out.x.data(), Ax.data(),
                                  mx.data(), false);
        kernels::active().gemm_nt(n, t.pairs, t.pairs, out.y.data(), Ay.data(),
                                  my.data(), false);
        out.x = std::move(mx);
        out.y = std::move(my);
    }
    return out;
}

// ----- ground truth -----------------------------------------------------

bool has_analytic_truth(const BenchmarkTask& t) {
    return t.base == Base::gaussian;
}

GroundTruth mc_oracle(const BenchmarkTask& t, long samples, uint64_t seed) {
    validate_task(t);
    if (samples < 2) throw ConfigError("oracle needs at least two samples");

    Rng r(seed);
    std::vector<double> x(static_cast<size_t>(t.pairs));
    std::vector<double> y(static_cast<size_t>(t.pairs));
    double mean = 0.0, m2 = 0.0;
    for (long i = 0; i < samples; ++i) {
        draw_base_row(t, r, x.data(), y.data());
        const double v = base_log_ratio(t, x.data(), y.data());
        const double delta = v - mean;
        mean += delta / static_cast<double>(i + 1);
        m2 += delta * (v - mean);
    }
    GroundTruth g;
    g.value = mean;
    g.sigma = std::sqrt(m2 / static_cast<double>(samples - 1) /
                        static_cast<double>(samples));
    g.analytic = false;
    g.samples = samples;
    return g;
}

GroundTruth ground_truth_mi(const BenchmarkTask& t, long oracle_samples) {
    validate_task(t);
    if (has_analytic_truth(t)) {
        GroundTruth g;
        g.value = -0.5 * t.pairs * std::log1p(-t.rho * t.rho);
        return g;
    }
    if (oracle_samples < 1000000)
        throw ConfigError("reported truths need at least 1e6 oracle samples");
    return mc_oracle(t, oracle_samples, fnv1a64(t.base_key()) ^ kOracleSalt);
}

// ----- sweep grids ----------------------------------------------------------

namespace {

BenchmarkTask sweep_task(const std::string& family, Base base, int pairs,
                         double rho, Transform tf, bool mixed) {
    BenchmarkTask t;
    t.family = family;
    t.base = base;
    t.pairs = pairs;
    t.rho = rho;
    t.transform = tf;
    t.mixing = mixed ? Mixing::rotation : Mixing::identity;
    validate_task(t);
    return t;
}

}  // namespace

std::vector<std::string> sweep_family_names() {
    return {"gaussian-rho", "tanh-exp-rho", "cube-rho",    "student-rho",
            "swiss-roll-rho", "spiral-dim", "cube-dim",    "student-dim",
            "mog-dim",        "mog2-dim"};
}

std::vector<BenchmarkTask> paper_sweep(const SweepSpec& spec) {
    if (spec.dim_cap < 2) throw TaskError("dim_cap must be at least 2");
    const int cap_pairs = spec.dim_cap / 2;

    const bool rho_family =
        spec.family == "gaussian-rho" || spec.family == "tanh-exp-rho" ||
        spec.family == "cube-rho" || spec.family == "student-rho" ||
        spec.family == "swiss-roll-rho";
    const bool dim_family =
        spec.family == "spiral-dim" || spec.family == "cube-dim" ||
        spec.family == "student-dim" || spec.family == "mog-dim" ||
        spec.family == "mog2-dim";
    if (!rho_family && !dim_family)
        throw TaskError("unknown sweep family: " + spec.family);

    std::vector<BenchmarkTask> tasks;
    if (rho_family) {
        Base base = Base::gaussian;
        Transform tf = Transform::none;
        // Full-scale block dimensions follow the evaluation figures (32 pairs
        // for the plain Gaussian, 16 for the transformed families); the cap
        // brings them down to desk scale.
        int pairs = std::min(32, cap_pairs);
        bool mixed = spec.mixed;
        if (spec.family == "tanh-exp-rho") {
            tf = Transform::tanh_exp;
            pairs = std::min(16, cap_pairs);
        } else if (spec.family == "cube-rho") {
            tf = Transform::cube;
            pairs = std::min(16, cap_pairs);
        } else if (spec.family == "student-rho") {
            base = Base::student_t;
            pairs = std::min(16, cap_pairs);
        } else if (spec.family == "swiss-roll-rho") {
            tf = Transform::swiss_roll;
            pairs = 1;
            mixed = false;  // keep the manifold construction untouched
        }
        for (double rho : spec.rho_grid) {
            if (!std::isfinite(rho) || std::abs(rho) >= 1.0)
                throw TaskError("rho grid values must lie in (-1, 1)");
            tasks.push_back(sweep_task(spec.family, base, pairs, rho, tf, mixed));
        }
    } else {
        Base base = Base::gaussian;
        Transform tf = Transform::none;
        if (spec.family == "spiral-dim") tf = Transform::spiral;
        if (spec.family == "cube-dim") tf = Transform::cube;
        if (spec.family == "student-dim") base = Base::student_t;
        if (spec.family == "mog-dim") base = Base::mog1;
        if (spec.family == "mog2-dim") base = Base::mog2;
        for (int total : spec.dim_grid) {
            if (total < 2 || total % 2 != 0)
                throw TaskError("dimension grid entries must be even and >= 2");
            if (total > spec.dim_cap) continue;  // capped out
            const int pairs = total / 2;
            if (tf == Transform::spiral && pairs < 2) continue;  // twist inert
            tasks.push_back(
                sweep_task(spec.family, base, pairs, kSweepRho, tf, spec.mixed));
        }
    }
    if (tasks.empty()) throw TaskError("sweep grid is empty after the cap");
    return tasks;
}

}  // namespace vcmi::bench

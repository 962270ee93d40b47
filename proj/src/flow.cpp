#include "vcmi/flow.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "vcmi/errors.hpp"
#include "vcmi/kernels.hpp"
#include "vcmi/rng.hpp"
#include "vcmi/textio.hpp"

namespace vcmi::flow {

namespace {

void validate_config(const FlowConfig& cfg) {
    if (cfg.hidden_width < 1 || cfg.hidden_layers < 1)
        throw ConfigError("flow net shape must be positive");
    if (!(cfg.lr > 0.0)) throw ConfigError("flow learning rate must be positive");
    if (cfg.batch < 1 || cfg.max_epochs < 0 || cfg.patience < 0)
        throw ConfigError("flow training counts out of range");
    if (!(cfg.val_fraction > 0.0) || !(cfg.val_fraction < 1.0))
        throw ConfigError("flow validation fraction must lie in (0,1)");
    if (cfg.rk4_steps < 1) throw ConfigError("rk4_steps must be positive");
    if (cfg.min_train_rows < 0) throw ConfigError("min_train_rows must be nonnegative");
}

// [state | t] feature rows for the velocity net.
void build_input(const Matrix& state, double t, Matrix& input) {
    const int n = state.rows;
    const int d = state.cols;
    for (int i = 0; i < n; ++i) {
        const double* s = state.row(i);
        double* o = input.row(i);
        std::copy(s, s + d, o);
        o[d] = t;
    }
}

// Velocity evaluation with caller-owned scratch.
void velocity(const nn::MlpParams& net, const Matrix& state, double t,
              Matrix& input, Matrix& out) {
    build_input(state, t, input);
    nn::forward(net, input, out);
}

}  // namespace

double flow_matching_loss(const nn::MlpParams& net, const Matrix& x,
                          const Matrix& eps, const std::vector<double>& t) {
    const int n = x.rows;
    const int d = x.cols;
    if (n < 1) throw ShapeError("flow matching loss needs at least one row");
    if (eps.rows != n || eps.cols != d || static_cast<int>(t.size()) != n)
        throw ShapeError("flow matching loss inputs disagree in shape");
    Matrix input(n, d + 1);
    for (int i = 0; i < n; ++i) {
        const double ti = t[static_cast<size_t>(i)];
        const double* xr = x.row(i);
        const double* er = eps.row(i);
        double* o = input.row(i);
        for (int j = 0; j < d; ++j) o[j] = (1.0 - ti) * er[j] + ti * xr[j];
        o[d] = ti;
    }
    Matrix v;
    nn::forward(net, input, v);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* vr = v.row(i);
        const double* xr = x.row(i);
        const double* er = eps.row(i);
        for (int j = 0; j < d; ++j) {
            const double r = vr[j] - (xr[j] - er[j]);
            acc += r * r;
        }
    }
    return acc / (static_cast<double>(n) * d);
}

FlowModel train_marginal_flow(const Matrix& x, const FlowConfig& cfg, uint64_t seed) {
    validate_config(cfg);
    const int n = x.rows;
    const int d = x.cols;
    if (n < 2 || d < 1) throw ShapeError("flow training needs >= 2 rows, >= 1 column");

    FlowModel m;
    m.dim = d;
    m.rk4_steps = cfg.rk4_steps;
    m.shift.assign(static_cast<size_t>(d), 0.0);
    m.scale.assign(static_cast<size_t>(d), 0.0);
    for (int i = 0; i < n; ++i) {
        const double* r = x.row(i);
        for (int j = 0; j < d; ++j) {
            if (!std::isfinite(r[j])) throw DataError("flow input is not finite");
            m.shift[static_cast<size_t>(j)] += r[j];
        }
    }
    for (double& v : m.shift) v /= n;
    for (int i = 0; i < n; ++i) {
        const double* r = x.row(i);
        for (int j = 0; j < d; ++j) {
            const double c = r[j] - m.shift[static_cast<size_t>(j)];
            m.scale[static_cast<size_t>(j)] += c * c;
        }
    }
    for (int j = 0; j < d; ++j) {
        const double s = std::sqrt(m.scale[static_cast<size_t>(j)] / n);
        if (!(s > 1e-10))
            throw DataError("flow input column " + std::to_string(j) +
                            " is (numerically) constant");
        m.scale[static_cast<size_t>(j)] = s;
    }

    std::vector<int> sizes;
    sizes.push_back(d + 1);
    for (int l = 0; l < cfg.hidden_layers; ++l) sizes.push_back(cfg.hidden_width);
    sizes.push_back(d);
    m.net = nn::make_mlp(sizes, nn::Activation::softplus);

    if (n < cfg.min_train_rows) {
        // Whitening-only flow: the zero-initialized net is the zero velocity
        // field, so encode reduces to the affine map.
        m.fit.fallback = true;
        return m;
    }

    Matrix Xw(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            Xw.at(i, j) = (x.at(i, j) - m.shift[static_cast<size_t>(j)]) /
                          m.scale[static_cast<size_t>(j)];

    const Rng master(seed);
    {
        Rng r_init = master.child("init");
        nn::init_params(m.net, r_init);
    }

    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    {
        Rng r_split = master.child("split");
        r_split.shuffle(idx);
    }
    const int n_val = std::max(1, static_cast<int>(std::lround(cfg.val_fraction * n)));
    const int n_train = n - n_val;
    if (n_train < 1) throw DataError("flow training split left no training rows");
    const Matrix Xtr =
        Xw.gather_rows(std::vector<int>(idx.begin(), idx.begin() + n_train));
    const Matrix Xval =
        Xw.gather_rows(std::vector<int>(idx.begin() + n_train, idx.end()));

    // Frozen validation noise: early stopping compares like with like.
    Matrix eps_val(n_val, d);
    std::vector<double> t_val(static_cast<size_t>(n_val));
    {
        Rng r_val = master.child("val noise");
        for (int i = 0; i < n_val; ++i) {
            t_val[static_cast<size_t>(i)] = r_val.uniform();
            r_val.fill_normal(eps_val.row(i), d);
        }
    }

    double best_val = flow_matching_loss(m.net, Xval, eps_val, t_val);
    m.fit.init_val_loss = best_val;
    nn::MlpParams best_params = m.net;

    nn::AdamState adam = nn::make_adam(m.net, cfg.lr);
    nn::Workspace ws;
    nn::Gradients grads;
    const int batch = std::min(cfg.batch, n_train);
    std::vector<double> eps_row(static_cast<size_t>(d));
    Matrix v;

    int bad = 0;
    double train_loss = 0.0;
    for (int e = 0; e < cfg.max_epochs; ++e) {
        Rng r_ep = master.child("epoch " + std::to_string(e));
        std::vector<int> order(static_cast<size_t>(n_train));
        for (int i = 0; i < n_train; ++i) order[static_cast<size_t>(i)] = i;
        r_ep.shuffle(order);

        double loss_acc = 0.0;
        for (int start = 0; start < n_train; start += batch) {
            const int bsize = std::min(batch, n_train - start);
            Matrix input(bsize, d + 1), target(bsize, d), dV(bsize, d);
            for (int i = 0; i < bsize; ++i) {
                const double* src = Xtr.row(order[static_cast<size_t>(start + i)]);
                const double t = r_ep.uniform();
                r_ep.fill_normal(eps_row.data(), d);
                double* in_row = input.row(i);
                double* tg = target.row(i);
                for (int j = 0; j < d; ++j) {
                    const double ej = eps_row[static_cast<size_t>(j)];
                    in_row[j] = (1.0 - t) * ej + t * src[j];
                    tg[j] = src[j] - ej;
                }
                in_row[d] = t;
            }
            nn::forward(m.net, input, v, &ws);
            double batch_loss = 0.0;
            const double inv = 1.0 / (static_cast<double>(bsize) * d);
            for (int i = 0; i < bsize; ++i)
                for (int j = 0; j < d; ++j) {
                    const double r = v.at(i, j) - target.at(i, j);
                    batch_loss += r * r;
                    dV.at(i, j) = 2.0 * r * inv;
                }
            batch_loss *= inv;
            loss_acc += batch_loss * bsize;
            nn::backward(m.net, input, ws, dV, grads);
            nn::adam_step(m.net, grads, adam);
        }
        train_loss = loss_acc / n_train;
        m.fit.epochs = e + 1;

        const double val = flow_matching_loss(m.net, Xval, eps_val, t_val);
        if (val < best_val) {
            best_val = val;
            best_params = m.net;
            bad = 0;
        } else if (++bad > cfg.patience) {
            m.fit.early_stopped = true;
            break;
        }
    }
    m.net = std::move(best_params);
    m.fit.best_val_loss = best_val;
    m.fit.final_train_loss = train_loss;
    return m;
}

namespace {

// One RK4 sweep of the probability-flow ODE over [t0, t0 + steps*h].
void integrate(const nn::MlpParams& net, Matrix& z, double t0, double h, int steps) {
    const int n = z.rows;
    const int d = z.cols;
    Matrix input(n, d + 1), k1, k2, k3, k4, tmp(n, d);
    for (int s = 0; s < steps; ++s) {
        const double t = t0 + h * s;
        velocity(net, z, t, input, k1);
        for (size_t i = 0; i < z.size(); ++i)
            tmp.a[i] = z.a[i] + 0.5 * h * k1.a[i];
        velocity(net, tmp, t + 0.5 * h, input, k2);
        for (size_t i = 0; i < z.size(); ++i)
            tmp.a[i] = z.a[i] + 0.5 * h * k2.a[i];
        velocity(net, tmp, t + 0.5 * h, input, k3);
        for (size_t i = 0; i < z.size(); ++i) tmp.a[i] = z.a[i] + h * k3.a[i];
        velocity(net, tmp, t + h, input, k4);
        const double w = h / 6.0;
        for (size_t i = 0; i < z.size(); ++i)
            z.a[i] += w * (k1.a[i] + 2.0 * k2.a[i] + 2.0 * k3.a[i] + k4.a[i]);
    }
}

void validate_model_shape(const FlowModel& m, const Matrix& x) {
    if (m.dim < 1) throw ShapeError("flow model is empty");
    if (x.cols != m.dim) throw ShapeError("flow input width != model dimension");
    if (static_cast<int>(m.shift.size()) != m.dim ||
        static_cast<int>(m.scale.size()) != m.dim)
        throw ShapeError("flow whitening parameters have wrong length");
}

}  // namespace

Matrix encode(const FlowModel& m, const Matrix& x, int steps) {
    validate_model_shape(m, x);
    if (x.rows < 1) throw ShapeError("flow encode needs at least one row");
    const int S = steps > 0 ? steps : m.rk4_steps;
    Matrix z(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j)
            z.at(i, j) = (x.at(i, j) - m.shift[static_cast<size_t>(j)]) /
                         m.scale[static_cast<size_t>(j)];
    integrate(m.net, z, 1.0, -1.0 / S, S);
    return z;
}

Matrix decode(const FlowModel& m, const Matrix& eps, int steps) {
    validate_model_shape(m, eps);
    if (eps.rows < 1) throw ShapeError("flow decode needs at least one row");
    const int S = steps > 0 ? steps : m.rk4_steps;
    Matrix z = eps;
    integrate(m.net, z, 0.0, 1.0 / S, S);
    for (int i = 0; i < z.rows; ++i)
        for (int j = 0; j < z.cols; ++j)
            z.at(i, j) = z.at(i, j) * m.scale[static_cast<size_t>(j)] +
                         m.shift[static_cast<size_t>(j)];
    return z;
}

void save_flow(std::ostream& out, const FlowModel& m) {
    using textio::g17;
    out << "vcmi-flow 1\n";
    out << "dim " << m.dim << "\n";
    out << "rk4_steps " << m.rk4_steps << "\n";
    out << "shift";
    for (double v : m.shift) out << " " << g17(v);
    out << "\nscale";
    for (double v : m.scale) out << " " << g17(v);
    out << "\nfit " << g17(m.fit.init_val_loss) << " " << g17(m.fit.best_val_loss)
        << " " << g17(m.fit.final_train_loss) << " " << m.fit.epochs << " "
        << (m.fit.early_stopped ? 1 : 0) << " " << (m.fit.fallback ? 1 : 0) << "\n";
    out << "net\n";
    nn::save_mlp(out, m.net, nullptr);
    out << "end\n";
    if (!out) throw IoError("flow serialization failed");
}

FlowModel load_flow(std::istream& in) {
    textio::TokenReader tr(in);
    tr.expect("vcmi-flow");
    if (tr.next_int() != 1) throw IoError("unsupported flow format version");
    FlowModel m;
    tr.expect("dim");
    m.dim = tr.next_int();
    if (m.dim < 1 || m.dim > 65536) throw IoError("flow dimension out of range");
    tr.expect("rk4_steps");
    m.rk4_steps = tr.next_int();
    if (m.rk4_steps < 1 || m.rk4_steps > 1000000)
        throw IoError("flow rk4_steps out of range");
    tr.expect("shift");
    m.shift.resize(static_cast<size_t>(m.dim));
    for (double& v : m.shift) v = tr.next_double();
    tr.expect("scale");
    m.scale.resize(static_cast<size_t>(m.dim));
    for (double& v : m.scale) {
        v = tr.next_double();
        if (!(v > 0.0)) throw IoError("flow scale must be positive");
    }
    tr.expect("fit");
    m.fit.init_val_loss = tr.next_double();
    m.fit.best_val_loss = tr.next_double();
    m.fit.final_train_loss = tr.next_double();
    m.fit.epochs = tr.next_int();
    m.fit.early_stopped = tr.next_int() != 0;
    m.fit.fallback = tr.next_int() != 0;
    tr.expect("net");
    nn::load_mlp(in, m.net, nullptr);
    tr.expect("end");
    if (m.net.sizes.empty() || m.net.sizes.front() != m.dim + 1 ||
        m.net.sizes.back() != m.dim)
        throw IoError("flow net shape disagrees with flow dimension");
    return m;
}

}  // namespace vcmi::flow

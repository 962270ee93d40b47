#include "vcmi/mlp.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "vcmi/errors.hpp"
#include "vcmi/kernels.hpp"
#include "vcmi/textio.hpp"

namespace vcmi::nn {

namespace {

double softplus(double z) {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

void apply_activation(Activation a, double slope, const Matrix& z, Matrix& h) {
    h.rows = z.rows;
    h.cols = z.cols;
    h.a.resize(z.a.size());
    size_t n = z.a.size();
    switch (a) {
        case Activation::identity:
            std::copy(z.a.begin(), z.a.end(), h.a.begin());
            break;
        case Activation::softplus:
            for (size_t i = 0; i < n; ++i) h.a[i] = softplus(z.a[i]);
            break;
        case Activation::leaky_relu:
            for (size_t i = 0; i < n; ++i) {
                double x = z.a[i];
                h.a[i] = x > 0.0 ? x : slope * x;
            }
            break;
    }
}

// dz = da (*) act'(z), in place on da.
void apply_activation_grad(Activation a, double slope, const Matrix& z, Matrix& da) {
    size_t n = z.a.size();
    switch (a) {
        case Activation::identity:
            break;
        case Activation::softplus:
            for (size_t i = 0; i < n; ++i) da.a[i] *= sigmoid(z.a[i]);
            break;
        case Activation::leaky_relu:
            for (size_t i = 0; i < n; ++i) {
                if (!(z.a[i] > 0.0)) da.a[i] *= slope;
            }
            break;
    }
}

void add_bias_rows(Matrix& y, const std::vector<double>& b) {
    for (int i = 0; i < y.rows; ++i) {
        double* r = y.row(i);
        for (int j = 0; j < y.cols; ++j) r[j] += b[j];
    }
}

bool all_finite(const double* x, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        if (!std::isfinite(x[i])) return false;
    }
    return true;
}

}  // namespace

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::softplus: return "softplus";
        case Activation::leaky_relu: return "leaky_relu";
    }
    return "?";
}

Activation activation_from_name(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "softplus") return Activation::softplus;
    if (s == "leaky_relu") return Activation::leaky_relu;
    throw IoError("unknown activation '" + s + "'");
}

size_t MlpParams::param_count() const {
    size_t n = 0;
    for (int l = 0; l < layers(); ++l) n += W[l].size() + b[l].size();
    return n;
}

bool MlpParams::finite() const {
    for (int l = 0; l < layers(); ++l) {
        if (!all_finite(W[l].data(), W[l].size())) return false;
        if (!all_finite(b[l].data(), b[l].size())) return false;
    }
    return true;
}

MlpParams make_mlp(const std::vector<int>& sizes, Activation hidden_act,
                   bool input_skip, double leaky_slope) {
    if (sizes.size() < 2) throw ShapeError("mlp: need at least input and output sizes");
    for (int s : sizes) {
        if (s <= 0) throw ShapeError("mlp: layer sizes must be positive");
    }
    MlpParams p;
    p.sizes = sizes;
    p.acts.assign(sizes.size() - 2, hidden_act);
    p.input_skip = input_skip;
    p.leaky_slope = leaky_slope;
    p.W.resize(p.layers());
    p.b.resize(p.layers());
    for (int l = 0; l < p.layers(); ++l) {
        p.W[l] = Matrix(p.sizes[l + 1], p.fan_in(l));
        p.b[l].assign(p.sizes[l + 1], 0.0);
    }
    return p;
}

void init_params(MlpParams& p, Rng& rng, double scale) {
    for (int l = 0; l < p.layers(); ++l) {
        double bound = scale / std::sqrt(static_cast<double>(p.fan_in(l)));
        for (auto& w : p.W[l].a) w = bound * (2.0 * rng.uniform() - 1.0);
        std::fill(p.b[l].begin(), p.b[l].end(), 0.0);
    }
}

void forward(const MlpParams& p, const Matrix& X, Matrix& Y, Workspace* ws) {
    if (X.cols != p.input_dim()) throw ShapeError("mlp forward: input width mismatch");
    if (X.rows == 0) throw ShapeError("mlp forward: empty batch");
    const auto& k = kernels::active();
    int L = p.layers();
    int nh = L - 1;
    Workspace local;
    Workspace& w = ws ? *ws : local;
    w.z.resize(nh);
    w.h.resize(nh);

    const Matrix* cur = &X;
    for (int l = 0; l < nh; ++l) {
        Matrix& z = w.z[l];
        z = Matrix(X.rows, p.sizes[l + 1]);
        k.gemm_nt(cur->rows, z.cols, cur->cols, cur->data(), p.W[l].data(), z.data(), false);
        add_bias_rows(z, p.b[l]);
        apply_activation(p.acts[l], p.leaky_slope, z, w.h[l]);
        cur = &w.h[l];
    }

    const Matrix* last_in = cur;
    if (p.input_skip && L > 1) {
        w.skip_in = hcat(*cur, X);
        last_in = &w.skip_in;
    }
    Y = Matrix(X.rows, p.output_dim());
    k.gemm_nt(last_in->rows, Y.cols, last_in->cols, last_in->data(), p.W[L - 1].data(),
              Y.data(), false);
    add_bias_rows(Y, p.b[L - 1]);
}

bool Gradients::finite() const {
    for (const auto& g : dW) {
        if (!all_finite(g.data(), g.size())) return false;
    }
    for (const auto& g : db) {
        if (!all_finite(g.data(), g.size())) return false;
    }
    return true;
}

void backward(const MlpParams& p, const Matrix& X, const Workspace& ws,
              const Matrix& dY, Gradients& g) {
    if (dY.rows != X.rows || dY.cols != p.output_dim())
        throw ShapeError("mlp backward: upstream gradient shape mismatch");
    const auto& k = kernels::active();
    int L = p.layers();
    int nh = L - 1;
    int batch = X.rows;

    g.dW.resize(L);
    g.db.resize(L);
    for (int l = 0; l < L; ++l) {
        g.dW[l] = Matrix(p.sizes[l + 1], p.fan_in(l));
        g.db[l].assign(p.sizes[l + 1], 0.0);
    }
    g.dX = Matrix(batch, p.input_dim());

    Matrix dz = dY;
    for (int l = L - 1; l >= 0; --l) {
        const Matrix* in = l == 0 ? &X : &ws.h[l - 1];
        if (p.input_skip && l == L - 1 && L > 1) in = &ws.skip_in;

        // dW = dz^T * in, db = column sums of dz
        k.gemm_tn(p.sizes[l + 1], in->cols, batch, dz.data(), in->data(), g.dW[l].data(),
                  false);
        for (int i = 0; i < batch; ++i)
            k.axpy(dz.cols, 1.0, dz.row(i), g.db[l].data());

        Matrix din(batch, p.fan_in(l));
        k.gemm_nn(batch, din.cols, dz.cols, dz.data(), p.W[l].data(), din.data(), false);

        Matrix da;
        if (p.input_skip && l == L - 1 && L > 1) {
            int hw = p.sizes[l];
            da = Matrix(batch, hw);
            for (int i = 0; i < batch; ++i) {
                const double* r = din.row(i);
                std::copy(r, r + hw, da.row(i));
                k.axpy(p.input_dim(), 1.0, r + hw, g.dX.row(i));
            }
        } else {
            da = std::move(din);
        }

        if (l == 0) {
            for (int i = 0; i < batch; ++i) k.axpy(p.input_dim(), 1.0, da.row(i), g.dX.row(i));
        } else {
            apply_activation_grad(p.acts[l - 1], p.leaky_slope, ws.z[l - 1], da);
            dz = std::move(da);
        }
    }
}

AdamState make_adam(const MlpParams& p, double lr) {
    AdamState s;
    s.lr = lr;
    s.m.resize(p.layers());
    s.v.resize(p.layers());
    s.mb.resize(p.layers());
    s.vb.resize(p.layers());
    for (int l = 0; l < p.layers(); ++l) {
        s.m[l] = Matrix(p.W[l].rows, p.W[l].cols);
        s.v[l] = Matrix(p.W[l].rows, p.W[l].cols);
        s.mb[l].assign(p.b[l].size(), 0.0);
        s.vb[l].assign(p.b[l].size(), 0.0);
    }
    return s;
}

void adam_step(MlpParams& p, const Gradients& g, AdamState& s) {
    if (!g.finite()) throw OptimizerError("adam: non-finite gradient");
    s.step += 1;
    s.b1t *= s.beta1;
    s.b2t *= s.beta2;
    const auto& k = kernels::active();
    for (int l = 0; l < p.layers(); ++l) {
        k.adam_update(static_cast<int>(p.W[l].size()), p.W[l].data(), g.dW[l].data(),
                      s.m[l].data(), s.v[l].data(), s.lr, s.beta1, s.beta2, s.eps, s.b1t,
                      s.b2t);
        k.adam_update(static_cast<int>(p.b[l].size()), p.b[l].data(), g.db[l].data(),
                      s.mb[l].data(), s.vb[l].data(), s.lr, s.beta1, s.beta2, s.eps, s.b1t,
                      s.b2t);
    }
}

void save_mlp(std::ostream& out, const MlpParams& p, const AdamState* adam) {
    using textio::g17;
    out << "vcmi-mlp 1\n";
    out << "sizes " << p.sizes.size();
    for (int s : p.sizes) out << ' ' << s;
    out << '\n';
    out << "acts";
    for (Activation a : p.acts) out << ' ' << activation_name(a);
    out << '\n';
    out << "skip " << (p.input_skip ? 1 : 0) << '\n';
    out << "leaky_slope " << g17(p.leaky_slope) << '\n';
    for (int l = 0; l < p.layers(); ++l) {
        out << "W " << l << ' ' << p.W[l].rows << ' ' << p.W[l].cols << '\n';
        for (int i = 0; i < p.W[l].rows; ++i)
            textio::write_doubles(out, p.W[l].row(i), p.W[l].cols);
        out << "b " << l << ' ' << p.b[l].size() << '\n';
        textio::write_doubles(out, p.b[l].data(), static_cast<int>(p.b[l].size()));
    }
    if (adam) {
        out << "adam " << g17(adam->lr) << ' ' << g17(adam->beta1) << ' ' << g17(adam->beta2)
            << ' ' << g17(adam->eps) << ' ' << adam->step << ' ' << g17(adam->b1t) << ' '
            << g17(adam->b2t) << '\n';
    }
    out << "end\n";
    if (!out) throw IoError("mlp checkpoint: write failed");
}

void load_mlp(std::istream& in, MlpParams& p, AdamState* adam) {
    textio::TokenReader r(in);
    r.expect("vcmi-mlp");
    r.expect("1");
    r.expect("sizes");
    int ns = r.next_int();
    if (ns < 2 || ns > 64) throw IoError("mlp checkpoint: bad layer count");
    std::vector<int> sizes(ns);
    for (int& s : sizes) {
        s = r.next_int();
        if (s <= 0) throw IoError("mlp checkpoint: bad layer size");
    }
    r.expect("acts");
    std::vector<Activation> acts(ns - 2);
    for (auto& a : acts) a = activation_from_name(r.next());
    r.expect("skip");
    int skip = r.next_int();
    r.expect("leaky_slope");
    double slope = r.next_double();

    p = make_mlp(sizes, Activation::identity, skip != 0, slope);
    p.acts = acts;
    for (int l = 0; l < p.layers(); ++l) {
        r.expect("W");
        if (r.next_int() != l) throw IoError("mlp checkpoint: weight blocks out of order");
        int rows = r.next_int(), cols = r.next_int();
        if (rows != p.W[l].rows || cols != p.W[l].cols)
            throw IoError("mlp checkpoint: weight shape mismatch");
        for (auto& w : p.W[l].a) w = r.next_double();
        r.expect("b");
        if (r.next_int() != l) throw IoError("mlp checkpoint: bias blocks out of order");
        if (r.next_int() != static_cast<int>(p.b[l].size()))
            throw IoError("mlp checkpoint: bias shape mismatch");
        for (auto& bv : p.b[l]) bv = r.next_double();
    }
    std::string tok = r.next();
    if (tok == "adam") {
        AdamState s = make_adam(p, 5e-4);
        s.lr = r.next_double();
        s.beta1 = r.next_double();
        s.beta2 = r.next_double();
        s.eps = r.next_double();
        s.step = r.next_long();
        s.b1t = r.next_double();
        s.b2t = r.next_double();
        if (adam) *adam = std::move(s);
        tok = r.next();
    } else if (adam) {
        *adam = make_adam(p, 5e-4);
    }
    if (tok != "end") throw IoError("mlp checkpoint: missing end marker");
}

}  // namespace vcmi::nn

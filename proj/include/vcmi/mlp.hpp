#pragma once

#include <iosfwd>
#include <vector>

#include "vcmi/matrix.hpp"
#include "vcmi/rng.hpp"

namespace vcmi::nn {

enum class Activation { identity, softplus, leaky_relu };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& s);

// Fully connected network. W[l] has shape sizes[l+1] x fan_in(l), row-major,
// applied as y = x W^T + b. Hidden layers use acts[l]; the output layer is
// always linear. With input_skip, the output layer sees [h_last | x]
// (dense concatenation of the last hidden state with the raw input).
struct MlpParams {
    std::vector<int> sizes;
    std::vector<Activation> acts;
    bool input_skip = false;
    double leaky_slope = 0.01;
    std::vector<Matrix> W;
    std::vector<std::vector<double>> b;

    int layers() const { return static_cast<int>(sizes.size()) - 1; }
    int input_dim() const { return sizes.front(); }
    int output_dim() const { return sizes.back(); }
    int fan_in(int l) const {
        return sizes[l] + (input_skip && l == layers() - 1 && layers() > 1 ? sizes[0] : 0);
    }
    size_t param_count() const;
    bool finite() const;
};

// Allocates zeroed parameters; sizes needs >= 2 entries, all positive.
MlpParams make_mlp(const std::vector<int>& sizes, Activation hidden_act,
                   bool input_skip = false, double leaky_slope = 0.01);

// W[l] ~ U(-scale/sqrt(fan_in), +scale/sqrt(fan_in)), biases zero.
void init_params(MlpParams& p, Rng& rng, double scale = 1.0);

// Intermediates captured by forward for use in backward.
struct Workspace {
    std::vector<Matrix> z;  // pre-activations of hidden layers
    std::vector<Matrix> h;  // post-activations of hidden layers
    Matrix skip_in;         // materialized [h_last | x] when input_skip
};

// Y = net(X); X is batch x input_dim. ws may be null when no backward follows.
void forward(const MlpParams& p, const Matrix& X, Matrix& Y, Workspace* ws = nullptr);

struct Gradients {
    std::vector<Matrix> dW;
    std::vector<std::vector<double>> db;
    Matrix dX;

    bool finite() const;
};

// Backpropagates upstream dY (batch x output_dim) through the forward pass
// recorded in ws; fills parameter gradients and the input gradient.
void backward(const MlpParams& p, const Matrix& X, const Workspace& ws,
              const Matrix& dY, Gradients& g);

struct AdamState {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    double b1t = 1.0;  // beta1^step, tracked incrementally
    double b2t = 1.0;
    std::vector<Matrix> m, v;
    std::vector<std::vector<double>> mb, vb;
};

AdamState make_adam(const MlpParams& p, double lr);

// One optimizer step. Throws OptimizerError if any gradient is non-finite;
// parameters are untouched in that case so the caller may skip the batch.
void adam_step(MlpParams& p, const Gradients& g, AdamState& s);

// Structured text checkpoint (layer sizes, activations, row-major weights,
// optimizer hyperparameters). Floats are written with 17 significant digits,
// so save/load round-trips bit-exactly. adam may be null.
void save_mlp(std::ostream& out, const MlpParams& p, const AdamState* adam);
void load_mlp(std::istream& in, MlpParams& p, AdamState* adam);

}  // namespace vcmi::nn

#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "vcmi/matrix.hpp"
#include "vcmi/mlp.hpp"

namespace vcmi::flow {

struct FlowConfig {
    int hidden_width = 128;
    int hidden_layers = 3;
    double lr = 5e-4;
    int batch = 512;
    int max_epochs = 60;
    int patience = 8;          // epochs without validation improvement
    double val_fraction = 0.2;
    int rk4_steps = 128;       // default integration resolution
    int min_train_rows = 100;  // below this the velocity stays zero
};

struct FlowFit {
    double init_val_loss = 0.0;
    double best_val_loss = 0.0;
    double final_train_loss = 0.0;
    int epochs = 0;
    bool early_stopped = false;
    bool fallback = false;  // too few rows: whitening only, zero velocity
};

// Per-variable normalizing flow: an affine whitening map followed by a
// learned velocity field v(x, t) whose probability-flow ODE carries the data
// distribution (t=1) to a standard normal (t=0).
struct FlowModel {
    int dim = 0;
    std::vector<double> shift;  // whitening mean
    std::vector<double> scale;  // whitening standard deviation
    nn::MlpParams net;          // velocity net on [state | t]
    int rk4_steps = 128;
    FlowFit fit;
};

// Mean squared flow-matching residual over rows: the net is evaluated at the
// straight-line interpolation (1-t)*eps + t*x and compared to the constant
// target velocity x - eps. Mean is over rows and output dimensions.
double flow_matching_loss(const nn::MlpParams& net, const Matrix& x,
                          const Matrix& eps, const std::vector<double>& t);

// Trains the velocity field on x by stochastic flow matching with Adam, a
// seeded 80/20 split, per-epoch validation on frozen (t, eps) draws, patience
// early stopping, and restoration of the best validation parameters.
FlowModel train_marginal_flow(const Matrix& x, const FlowConfig& cfg, uint64_t seed);

// RK4 integration of the learned field from the data end (t=1) to the
// Gaussian end (t=0); steps <= 0 uses the model default.
Matrix encode(const FlowModel& m, const Matrix& x, int steps = 0);
// Inverse direction, t=0 to t=1, ending with the un-whitening map.
Matrix decode(const FlowModel& m, const Matrix& eps, int steps = 0);

void save_flow(std::ostream& out, const FlowModel& m);
FlowModel load_flow(std::istream& in);

}  // namespace vcmi::flow

// Gradient correctness.
//
// Criterion 3: (a) every parameter-gradient and input-gradient entry of
// seeded networks (hidden widths <= 16, all four activations) matches a
// central finite difference to relative error < 1e-5, and (b) with the epoch
// noise stream frozen, the analytic gradient of the trajectory-sampled
// residual loss matches finite differences of the same loss to relative
// error < 1e-4 in every parameter entry.
//
// Tiny gradient entries are compared against a floor of 1e-3 times the
// largest entry so "relative" stays meaningful at the scale of the gradient
// vector itself.
#include <cmath>
#include <functional>
#include <vector>

#include <sgpde/model.hpp>
#include <sgpde/neural.hpp>
#include <sgpde/problems.hpp>
#include <sgpde/training.hpp>

#include "acc_common.hpp"

using namespace sgpde;

namespace {

std::vector<double*> param_pointers(NetworkParams& net) {
    std::vector<double*> ptrs;
    for (auto& l : net.layers) {
        for (long i = 0; i < l.W.size(); ++i) ptrs.push_back(l.W.data() + i);
        for (long i = 0; i < l.b.size(); ++i) ptrs.push_back(l.b.data() + i);
    }
    return ptrs;
}

std::vector<double> grad_values(const NetworkGradients& g) {
    std::vector<double> vals;
    for (const auto& l : g.layers) {
        for (long i = 0; i < l.W.size(); ++i) vals.push_back(l.W.data()[i]);
        for (long i = 0; i < l.b.size(); ++i) vals.push_back(l.b.data()[i]);
    }
    return vals;
}

// Worst relative mismatch between analytic and central-FD derivatives of the
// scalar function `value()` over every parameter of `net`.
double worst_param_mismatch(NetworkParams& net, const std::vector<double>& analytic,
                            const std::function<double()>& value, double h) {
    const std::vector<double*> ptrs = param_pointers(net);
    double gmax = 0.0;
    for (double a : analytic) gmax = std::max(gmax, std::abs(a));
    const double floor = std::max(1e-3 * gmax, 1e-12);
    double worst = 0.0;
    for (std::size_t i = 0; i < ptrs.size(); ++i) {
        const double save = *ptrs[i];
        *ptrs[i] = save + h;
        const double up = value();
        *ptrs[i] = save - h;
        const double dn = value();
        *ptrs[i] = save;
        const double fd = (up - dn) / (2.0 * h);
        worst = std::max(worst,
                         std::abs(analytic[i] - fd) / std::max(std::abs(fd), floor));
    }
    return worst;
}

}  // namespace

int main() {
    // ---- part (a): raw network gradients over all activations -----------
    double worst_param = 0.0, worst_input = 0.0;
    for (Activation act :
         {Activation::sine, Activation::tanh, Activation::mish, Activation::identity}) {
        NetworkParams net =
            init_network({3, 16, 8, 1}, act, RngStream(40 + static_cast<int>(act)));
        RowMat inputs(5, 3);
        RngStream in_rng(7);
        in_rng.fill_normal(inputs.data(), static_cast<std::size_t>(inputs.size()), 1.0);
        Vec upstream(5);
        RngStream up_rng(8);
        up_rng.fill_normal(upstream, 1.0);

        BatchWork work;
        work.in = inputs;
        forward_batch(net, work);
        NetworkGradients g = make_gradients(net);
        RowMat dinputs;
        backward_batch(net, work, upstream, &g, &dinputs);

        const auto value = [&]() {
            BatchWork w;
            w.in = inputs;
            forward_batch(net, w);
            return upstream.dot(w.out);
        };
        worst_param = std::max(
            worst_param, worst_param_mismatch(net, grad_values(g), value, 1e-6));

        // input gradients, entry by entry
        double gmax = dinputs.cwiseAbs().maxCoeff();
        const double floor = std::max(1e-3 * gmax, 1e-12);
        for (long r = 0; r < inputs.rows(); ++r) {
            for (long c = 0; c < inputs.cols(); ++c) {
                const double save = inputs(r, c);
                inputs(r, c) = save + 1e-6;
                const double up = value();
                inputs(r, c) = save - 1e-6;
                const double dn = value();
                inputs(r, c) = save;
                const double fd = (up - dn) / 2e-6;
                worst_input = std::max(worst_input, std::abs(dinputs(r, c) - fd) /
                                                        std::max(std::abs(fd), floor));
            }
        }
    }
    const bool net_ok = worst_param < 1e-5 && worst_input < 1e-5;

    // ---- part (b): frozen-noise loss gradient ----------------------------
    // Drift and diffusion ignore (y, z) and the source ignores y, so the
    // sampled trajectories and the per-node finite difference of the loss in
    // a parameter probe the identical noise realization.
    PdeProblem p;
    p.id = "grad-toy";
    p.d = 2;
    p.T = 1.0;
    p.mu = [](double, const Vec& x, double, const Vec&) {
        return Vec::Zero(x.size()).eval();
    };
    p.sigma = [](double, const Vec&, double, const Vec&) {
        return SigmaAction::scalar(0.7);
    };
    p.phi = [](double t, const Vec& x, double, const Vec&) {
        return x.squaredNorm() + t;
    };
    p.g = [](const Vec& x) { return x.squaredNorm(); };
    p.grad_g = [](const Vec& x) { return (2.0 * x).eval(); };
    p.depends_on_z = false;
    p.time_dependent = true;
    p.x0 = Vec::Constant(2, 0.5);
    p.initial = InitialLaw::gaussian;
    p.initial_stddev = 0.2;

    ShotgunHyperparams h;
    h.M1 = 3;
    h.N = 4;
    h.M = 2;
    h.local_dt = 0.01;

    NetworkParams net = init_network({3, 12, 1}, Activation::mish, RngStream(21));
    const RngStream frozen(11);

    NetModel model = wrap_model(net, p, false);
    NetworkGradients g = make_gradients(model.net);
    shotgun_epoch_loss(model, p, h, frozen, g, nullptr, 1);
    const std::vector<double> analytic = grad_values(g);

    const auto loss_value = [&]() {
        const NetModel m = wrap_model(net, p, false);
        NetworkGradients scratch = make_gradients(m.net);
        return shotgun_epoch_loss(m, p, h, frozen, scratch, nullptr, 1).total();
    };
    const double worst_loss = worst_param_mismatch(net, analytic, loss_value, 1e-5);
    const bool loss_ok = worst_loss < 1e-4;

    acc::check(3, "gradient-correctness", net_ok && loss_ok,
               acc::fmt("net param FD mismatch %.2e, input FD mismatch %.2e (< 1e-5); "
                        "frozen-noise loss FD mismatch %.2e (< 1e-4)",
                        worst_param, worst_input, worst_loss));
    return acc::failures;
}

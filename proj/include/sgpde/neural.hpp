#pragma once

#include <cmath>
#include <vector>

#include "activation.hpp"
#include "core.hpp"
#include "rng.hpp"

namespace sgpde {

struct DenseLayer {
    RowMat W;  // out x in
    Vec b;     // out
};

struct NetworkParams {
    std::vector<DenseLayer> layers;
    Activation hidden_activation = Activation::tanh;

    int input_dim() const { return layers.empty() ? 0 : int(layers.front().W.cols()); }
    int output_dim() const { return layers.empty() ? 0 : int(layers.back().W.rows()); }
    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += std::size_t(l.W.size()) + std::size_t(l.b.size());
        return n;
    }
};

// Same shapes as the parameters they correspond to.
struct NetworkGradients {
    std::vector<DenseLayer> layers;

    void set_zero() {
        for (auto& l : layers) {
            l.W.setZero();
            l.b.setZero();
        }
    }
    void add(const NetworkGradients& o) {
        for (std::size_t k = 0; k < layers.size(); ++k) {
            layers[k].W += o.layers[k].W;
            layers[k].b += o.layers[k].b;
        }
    }
    bool all_finite() const {
        for (const auto& l : layers)
            if (!l.W.allFinite() || !l.b.allFinite()) return false;
        return true;
    }
};

inline NetworkGradients make_gradients(const NetworkParams& net) {
    NetworkGradients g;
    g.layers.reserve(net.layers.size());
    for (const auto& l : net.layers)
        g.layers.push_back({RowMat::Zero(l.W.rows(), l.W.cols()), Vec::Zero(l.b.size())});
    return g;
}

// Glorot-uniform weights in +-sqrt(6/(in+out)), zero biases. Deterministic in
// (rng identity, sizes): layer k draws from its own substream in row-major order.
inline NetworkParams init_network(const std::vector<int>& sizes, Activation act, RngStream rng) {
    require(sizes.size() >= 3, "network needs at least input, one hidden, and output sizes");
    for (int s : sizes) require(s > 0, "network layer sizes must be positive");
    NetworkParams net;
    net.hidden_activation = act;
    net.layers.resize(sizes.size() - 1);
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
        const int in = sizes[k], out = sizes[k + 1];
        RngStream ls = rng.derive(k);
        const double lim = std::sqrt(6.0 / double(in + out));
        RowMat W(out, in);
        for (int i = 0; i < out; ++i)
            for (int j = 0; j < in; ++j) W(i, j) = ls.uniform(-lim, lim);
        net.layers[k] = {std::move(W), Vec::Zero(out)};
    }
    return net;
}

// Forward/backward workspace. All layer buffers persist across calls so the
// per-epoch hot loop performs no allocation once warmed up.
struct BatchWork {
    RowMat in;                 // n x input_dim, assembled by the caller
    std::vector<RowMat> h;     // post-activation per hidden layer
    std::vector<RowMat> d;     // activation derivative at the same pre-activations
    Vec out;                   // n (scalar output networks)
    RowMat a, g0, g1;          // pre-activation / backward ping-pong buffers
    std::vector<double> scratch;

    long rows() const { return in.rows(); }
};

namespace detail {
inline void ensure(RowMat& m, long r, long c) {
    if (m.rows() != r || m.cols() != c) m.resize(r, c);
}
}  // namespace detail

// Scalar-output batched forward over work.in; fills work.out and retains the
// trace needed by the backward passes.
inline void forward_batch(const NetworkParams& net, BatchWork& work) {
    const std::size_t L = net.layers.size();
    require(L >= 1, "empty network");
    require(net.layers.back().W.rows() == 1, "batched forward expects a scalar output layer");
    require(work.in.cols() == net.input_dim(), "input width does not match network");
    const long n = work.in.rows();
    work.h.resize(L - 1);
    work.d.resize(L - 1);
    for (std::size_t k = 0; k + 1 < L; ++k) {
        const auto& lay = net.layers[k];
        const RowMat& src = (k == 0) ? work.in : work.h[k - 1];
        detail::ensure(work.a, n, lay.W.rows());
        work.a.noalias() = src * lay.W.transpose();
        work.a.rowwise() += lay.b.transpose();
        detail::ensure(work.h[k], n, lay.W.rows());
        detail::ensure(work.d[k], n, lay.W.rows());
        const std::size_t cnt = std::size_t(work.a.size());
        if (work.scratch.size() < cnt) work.scratch.resize(cnt);
        activation_batch(net.hidden_activation, work.a.data(), work.h[k].data(),
                         work.d[k].data(), work.scratch.data(), cnt);
    }
    const auto& last = net.layers.back();
    const RowMat& src = (L == 1) ? work.in : work.h[L - 2];
    work.out.resize(n);
    work.out.noalias() = src * last.W.transpose().col(0);
    work.out.array() += last.b(0);
}

// Accumulates sum_i upstream[i] * d out_i / d theta into grads. Requires the
// trace left by forward_batch. If dinputs is non-null it also receives the
// per-row gradient with respect to the inputs.
inline void backward_batch(const NetworkParams& net, BatchWork& work, const Vec& upstream,
                           NetworkGradients* grads, RowMat* dinputs = nullptr) {
    const std::size_t L = net.layers.size();
    const long n = work.rows();
    require(upstream.size() == n, "upstream length does not match batch");
    // delta for the affine output layer
    detail::ensure(work.g0, n, 1);
    work.g0.col(0) = upstream;
    RowMat* cur = &work.g0;
    RowMat* nxt = &work.g1;
    for (std::size_t k = L; k-- > 0;) {
        const auto& lay = net.layers[k];
        const RowMat& src = (k == 0) ? work.in : work.h[k - 1];
        if (grads) {
            auto& gl = grads->layers[k];
            gl.W.noalias() += cur->transpose() * src;
            gl.b.noalias() += cur->colwise().sum().transpose();
        }
        if (k == 0) {
            if (dinputs) {
                detail::ensure(*dinputs, n, lay.W.cols());
                dinputs->noalias() = (*cur) * lay.W;
            }
            break;
        }
        detail::ensure(*nxt, n, lay.W.cols());
        nxt->noalias() = (*cur) * lay.W;
        nxt->array() *= work.d[k - 1].array();
        std::swap(cur, nxt);
    }
}

// Single-point conveniences built on the batched kernels.

inline double forward(const NetworkParams& net, const Vec& x, BatchWork& work) {
    require(x.size() == net.input_dim(), "input width does not match network");
    detail::ensure(work.in, 1, x.size());
    work.in.row(0) = x.transpose();
    forward_batch(net, work);
    return work.out(0);
}

inline Vec input_gradient(const NetworkParams& net, const Vec& x, BatchWork& work) {
    require(x.size() == net.input_dim(), "input width does not match network");
    detail::ensure(work.in, 1, x.size());
    work.in.row(0) = x.transpose();
    forward_batch(net, work);
    static thread_local RowMat dins;
    Vec up = Vec::Ones(1);
    backward_batch(net, work, up, nullptr, &dins);
    return dins.row(0).transpose();
}

inline double forward(const NetworkParams& net, const Vec& x) {
    static thread_local BatchWork work;
    return forward(net, x, work);
}

inline Vec input_gradient(const NetworkParams& net, const Vec& x) {
    static thread_local BatchWork work;
    return input_gradient(net, x, work);
}

inline NetworkGradients backward_params(const NetworkParams& net, const RowMat& inputs,
                                        const Vec& upstream) {
    static thread_local BatchWork work;
    work.in = inputs;
    forward_batch(net, work);
    NetworkGradients g = make_gradients(net);
    backward_batch(net, work, upstream, &g);
    return g;
}

// Step-decay learning rate: rate(step) = initial * factor^floor(step/interval).
struct LrSchedule {
    double initial = 1e-3;
    double factor = 1.0;
    long interval = 1;

    double rate(long step) const {
        require(interval > 0, "lr schedule interval must be positive");
        require(initial > 0.0 && factor > 0.0, "lr schedule rates must be positive");
        require(step >= 0, "lr schedule step must be nonnegative");
        return initial * std::pow(factor, double(step / interval));
    }
};

struct AdamState {
    std::vector<DenseLayer> m, v;
    long step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

inline AdamState make_adam(const NetworkParams& net) {
    AdamState s;
    for (const auto& l : net.layers) {
        s.m.push_back({RowMat::Zero(l.W.rows(), l.W.cols()), Vec::Zero(l.b.size())});
        s.v.push_back({RowMat::Zero(l.W.rows(), l.W.cols()), Vec::Zero(l.b.size())});
    }
    return s;
}

inline void adam_step(NetworkParams& net, AdamState& st, const NetworkGradients& g, double rate) {
    require(st.m.size() == net.layers.size() && g.layers.size() == net.layers.size(),
            "optimizer state does not match network");
    if (!g.all_finite())
        throw divergence_error("non-finite gradient in optimizer step", st.step);
    st.step += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, double(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, double(st.step));
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        auto upd = [&](auto& theta, auto& m, auto& v, const auto& grad) {
            m = st.beta1 * m + (1.0 - st.beta1) * grad;
            v = st.beta2 * v + (1.0 - st.beta2) * grad.cwiseProduct(grad);
            theta.array() -=
                rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + st.eps);
        };
        upd(net.layers[k].W, st.m[k].W, st.v[k].W, g.layers[k].W);
        upd(net.layers[k].b, st.m[k].b, st.v[k].b, g.layers[k].b);
    }
}

}  // namespace sgpde

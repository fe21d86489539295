#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <utility>

#include "core.hpp"
#include "neural.hpp"
#include "problems.hpp"
#include "simd.hpp"

namespace sgpde {

// A scalar field v(t, x) with a spatial gradient. Implementations must be
// safe for concurrent const calls.
struct Model {
    virtual ~Model() = default;

    virtual int space_dim() const = 0;
    virtual bool has_time_input() const = 0;

    virtual double value(double t, const Vec& x) const = 0;
    virtual Vec space_gradient(double t, const Vec& x) const = 0;

    // Evaluates many points at once; ts[i] pairs with row i of xs. vals and
    // grads may each be null when not needed. The default loops pointwise.
    virtual void eval_rows(const double* ts, const RowMat& xs, Vec* vals,
                           RowMat* grads) const {
        const long n = xs.rows();
        if (vals) vals->resize(n);
        if (grads) grads->resize(n, xs.cols());
        Vec x(xs.cols());
        for (long i = 0; i < n; ++i) {
            x = xs.row(i);
            if (vals) (*vals)(i) = value(ts[i], x);
            if (grads) grads->row(i) = space_gradient(ts[i], x);
        }
    }

    // Convenience for a shared evaluation time.
    void eval_rows_at(double t, const RowMat& xs, Vec* vals, RowMat* grads) const {
        std::vector<double> ts(static_cast<std::size_t>(xs.rows()), t);
        eval_rows(ts.data(), xs, vals, grads);
    }
};

// Feed-forward network as a model. With use_ansatz the field is
//   v(t, x) = g(x) + (T - t) * net(t, x),
// which matches the terminal data exactly at t = T.
struct NetModel final : Model {
    NetworkParams net;
    bool time_input = true;
    bool use_ansatz = false;
    double horizon = 0.0;
    std::function<double(const Vec&)> terminal;       // g, ansatz only
    std::function<Vec(const Vec&)> terminal_grad;     // grad g, ansatz gradients only

    int space_dim() const override {
        return net.input_dim() - (time_input ? 1 : 0);
    }
    bool has_time_input() const override { return time_input; }

    // Row layout fed to the network: [t, x_1..x_d] or [x_1..x_d].
    void fill_input(double t, const Vec& x, Vec& in) const {
        const int d = static_cast<int>(x.size());
        in.resize(d + (time_input ? 1 : 0));
        if (time_input) {
            in(0) = t;
            in.tail(d) = x;
        } else {
            in = x;
        }
    }

    double raw_value(double t, const Vec& x) const {
        thread_local Vec in;
        fill_input(t, x, in);
        return forward(net, in);
    }

    double value(double t, const Vec& x) const override {
        const double raw = raw_value(t, x);
        if (!use_ansatz) return raw;
        return terminal(x) + (horizon - t) * raw;
    }

    Vec space_gradient(double t, const Vec& x) const override {
        thread_local Vec in;
        fill_input(t, x, in);
        const Vec din = input_gradient(net, in);
        Vec spatial = time_input ? din.tail(x.size()).eval() : din;
        if (!use_ansatz) return spatial;
        require(static_cast<bool>(terminal_grad),
                "terminal-data gradient required for ansatz space gradients");
        return terminal_grad(x) + (horizon - t) * spatial;
    }

    void eval_rows(const double* ts, const RowMat& xs, Vec* vals,
                   RowMat* grads) const override {
        const long n = xs.rows();
        const long d = xs.cols();
        thread_local BatchWork work;
        if (time_input) {
            work.in.resize(n, d + 1);
            for (long i = 0; i < n; ++i) work.in(i, 0) = ts[i];
            work.in.rightCols(d) = xs;
        } else {
            work.in = xs;
        }
        forward_batch(net, work);

        if (vals) {
            *vals = work.out;
            if (use_ansatz) {
                Vec x(d);
                for (long i = 0; i < n; ++i) {
                    x = xs.row(i);
                    (*vals)(i) = terminal(x) + (horizon - ts[i]) * work.out(i);
                }
            }
        }
        if (grads) {
            thread_local RowMat din;
            Vec ones = Vec::Ones(n);
            backward_batch(net, work, ones, nullptr, &din);
            *grads = time_input ? din.rightCols(d).eval() : din;
            if (use_ansatz) {
                require(static_cast<bool>(terminal_grad),
                        "terminal-data gradient required for ansatz space gradients");
                Vec x(d);
                for (long i = 0; i < n; ++i) {
                    x = xs.row(i);
                    grads->row(i) =
                        (terminal_grad(x) + (horizon - ts[i]) * grads->row(i).transpose())
                            .transpose();
                }
            }
        }
    }
};

// exp of an inner model; used to evaluate log-space fields on the original scale.
struct ExpModel final : Model {
    const Model* inner = nullptr;

    explicit ExpModel(const Model& m) : inner(&m) {}

    int space_dim() const override { return inner->space_dim(); }
    bool has_time_input() const override { return inner->has_time_input(); }

    double value(double t, const Vec& x) const override {
        return std::exp(inner->value(t, x));
    }
    Vec space_gradient(double t, const Vec& x) const override {
        return std::exp(inner->value(t, x)) * inner->space_gradient(t, x);
    }
    void eval_rows(const double* ts, const RowMat& xs, Vec* vals,
                   RowMat* grads) const override {
        Vec v;
        inner->eval_rows(ts, xs, &v, grads);
        Vec ev(v.size());
        simd::vexp(v.data(), ev.data(), static_cast<std::size_t>(v.size()));
        if (grads) grads->array().colwise() *= ev.array();
        if (vals) *vals = std::move(ev);
    }
};

// Fixed closed-form field, for oracles and frozen references.
struct FnModel final : Model {
    int d = 1;
    bool timed = true;
    std::function<double(double, const Vec&)> v;
    std::function<Vec(double, const Vec&)> grad;

    int space_dim() const override { return d; }
    bool has_time_input() const override { return timed; }
    double value(double t, const Vec& x) const override { return v(t, x); }
    Vec space_gradient(double t, const Vec& x) const override {
        require(static_cast<bool>(grad), "this reference field has no gradient");
        return grad(t, x);
    }
};

// Wraps trained parameters for a given problem, enforcing the ansatz
// prerequisites. The network input width must match the problem layout.
inline NetModel wrap_model(NetworkParams net, const PdeProblem& p, bool use_ansatz) {
    NetModel m;
    m.time_input = p.time_dependent;
    const int want = p.d + (p.time_dependent ? 1 : 0);
    require(net.input_dim() == want, "network input width does not match the problem");
    if (use_ansatz) {
        require(p.time_dependent, "the terminal-data ansatz needs a time-dependent problem");
        if (p.depends_on_z)
            require(static_cast<bool>(p.grad_g),
                    "ansatz with z-dependent coefficients needs the terminal gradient");
        m.use_ansatz = true;
        m.horizon = p.T;
        m.terminal = p.g;
        m.terminal_grad = p.grad_g;
    }
    m.net = std::move(net);
    return m;
}

}  // namespace sgpde

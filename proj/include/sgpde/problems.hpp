#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "core.hpp"
#include "rng.hpp"

namespace sgpde {

// Action of a diffusion coefficient on vectors. The scalar and diagonal forms
// never materialize a d x d matrix, which keeps large-d problems feasible.
struct SigmaAction {
    enum class Form { scalar_identity, state_diagonal, dense };

    Form form = Form::scalar_identity;
    double c = 0.0;   // scalar_identity coefficient
    Vec scale;        // state_diagonal: componentwise factors (already c * x)
    RowMat mat;       // dense only

    static SigmaAction scalar(double coeff) {
        SigmaAction a;
        a.form = Form::scalar_identity;
        a.c = coeff;
        return a;
    }
    static SigmaAction state_diagonal(double coeff, const Vec& x) {
        SigmaAction a;
        a.form = Form::state_diagonal;
        a.c = coeff;
        a.scale = coeff * x;
        return a;
    }
    static SigmaAction dense(RowMat m) {
        require(m.rows() == m.cols(), "dense diffusion matrix must be square");
        SigmaAction a;
        a.form = Form::dense;
        a.mat = std::move(m);
        return a;
    }

    Vec apply(const Vec& v) const {
        switch (form) {
            case Form::scalar_identity: return c * v;
            case Form::state_diagonal:
                require(scale.size() == v.size(), "diffusion action dimension mismatch");
                return scale.cwiseProduct(v);
            case Form::dense:
                require(mat.cols() == v.size(), "diffusion action dimension mismatch");
                return mat * v;
        }
        return v;
    }

    // Applies the action to every row of a matrix of vectors in place.
    void apply_rows(RowMat& rows) const {
        switch (form) {
            case Form::scalar_identity: rows *= c; return;
            case Form::state_diagonal:
                require(scale.size() == rows.cols(), "diffusion action dimension mismatch");
                rows.array().rowwise() *= scale.transpose().array();
                return;
            case Form::dense:
                require(mat.cols() == rows.cols(), "diffusion action dimension mismatch");
                rows = rows * mat.transpose();
                return;
        }
    }
};

enum class InitialLaw { point_mass, gaussian };

// A terminal-value parabolic PDE
//   d_t u + 1/2 Tr[sigma sigma^T grad grad u] + mu . grad u = phi,  u(T, x) = g(x),
// described through its coefficient functions. Coefficients receive the full
// (t, x, y, z) tuple; problems with depends_on_z = false never read z.
struct PdeProblem {
    std::string id;
    int d = 1;
    double T = 1.0;

    std::function<Vec(double, const Vec&, double, const Vec&)> mu;
    std::function<SigmaAction(double, const Vec&, double, const Vec&)> sigma;
    std::function<double(double, const Vec&, double, const Vec&)> phi;
    std::function<double(const Vec&)> g;
    std::function<Vec(const Vec&)> grad_g;  // may be empty

    bool depends_on_z = false;
    bool time_dependent = true;

    Vec x0;
    InitialLaw initial = InitialLaw::point_mass;
    double initial_stddev = 0.0;
};

inline Vec sample_initial(const PdeProblem& p, RngStream rng) {
    if (p.initial == InitialLaw::point_mass) return p.x0;
    Vec x(p.d);
    rng.fill_normal(x, p.initial_stddev);
    x += p.x0;
    return x;
}

// Reference solution attached to a problem: a closed form, a Monte-Carlo
// representation -log E[exp(-g(x + sqrt(2) W_{T-t}))], or nothing.
struct ExactSolution {
    enum class Kind { closed_form, monte_carlo, none };

    Kind kind = Kind::none;
    std::function<double(double, const Vec&)> value;  // closed_form
    std::function<double(const Vec&)> mc_g;           // monte_carlo terminal data
    double horizon = 0.0;                             // monte_carlo horizon T
};

struct Boundary1D {
    double a = 0.0, b = 0.0;
    double ua = 0.0, ub = 0.0;
};

// Everything a driver needs for one named problem.
struct ProblemBundle {
    PdeProblem problem;
    ExactSolution exact;
    std::optional<Boundary1D> boundary;        // 1-D Dirichlet problems only
    std::function<double(double)> f1d;         // 1-D exact scalar solution
    bool eval_exp = false;  // trained in log space; evaluate exp(model) against exact
};

enum class Laplace1dKind { x2, sine, exp_half };

// u'' = f'' on (1, 5) with u = f at the endpoints; time-independent.
inline ProblemBundle laplace_1d(Laplace1dKind kind) {
    std::function<double(double)> f, fpp;
    std::function<Vec(const Vec&)> fgrad;
    std::string id;
    switch (kind) {
        case Laplace1dKind::x2:
            id = "laplace1d-x2";
            f = [](double x) { return x * x; };
            fpp = [](double) { return 2.0; };
            fgrad = [](const Vec& x) { return Vec::Constant(1, 2.0 * x(0)).eval(); };
            break;
        case Laplace1dKind::sine:
            id = "laplace1d-sin";
            f = [](double x) { return std::sin(x); };
            fpp = [](double x) { return -std::sin(x); };
            fgrad = [](const Vec& x) { return Vec::Constant(1, std::cos(x(0))).eval(); };
            break;
        case Laplace1dKind::exp_half:
            id = "laplace1d-exp";
            f = [](double x) { return std::exp(0.5 * x); };
            fpp = [](double x) { return 0.25 * std::exp(0.5 * x); };
            fgrad = [](const Vec& x) { return Vec::Constant(1, 0.5 * std::exp(0.5 * x(0))).eval(); };
            break;
    }

    ProblemBundle b;
    PdeProblem& p = b.problem;
    p.id = id;
    p.d = 1;
    p.T = 1.0;
    p.mu = [](double, const Vec&, double, const Vec&) { return Vec::Zero(1).eval(); };
    p.sigma = [](double, const Vec&, double, const Vec&) {
        return SigmaAction::scalar(std::sqrt(2.0));
    };
    p.phi = [fpp](double, const Vec& x, double, const Vec&) { return fpp(x(0)); };
    p.g = [f](const Vec& x) { return f(x(0)); };
    p.grad_g = fgrad;
    p.depends_on_z = false;
    p.time_dependent = false;
    p.x0 = Vec::Constant(1, 3.0);
    p.initial = InitialLaw::point_mass;

    b.boundary = Boundary1D{1.0, 5.0, f(1.0), f(5.0)};
    b.f1d = f;
    b.exact.kind = ExactSolution::Kind::closed_form;
    b.exact.value = [f](double, const Vec& x) { return f(x(0)); };
    return b;
}

// Hamilton-Jacobi-Bellman equation from linear-quadratic Gaussian control:
// d_t u + Tr[grad grad u] = |grad u|^2, terminal g = log(0.5 (1 + |x|^2)).
inline ProblemBundle hjb_lqg(int d, double T) {
    require(d >= 1, "hjb needs d >= 1");
    require(T > 0.0, "hjb needs T > 0");
    ProblemBundle b;
    PdeProblem& p = b.problem;
    p.id = "hjb";
    p.d = d;
    p.T = T;
    p.mu = [d](double, const Vec&, double, const Vec&) { return Vec::Zero(d).eval(); };
    p.sigma = [](double, const Vec&, double, const Vec&) {
        return SigmaAction::scalar(std::sqrt(2.0));
    };
    p.phi = [](double, const Vec&, double, const Vec& z) { return z.squaredNorm(); };
    p.g = [](const Vec& x) { return std::log(0.5 * (1.0 + x.squaredNorm())); };
    p.grad_g = [](const Vec& x) { return (2.0 * x / (1.0 + x.squaredNorm())).eval(); };
    p.depends_on_z = true;
    p.time_dependent = true;
    p.x0 = Vec::Zero(d);
    p.initial = InitialLaw::gaussian;
    p.initial_stddev = std::sqrt(2.5e-3);

    b.exact.kind = ExactSolution::Kind::monte_carlo;
    b.exact.mc_g = p.g;
    b.exact.horizon = T;
    return b;
}

// Allen-Cahn equation: d_t u + Laplacian u + u - u^3 = 0, g = 1/(2 + 0.4 |x|^2).
inline ProblemBundle allen_cahn(int d, double T) {
    require(d >= 1, "allen-cahn needs d >= 1");
    require(T > 0.0, "allen-cahn needs T > 0");
    ProblemBundle b;
    PdeProblem& p = b.problem;
    p.id = "allen-cahn";
    p.d = d;
    p.T = T;
    p.mu = [d](double, const Vec&, double, const Vec&) { return Vec::Zero(d).eval(); };
    p.sigma = [](double, const Vec&, double, const Vec&) {
        return SigmaAction::scalar(std::sqrt(2.0));
    };
    p.phi = [](double, const Vec&, double y, const Vec&) { return y * y * y - y; };
    p.g = [](const Vec& x) { return 1.0 / (2.0 + 0.4 * x.squaredNorm()); };
    p.grad_g = [](const Vec& x) {
        const double den = 2.0 + 0.4 * x.squaredNorm();
        return (-0.8 / (den * den) * x).eval();
    };
    p.depends_on_z = false;
    p.time_dependent = true;
    p.x0 = Vec::Zero(d);
    p.initial = InitialLaw::gaussian;
    p.initial_stddev = std::sqrt(2.5e-3);
    return b;
}

namespace detail {
inline Vec alternating_anchor(int d) {
    Vec x(d);
    for (int i = 0; i < d; ++i) x(i) = (i % 2 == 0) ? 1.0 : 0.5;
    return x;
}
}  // namespace detail

// Black-Scholes-Barenblatt equation with diffusion sigma * diag(x) and
// phi = (y - x . z) r; exact solution exp((r + sigma^2)(T - t)) |x|^2.
inline ProblemBundle bsb(int d, double T, double sigma, double r) {
    require(d >= 1, "bsb needs d >= 1");
    require(T > 0.0, "bsb needs T > 0");
    require(sigma > 0.0, "bsb needs sigma > 0");
    ProblemBundle b;
    PdeProblem& p = b.problem;
    p.id = "bsb";
    p.d = d;
    p.T = T;
    p.mu = [d](double, const Vec&, double, const Vec&) { return Vec::Zero(d).eval(); };
    p.sigma = [sigma](double, const Vec& x, double, const Vec&) {
        return SigmaAction::state_diagonal(sigma, x);
    };
    p.phi = [r](double, const Vec& x, double y, const Vec& z) { return (y - x.dot(z)) * r; };
    p.g = [](const Vec& x) { return x.squaredNorm(); };
    p.grad_g = [](const Vec& x) { return (2.0 * x).eval(); };
    p.depends_on_z = true;
    p.time_dependent = true;
    p.x0 = detail::alternating_anchor(d);
    p.initial = InitialLaw::point_mass;

    b.exact.kind = ExactSolution::Kind::closed_form;
    b.exact.value = [sigma, r, T](double t, const Vec& x) {
        return std::exp((r + sigma * sigma) * (T - t)) * x.squaredNorm();
    };
    return b;
}

// Log-transformed Black-Scholes-Barenblatt: trains v = log u with terminal
// data log |x|^2; evaluation maps back through exp against the original u.
inline ProblemBundle log_bsb(int d, double T, double sigma, double r) {
    require(d >= 1, "log-bsb needs d >= 1");
    require(T > 0.0, "log-bsb needs T > 0");
    require(sigma > 0.0, "log-bsb needs sigma > 0");
    ProblemBundle b;
    PdeProblem& p = b.problem;
    p.id = "log-bsb";
    p.d = d;
    p.T = T;
    p.mu = [d](double, const Vec&, double, const Vec&) { return Vec::Zero(d).eval(); };
    p.sigma = [sigma](double, const Vec& x, double, const Vec&) {
        return SigmaAction::state_diagonal(sigma, x);
    };
    p.phi = [r, sigma](double, const Vec& x, double, const Vec& z) {
        const double quad = x.array().square().matrix().dot(z.array().square().matrix());
        return r * (1.0 - z.dot(x)) - 0.5 * sigma * sigma * quad;
    };
    p.g = [](const Vec& x) { return std::log(x.squaredNorm()); };
    p.grad_g = [](const Vec& x) { return (2.0 / x.squaredNorm() * x).eval(); };
    p.depends_on_z = true;
    p.time_dependent = true;
    p.x0 = detail::alternating_anchor(d);
    p.initial = InitialLaw::point_mass;

    // exact solution of the untransformed equation; compared after exp
    b.exact.kind = ExactSolution::Kind::closed_form;
    b.exact.value = [sigma, r, T](double t, const Vec& x) {
        return std::exp((r + sigma * sigma) * (T - t)) * x.squaredNorm();
    };
    b.eval_exp = true;
    return b;
}

inline ProblemBundle problem_by_id(const std::string& id, int d, double T, double sigma,
                                   double r) {
    if (id == "laplace1d-x2") return laplace_1d(Laplace1dKind::x2);
    if (id == "laplace1d-sin") return laplace_1d(Laplace1dKind::sine);
    if (id == "laplace1d-exp") return laplace_1d(Laplace1dKind::exp_half);
    if (id == "hjb") return hjb_lqg(d, T);
    if (id == "allen-cahn") return allen_cahn(d, T);
    if (id == "bsb") return bsb(d, T, sigma, r);
    if (id == "log-bsb") return log_bsb(d, T, sigma, r);
    throw config_error("unknown problem id: " + id);
}

}  // namespace sgpde

#pragma once

#include <Eigen/Eigenvalues>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "core.hpp"
#include "model.hpp"
#include "problems.hpp"
#include "rng.hpp"
#include "sampler.hpp"
#include "simd.hpp"
#include "training.hpp"

namespace sgpde {

struct McEstimate {
    double mean = 0.0;
    double std_err = 0.0;
    long samples = 0;
};

// Monte-Carlo value of u(t, x) = -log E[exp(-g(x + sqrt(2) W_{T-t}))] with
// W_s a standard d-dimensional Brownian motion; the error bar comes from the
// delta method. At t = T the value is g(x) exactly.
inline McEstimate mc_log_expectation(const std::function<double(const Vec&)>& g,
                                     const Vec& x, double t, double T, long samples,
                                     RngStream rng) {
    require(T >= t, "evaluation time must not exceed the horizon");
    require(samples >= 2, "oracle needs at least two samples");
    const double tau = T - t;
    if (tau <= 1e-15 * std::max(1.0, std::abs(T))) return {g(x), 0.0, 0};

    const long d = x.size();
    const double sd = std::sqrt(2.0 * tau);
    constexpr long kChunk = 4096;
    RowMat pts(kChunk, d);
    std::vector<double> neg(kChunk), ex(kChunk);
    double sum = 0.0, sumsq = 0.0;
    long done = 0;
    Vec row(d);
    while (done < samples) {
        const long n = std::min<long>(kChunk, samples - done);
        rng.fill_normal(pts.data(), static_cast<std::size_t>(n * d), sd);
        pts.topRows(n).rowwise() += x.transpose();
        for (long i = 0; i < n; ++i) {
            row = pts.row(i).transpose();
            neg[static_cast<std::size_t>(i)] = -g(row);
        }
        simd::vexp(neg.data(), ex.data(), static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i) {
            sum += ex[static_cast<std::size_t>(i)];
            sumsq += ex[static_cast<std::size_t>(i)] * ex[static_cast<std::size_t>(i)];
        }
        done += n;
    }
    const double S = static_cast<double>(samples);
    const double mean = sum / S;
    require(mean > 0.0, "oracle expectation underflowed to zero");
    const double var = std::max(0.0, (sumsq - sum * sum / S) / (S - 1.0));
    McEstimate est;
    est.mean = -std::log(mean);
    est.std_err = std::sqrt(var / S) / mean;  // delta method through -log
    est.samples = samples;
    return est;
}

// Closed form for the quadratic-terminal equation with diffusion c * diag(x):
// u(t, x) = exp((r + c^2)(T - t)) |x|^2.
inline double bsb_exact_value(double t, const Vec& x, double sigma, double r, double T) {
    return std::exp((r + sigma * sigma) * (T - t)) * x.squaredNorm();
}

// Relative error statistics along simulated evaluation paths: at each grid
// time, mean and sample standard deviation of |v - u*| / |u*| across paths.
// Points where |u*| <= guard are counted as guarded and excluded rather than
// divided through.
struct ErrorCurve {
    std::vector<double> times;
    Vec mean;
    Vec stddev;
    long M_test = 0;
    std::vector<long> guarded;  // excluded points per time
    long guarded_total = 0;
    double guard = 1e-12;
};

// Paths are driven by the model's own field on a uniform N_test grid; path m
// uses rng.derive(0, m) and the oracle at (time n, path m) uses
// rng.derive(1, n).derive(m). The closed-form kind ignores mc_samples.
inline ErrorCurve relative_error_curve(const Model& v, const PdeProblem& p,
                                       const ExactSolution& exact, long N_test,
                                       long M_test, long mc_samples, RngStream rng) {
    require(exact.kind != ExactSolution::Kind::none,
            "error curve needs a reference solution");
    require(N_test >= 1 && M_test >= 1, "error curve needs N_test, M_test >= 1");

    ErrorCurve curve;
    curve.M_test = M_test;
    const long npts = N_test + 1;
    curve.times.resize(static_cast<std::size_t>(npts));
    for (long n = 0; n <= N_test; ++n)
        curve.times[static_cast<std::size_t>(n)] =
            p.T * static_cast<double>(n) / static_cast<double>(N_test);
    curve.times.back() = p.T;

    RowMat rel(M_test, npts);
    std::vector<std::vector<char>> ok(static_cast<std::size_t>(npts),
                                      std::vector<char>(static_cast<std::size_t>(M_test), 1));
    Vec x(p.d);
    for (long m = 0; m < M_test; ++m) {
        const RowMat X = simulate_states(p, v, curve.times,
                                         rng.derive(0, static_cast<std::uint64_t>(m)));
        for (long n = 0; n < npts; ++n) {
            const double t = curve.times[static_cast<std::size_t>(n)];
            x = X.row(n).transpose();
            const double approx = v.value(t, x);
            double truth = 0.0;
            if (exact.kind == ExactSolution::Kind::closed_form) {
                truth = exact.value(t, x);
            } else {
                truth = mc_log_expectation(exact.mc_g, x, t, exact.horizon, mc_samples,
                                           rng.derive(1, static_cast<std::uint64_t>(n))
                                               .derive(static_cast<std::uint64_t>(m)))
                            .mean;
            }
            if (std::abs(truth) <= curve.guard) {
                ok[static_cast<std::size_t>(n)][static_cast<std::size_t>(m)] = 0;
                rel(m, n) = 0.0;
            } else {
                rel(m, n) = std::abs(approx - truth) / std::abs(truth);
            }
        }
    }

    curve.mean.resize(npts);
    curve.stddev.resize(npts);
    curve.guarded.assign(static_cast<std::size_t>(npts), 0);
    for (long n = 0; n < npts; ++n) {
        double sum = 0.0, sumsq = 0.0;
        long cnt = 0;
        for (long m = 0; m < M_test; ++m) {
            if (!ok[static_cast<std::size_t>(n)][static_cast<std::size_t>(m)]) continue;
            sum += rel(m, n);
            sumsq += rel(m, n) * rel(m, n);
            ++cnt;
        }
        curve.guarded[static_cast<std::size_t>(n)] = M_test - cnt;
        curve.guarded_total += M_test - cnt;
        if (cnt == 0) {
            curve.mean(n) = 0.0;
            curve.stddev(n) = 0.0;
        } else {
            curve.mean(n) = sum / static_cast<double>(cnt);
            curve.stddev(n) =
                cnt > 1 ? std::sqrt(std::max(0.0, (sumsq - sum * sum / cnt) / (cnt - 1)))
                        : 0.0;
        }
    }
    return curve;
}

// Sup-norm error of a 1-D field against a scalar reference on an inclusive
// uniform grid over [a, b].
inline double linf_error_1d(const Model& v, const std::function<double(double)>& f,
                            double a, double b, long count) {
    require(count >= 2, "sup-norm grid needs at least two points");
    require(b > a, "sup-norm interval must be non-degenerate");
    double worst = 0.0;
    Vec x(1);
    for (long i = 0; i < count; ++i) {
        x(0) = a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1);
        worst = std::max(worst, std::abs(v.value(0.0, x) - f(x(0))));
    }
    return worst;
}

// Sup-norm error over a (local step, draw count) grid: each cell trains a
// fresh 1-D model and evaluates it against the exact solution. A run that
// diverges leaves NaN in its cell instead of aborting the sweep. Cell (i, j)
// trains with seed base_seed + 101 i + j so cells draw distinct streams.
struct ErrorMatrix {
    std::vector<double> dt_values;
    std::vector<long> M_values;
    RowMat linf;  // M_values.size() x dt_values.size()
};

inline ErrorMatrix error_matrix_run(const ProblemBundle& bundle,
                                    const std::vector<double>& dt_values,
                                    const std::vector<long>& M_values,
                                    const ShotgunHyperparams& base,
                                    const TrainOptions& opts, long eval_count,
                                    const std::function<void(long, long, double)>&
                                        on_cell = {}) {
    require(!bundle.problem.time_dependent && bundle.boundary.has_value() &&
                static_cast<bool>(bundle.f1d),
            "the error sweep needs a 1-D problem with boundary data");
    require(!dt_values.empty() && !M_values.empty(), "the error sweep needs a non-empty grid");
    ErrorMatrix em;
    em.dt_values = dt_values;
    em.M_values = M_values;
    em.linf.resize(static_cast<long>(M_values.size()),
                   static_cast<long>(dt_values.size()));
    for (std::size_t i = 0; i < M_values.size(); ++i) {
        for (std::size_t j = 0; j < dt_values.size(); ++j) {
            ShotgunHyperparams h = base;
            h.M = M_values[i];
            h.local_dt = dt_values[j];
            h.seed = base.seed + 101 * static_cast<std::uint64_t>(i) +
                     static_cast<std::uint64_t>(j);
            const TrainResult res = train(bundle, h, opts);
            double err = std::numeric_limits<double>::quiet_NaN();
            if (res.diverged_at < 0)
                err = linf_error_1d(res.model, bundle.f1d, bundle.boundary->a,
                                    bundle.boundary->b, eval_count);
            em.linf(static_cast<long>(i), static_cast<long>(j)) = err;
            if (on_cell)
                on_cell(static_cast<long>(i), static_cast<long>(j), err);
        }
    }
    return em;
}

// Stationary second moment of the linear test recursion
//   theta_{k+1} = (I - 2 alpha D) theta_k + 2 alpha D xi_k,  Cov(xi) = V:
// solves F = A F A + 4 alpha^2 D V D with A = I - 2 alpha D by fixed-point
// iteration. Requires symmetric D, V and spectral radius of A below one.
struct NoiseDampingResult {
    RowMat F;
    long iterations = 0;
};

inline NoiseDampingResult noise_damping_fixed_point(const RowMat& D, const RowMat& V,
                                                    double alpha) {
    const long n = D.rows();
    require(n >= 1 && D.cols() == n, "D must be square");
    require(V.rows() == n && V.cols() == n, "V must match D");
    require((D - D.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, D.cwiseAbs().maxCoeff()),
            "D must be symmetric");
    require((V - V.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, V.cwiseAbs().maxCoeff()),
            "V must be symmetric");
    require(alpha > 0.0, "alpha must be positive");

    const RowMat A = RowMat::Identity(n, n) - 2.0 * alpha * D;
    Eigen::SelfAdjointEigenSolver<RowMat> es(A);
    require(es.info() == Eigen::Success, "eigen decomposition failed");
    const double rho = es.eigenvalues().cwiseAbs().maxCoeff();
    require(rho < 1.0, "the update map must be a contraction (spectral radius < 1)");

    const RowMat Q = 4.0 * alpha * alpha * (D * V * D);
    NoiseDampingResult out;
    out.F = RowMat::Zero(n, n);
    RowMat next(n, n);
    // One sweep contracts the error by rho^2, so the distance to the fixed
    // point is at most delta / (1 - rho^2); terminate on that bound.
    const double shrink = 1.0 - rho * rho;
    for (long it = 0; it < 1000000; ++it) {
        next.noalias() = A * out.F * A;
        next += Q;
        const double delta = (next - out.F).norm();
        out.F = next;
        out.iterations = it + 1;
        if (delta <= 1e-13 * std::max(1.0, out.F.norm()) * shrink) return out;
    }
    throw config_error("noise fixed point failed to converge");
}

}  // namespace sgpde

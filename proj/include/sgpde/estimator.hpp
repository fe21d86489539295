#pragma once

#include <cmath>
#include <vector>

#include "core.hpp"
#include "model.hpp"
#include "problems.hpp"
#include "rng.hpp"
#include "sampler.hpp"

namespace sgpde {

// Knobs for the local residual estimator.
struct EstimatorConfig {
    double local_dt = 0.0009765625;  // 4^-5
    long local_batch = 64;           // M
    bool antithetic = true;
    bool keep_components = false;
};

struct ResidualSample {
    double value = 0.0;
    double t = 0.0;
    Vec x;
    std::vector<double> components;  // per-draw terms when requested
};

// Derivative-free one-step residual with caller-supplied perturbations:
//   r = mean_m [ (v(t+dt, xb + s_m) + v(t+dt, xb - s_m) - 2 v(t, x)) / (2 dt) ] - phi,
// where xb = x + mu dt and s_m = sigma eta_plus_m / sigma eta_minus_m for the
// plus/minus branch. Antithetic estimation passes the same matrix twice. The
// field v is evaluated in one batch and never asked for gradients.
inline double residual_with_noise(const Model& v, const PdeProblem& p, double t,
                                  const Vec& x, double y, const Vec& z, double dt,
                                  const RowMat& eta_plus, const RowMat& eta_minus,
                                  const double* v_center_hint = nullptr,
                                  std::vector<double>* components = nullptr) {
    require(dt > 0.0, "local step must be positive");
    const long M = eta_plus.rows();
    require(M >= 1 && eta_minus.rows() == M, "perturbation batches must match");
    const long d = p.d;
    require(eta_plus.cols() == d && eta_minus.cols() == d,
            "perturbation width must match the state dimension");

    const SigmaAction sig = p.sigma(t, x, y, z);
    const Vec xb = x + p.mu(t, x, y, z) * dt;
    const double phi = p.phi(t, x, y, z);

    RowMat pts(2 * M, d);
    pts.topRows(M) = eta_plus;
    pts.bottomRows(M) = eta_minus;
    sig.apply_rows(pts);
    pts.topRows(M).rowwise() += xb.transpose();
    pts.bottomRows(M) *= -1.0;
    pts.bottomRows(M).rowwise() += xb.transpose();

    const double v0 = v_center_hint ? *v_center_hint : v.value(t, x);
    Vec vals;
    v.eval_rows_at(t + dt, pts, &vals, nullptr);

    if (components) components->resize(static_cast<std::size_t>(M));
    double acc = 0.0;
    for (long m = 0; m < M; ++m) {
        const double term = (vals(m) + vals(M + m) - 2.0 * v0) / (2.0 * dt) - phi;
        acc += term;
        if (components) (*components)[static_cast<std::size_t>(m)] = term;
    }
    return acc / static_cast<double>(M);
}

namespace detail {
inline void check_local_horizon(const Model& v, const PdeProblem& p, double t, double dt) {
    if (!v.has_time_input()) return;
    const double tol = 1e-12 * std::max(1.0, std::abs(p.T));
    require(t + dt <= p.T + tol, "local step overruns the horizon");
}
}  // namespace detail

// Residual at an interior trajectory point (t, x, y, z), drawing the local
// perturbations from rng.
inline ResidualSample single_step_residual(const Model& v, const PdeProblem& p, double t,
                                           const Vec& x, double y, const Vec& z,
                                           const EstimatorConfig& cfg, RngStream rng) {
    require(cfg.local_dt > 0.0, "estimator needs local_dt > 0");
    require(cfg.local_batch >= 1, "estimator needs local_batch >= 1");
    detail::check_local_horizon(v, p, t, cfg.local_dt);

    ResidualSample s;
    s.t = t;
    s.x = x;
    // The plus-branch draws are identical in paired and independent modes; the
    // independent minus branch comes from a derived substream.
    const RowMat eta = antithetic_normals(rng, cfg.local_batch, p.d, cfg.local_dt);
    if (cfg.antithetic) {
        s.value = residual_with_noise(v, p, t, x, y, z, cfg.local_dt, eta, eta, nullptr,
                                      cfg.keep_components ? &s.components : nullptr);
    } else {
        const RowMat eta2 =
            antithetic_normals(rng.derive(1), cfg.local_batch, p.d, cfg.local_dt);
        s.value = residual_with_noise(v, p, t, x, y, z, cfg.local_dt, eta, eta2, nullptr,
                                      cfg.keep_components ? &s.components : nullptr);
    }
    return s;
}

// Residual for a time-independent field at a collocation point x: the same
// stencil with v(t + dt, .) = v(.). y is the field value at x and z its
// gradient when the coefficients consume them.
inline ResidualSample shotgun_pinn_residual(const Model& v, const PdeProblem& p,
                                            const Vec& x, const EstimatorConfig& cfg,
                                            RngStream rng) {
    require(!p.time_dependent, "collocation residual is for time-independent problems");
    require(cfg.local_dt > 0.0, "estimator needs local_dt > 0");
    require(cfg.local_batch >= 1, "estimator needs local_batch >= 1");

    ResidualSample s;
    s.t = 0.0;
    s.x = x;
    const double y = v.value(0.0, x);
    const Vec z = p.depends_on_z ? v.space_gradient(0.0, x) : Vec::Zero(p.d).eval();
    const RowMat eta = antithetic_normals(rng, cfg.local_batch, p.d, cfg.local_dt);
    if (cfg.antithetic) {
        s.value = residual_with_noise(v, p, 0.0, x, y, z, cfg.local_dt, eta, eta, &y,
                                      cfg.keep_components ? &s.components : nullptr);
    } else {
        const RowMat eta2 =
            antithetic_normals(rng.derive(1), cfg.local_batch, p.d, cfg.local_dt);
        s.value = residual_with_noise(v, p, 0.0, x, y, z, cfg.local_dt, eta, eta2, &y,
                                      cfg.keep_components ? &s.components : nullptr);
    }
    return s;
}

struct MomentRow {
    double dt = 0.0;
    long M = 0;
    double mean = 0.0;
    double var = 0.0;
    double std_err = 0.0;
};

// Empirical mean/variance of the residual estimate over repeated trials for
// every (dt, M) pair, evaluated at the problem anchor x0. Deterministic per
// cell: the stream for cell (i, j) is rng.derive(i, j).
inline std::vector<MomentRow> residual_moment_scan(const Model& v, const PdeProblem& p,
                                                   const std::vector<double>& dt_values,
                                                   const std::vector<long>& M_values,
                                                   long trials, RngStream rng) {
    require(trials >= 2, "moment scan needs at least two trials");
    std::vector<MomentRow> rows;
    rows.reserve(dt_values.size() * M_values.size());
    const double t0 = 0.0;
    const double y0 = v.value(t0, p.x0);
    const Vec z0 = p.depends_on_z ? v.space_gradient(t0, p.x0) : Vec::Zero(p.d).eval();

    for (std::size_t i = 0; i < dt_values.size(); ++i) {
        for (std::size_t j = 0; j < M_values.size(); ++j) {
            EstimatorConfig cfg;
            cfg.local_dt = dt_values[i];
            cfg.local_batch = M_values[j];
            if (v.has_time_input()) detail::check_local_horizon(v, p, t0, cfg.local_dt);
            const RngStream cell = rng.derive(static_cast<std::uint64_t>(i),
                                              static_cast<std::uint64_t>(j));
            double sum = 0.0, sumsq = 0.0;
            for (long k = 0; k < trials; ++k) {
                const RowMat eta = antithetic_normals(
                    cell.derive(static_cast<std::uint64_t>(k)), cfg.local_batch, p.d,
                    cfg.local_dt);
                const double r = residual_with_noise(v, p, t0, p.x0, y0, z0, cfg.local_dt,
                                                     eta, eta, &y0);
                sum += r;
                sumsq += r * r;
            }
            MomentRow row;
            row.dt = cfg.local_dt;
            row.M = cfg.local_batch;
            row.mean = sum / static_cast<double>(trials);
            row.var = (sumsq - sum * sum / static_cast<double>(trials)) /
                      static_cast<double>(trials - 1);
            row.std_err = std::sqrt(std::max(row.var, 0.0) / static_cast<double>(trials));
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace sgpde

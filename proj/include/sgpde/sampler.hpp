#pragma once

#include <cmath>
#include <vector>

#include "core.hpp"
#include "model.hpp"
#include "problems.hpp"
#include "rng.hpp"

namespace sgpde {

// Substream convention shared by every consumer of a per-trajectory stream:
//   traj.derive(0)      grid offset
//   traj.derive(1)      initial state
//   traj.derive(2)      path noise, nodes in order, d draws per node
//   traj.derive(3 + n)  local estimator noise at node n
// Replays therefore depend only on (seed, ids), never on evaluation batching.
inline constexpr long kSubOffset = 0;
inline constexpr long kSubInitial = 1;
inline constexpr long kSubPath = 2;
inline constexpr long kSubEstimatorBase = 3;

// Shifted coarse grid: t_0 = 0, t_n = delta + (n - 1) T / N for n = 1..N,
// t_{N+1} = T, with 0 < delta < T / N. N + 2 points, strictly increasing.
struct TimeGrid {
    double T = 1.0;
    long N = 1;
    double delta = 0.0;
    std::vector<double> points;

    double ell() const { return T / static_cast<double>(N); }
    long steps() const { return static_cast<long>(points.size()) - 1; }
};

inline TimeGrid coarse_time_grid(double T, long N, double delta) {
    require(T > 0.0, "time grid needs T > 0");
    require(N >= 1, "time grid needs N >= 1");
    const double ell = T / static_cast<double>(N);
    require(delta > 0.0 && delta < ell, "grid offset must lie strictly inside (0, T/N)");
    TimeGrid grid;
    grid.T = T;
    grid.N = N;
    grid.delta = delta;
    grid.points.resize(static_cast<std::size_t>(N) + 2);
    grid.points[0] = 0.0;
    for (long n = 1; n <= N; ++n)
        grid.points[static_cast<std::size_t>(n)] = delta + static_cast<double>(n - 1) * ell;
    grid.points[static_cast<std::size_t>(N) + 1] = T;
    for (std::size_t i = 0; i + 1 < grid.points.size(); ++i)
        require(grid.points[i] < grid.points[i + 1], "time grid is not strictly increasing");
    return grid;
}

// Uniform draw strictly inside (0, ell).
inline double sample_offset(RngStream rng, double ell) {
    require(ell > 0.0, "offset range must be positive");
    double u = 0.0;
    do {
        u = rng.uniform01();
    } while (u == 0.0);
    return u * ell;
}

// M rows of N(0, dt I_d) perturbations; each row is one local draw.
inline RowMat antithetic_normals(RngStream rng, long M, long d, double dt) {
    require(M >= 1 && d >= 1, "perturbation batch needs M >= 1 and d >= 1");
    require(dt > 0.0, "perturbation batch needs dt > 0");
    RowMat eta(M, d);
    rng.fill_normal(eta.data(), static_cast<std::size_t>(M * d), std::sqrt(dt));
    return eta;
}

// One simulated trajectory on a coarse grid. Rows of X (and Z) follow the
// grid points; Z is empty in gradient-free mode.
struct TrajectoryBatch {
    TimeGrid grid;
    RowMat X;  // (N+2) x d
    Vec Y;     // N+2
    RowMat Z;  // (N+2) x d, or 0 x 0
};

namespace detail {
inline void check_finite_state(const Vec& x, double y, long node) {
    if (!x.allFinite() || !std::isfinite(y))
        throw divergence_error("trajectory state became non-finite", node);
}
}  // namespace detail

// Euler scheme for the forward/backward pair driven by a field v:
//   X_{n+1} = X_n + mu dt + sigma eta,     eta ~ N(0, dt I),
//   Y_{n+1} = Y_n + phi dt + z . (sigma eta),   Y_0 = v(0, X_0).
// In gradient-free mode Y_n = v(t_n, X_n) at every node instead and z is
// never requested. The caller owns traj_rng; this reads substreams 1 and 2.
inline TrajectoryBatch simulate_trajectory(const PdeProblem& p, const Model& v,
                                           const TimeGrid& grid, RngStream traj_rng,
                                           bool gradient_free = false) {
    require(!(gradient_free && p.depends_on_z),
            "gradient-free simulation cannot serve z-dependent coefficients");
    const long d = p.d;
    const long last = grid.steps();  // N + 1 transitions, nodes 0..last

    TrajectoryBatch tb;
    tb.grid = grid;
    tb.X.resize(last + 1, d);
    tb.Y.resize(last + 1);
    if (!gradient_free) tb.Z.resize(last + 1, d);

    Vec x = sample_initial(p, traj_rng.derive(kSubInitial));
    RngStream path = traj_rng.derive(kSubPath);

    double y = v.value(grid.points[0], x);
    detail::check_finite_state(x, y, 0);
    tb.X.row(0) = x;
    tb.Y(0) = y;

    Vec eta(d), z = Vec::Zero(d);
    for (long n = 0; n <= last; ++n) {
        const double t = grid.points[static_cast<std::size_t>(n)];
        if (!gradient_free) {
            z = v.space_gradient(t, x);
            tb.Z.row(n) = z;
        }
        if (n == last) break;

        const double dt = grid.points[static_cast<std::size_t>(n) + 1] - t;
        const SigmaAction sig = p.sigma(t, x, y, z);
        const Vec drift = p.mu(t, x, y, z);
        path.fill_normal(eta, std::sqrt(dt));
        const Vec noise = sig.apply(eta);

        x += drift * dt + noise;
        if (gradient_free) {
            y = v.value(grid.points[static_cast<std::size_t>(n) + 1], x);
        } else {
            y += p.phi(t, tb.X.row(n).transpose(), y, z) * dt + z.dot(noise);
        }
        detail::check_finite_state(x, y, n + 1);
        tb.X.row(n + 1) = x;
        tb.Y(n + 1) = y;
    }
    return tb;
}

// Forward states only, on an arbitrary increasing time grid, with y (and z
// when the coefficients need it) read from the supplied field. Used for
// evaluation paths. Reads substreams 1 and 2 of traj_rng.
inline RowMat simulate_states(const PdeProblem& p, const Model& v,
                              const std::vector<double>& times, RngStream traj_rng) {
    require(times.size() >= 1, "state simulation needs at least one time");
    const long d = p.d;
    RowMat X(static_cast<long>(times.size()), d);
    Vec x = sample_initial(p, traj_rng.derive(kSubInitial));
    RngStream path = traj_rng.derive(kSubPath);
    X.row(0) = x;
    Vec eta(d);
    for (std::size_t n = 0; n + 1 < times.size(); ++n) {
        const double t = times[n];
        const double dt = times[n + 1] - t;
        require(dt > 0.0, "state simulation times must increase");
        const double y = v.value(t, x);
        const Vec z = p.depends_on_z ? v.space_gradient(t, x) : Vec::Zero(d).eval();
        const SigmaAction sig = p.sigma(t, x, y, z);
        path.fill_normal(eta, std::sqrt(dt));
        x += p.mu(t, x, y, z) * dt + sig.apply(eta);
        if (!x.allFinite())
            throw divergence_error("state simulation became non-finite",
                                   static_cast<long>(n) + 1);
        X.row(static_cast<long>(n) + 1) = x;
    }
    return X;
}

}  // namespace sgpde

#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "model.hpp"
#include "neural.hpp"
#include "parallel.hpp"
#include "problems.hpp"
#include "rng.hpp"
#include "sampler.hpp"

namespace sgpde {

enum class TrainMethod { rfd, sde_match };

// Hyperparameters for one training run. For method rfd on time-dependent
// problems: M1 trajectories per epoch on an N-interval coarse grid, M local
// draws, local step local_dt. Time-independent problems train on
// `collocation` random points per epoch instead (M1/N unused). For method
// sde_match, N is the fine simulation grid and M/local_dt are unused.
struct ShotgunHyperparams {
    long M1 = 50;
    long N = 10;
    long M = 64;
    double local_dt = 0.0009765625;  // 4^-5
    long epochs = 10000;
    LrSchedule lr;
    std::uint64_t seed = 1;
    bool gradient_free = false;
    bool live_coefficients = false;  // feed the current net value to phi's y slot
    long collocation = 100;
    TrainMethod method = TrainMethod::rfd;
};

struct LossBreakdown {
    double interior = 0.0;
    double terminal = 0.0;
    double boundary = 0.0;
    double total() const { return interior + terminal + boundary; }
};

struct EpochStats {
    double simulate_seconds = 0.0;  // trajectory simulation / forward sweep
    double residual_seconds = 0.0;  // loss-side batch assembly and forward passes
    double backward_seconds = 0.0;  // gradient computation
};

namespace detail {
using Clock = std::chrono::steady_clock;
inline double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Central finite difference of phi in its y argument.
inline double phi_dy(const PdeProblem& p, double t, const Vec& x, double y, const Vec& z) {
    const double h = 1e-6 * std::max(1.0, std::abs(y));
    return (p.phi(t, x, y + h, z) - p.phi(t, x, y - h, z)) / (2.0 * h);
}
}  // namespace detail

// All trajectories of one epoch, stored node-major: X[n], Y[n], Z[n] hold row
// m for trajectory m at node n. Simulation advances every trajectory in
// lockstep so the field evaluations batch across trajectories, while each
// trajectory consumes its own substreams exactly as simulate_trajectory
// would (trajectory m uses epoch_rng.derive(m)).
struct EpochTrajectories {
    std::vector<TimeGrid> grids;  // per trajectory
    std::vector<RowMat> X;        // nodes 0..N+1
    std::vector<Vec> Y;           // nodes 0..N+1
    std::vector<RowMat> Z;        // nodes 0..N (empty in gradient-free mode)
};

inline EpochTrajectories lockstep_trajectories(const PdeProblem& p, const NetModel& v,
                                               long M1, long N, RngStream epoch_rng,
                                               bool gradient_free) {
    require(M1 >= 1, "epoch needs at least one trajectory");
    require(!(gradient_free && p.depends_on_z),
            "gradient-free simulation cannot serve z-dependent coefficients");
    const long d = p.d;

    EpochTrajectories et;
    et.grids.reserve(static_cast<std::size_t>(M1));
    std::vector<RngStream> path;
    path.reserve(static_cast<std::size_t>(M1));
    RowMat X0(M1, d);
    for (long m = 0; m < M1; ++m) {
        const RngStream traj = epoch_rng.derive(static_cast<std::uint64_t>(m));
        const double ell = p.T / static_cast<double>(N);
        const double delta = sample_offset(traj.derive(kSubOffset), ell);
        et.grids.push_back(coarse_time_grid(p.T, N, delta));
        X0.row(m) = sample_initial(p, traj.derive(kSubInitial));
        path.push_back(traj.derive(kSubPath));
    }

    const long last = N + 1;
    et.X.assign(static_cast<std::size_t>(last) + 1, RowMat());
    et.Y.assign(static_cast<std::size_t>(last) + 1, Vec());
    if (!gradient_free) et.Z.assign(static_cast<std::size_t>(last), RowMat());
    et.X[0] = X0;

    std::vector<double> ts(static_cast<std::size_t>(M1));
    Vec vals;
    RowMat grads;
    Vec eta(d);
    for (long n = 0; n <= last; ++n) {
        const auto nn = static_cast<std::size_t>(n);
        for (long m = 0; m < M1; ++m)
            ts[static_cast<std::size_t>(m)] = et.grids[static_cast<std::size_t>(m)].points[nn];

        // gradient-free: values at every node; otherwise values only feed Y_0
        // and gradients feed Z_n for the interior nodes.
        const bool want_vals = gradient_free || n == 0;
        const bool want_grads = !gradient_free && n < last;
        if (want_vals || want_grads)
            v.eval_rows(ts.data(), et.X[nn], want_vals ? &vals : nullptr,
                        want_grads ? &grads : nullptr);
        if (n == 0 || gradient_free) et.Y[nn] = vals;
        if (want_grads) et.Z[nn] = grads;
        if (!et.X[nn].allFinite() || !et.Y[nn].allFinite())
            throw divergence_error("trajectory state became non-finite", n);
        if (n == last) break;

        et.X[nn + 1].resize(M1, d);
        if (!gradient_free) et.Y[nn + 1].resize(M1);
        for (long m = 0; m < M1; ++m) {
            const auto ms = static_cast<std::size_t>(m);
            const double t = ts[ms];
            const double dt = et.grids[ms].points[nn + 1] - t;
            const Vec x = et.X[nn].row(m).transpose();
            const double y = et.Y[nn](m);
            const Vec z = gradient_free ? Vec::Zero(d).eval()
                                        : et.Z[nn].row(m).transpose().eval();
            const SigmaAction sig = p.sigma(t, x, y, z);
            path[ms].fill_normal(eta, std::sqrt(dt));
            const Vec noise = sig.apply(eta);
            et.X[nn + 1].row(m) = (x + p.mu(t, x, y, z) * dt + noise).transpose();
            if (!gradient_free)
                et.Y[nn + 1](m) = y + p.phi(t, x, y, z) * dt + z.dot(noise);
        }
    }
    if (gradient_free) {
        // value at the terminal node, for parity with simulate_trajectory
        const auto nn = static_cast<std::size_t>(last);
        for (long m = 0; m < M1; ++m)
            ts[static_cast<std::size_t>(m)] = et.grids[static_cast<std::size_t>(m)].points[nn];
        v.eval_rows(ts.data(), et.X[nn], &vals, nullptr);
        et.Y[nn] = vals;
        if (!et.Y[nn].allFinite())
            throw divergence_error("trajectory state became non-finite", last);
    }
    return et;
}

namespace detail {

// Scratch for one residual chunk; thread_local so parallel workers and
// successive epochs reuse their allocations.
struct ChunkScratch {
    BatchWork work;
    Vec upstream;
    std::vector<double> tfac, gval;
};

}  // namespace detail

// One epoch of the trajectory-shotgun loss:
//   L = (1/(M1 (N+1))) sum_{traj, node} r(t_n, X_n, Y_n, Z_n)^2
//     + (1/M1) sum_traj (v(T, X_{N+1}) - g(X_{N+1}))^2          [no ansatz]
// with r the antithetic one-step residual (local step min(local_dt, T - t_n),
// M draws). Trajectories are detached: gradients flow only through the field
// evaluations inside r and the terminal penalty. Residual rows are assembled
// in trajectory chunks and pushed through batched forward/backward passes;
// accumulation order is fixed, so results do not depend on thread count.
inline LossBreakdown shotgun_epoch_loss(const NetModel& model, const PdeProblem& p,
                                        const ShotgunHyperparams& h, RngStream epoch_rng,
                                        NetworkGradients& grads, EpochStats* stats = nullptr,
                                        int threads = 1) {
    require(p.time_dependent, "the trajectory loss needs a time-dependent problem");
    require(h.M >= 1 && h.N >= 1 && h.M1 >= 1, "M1, N, M must be positive");
    require(h.local_dt > 0.0, "local_dt must be positive");
    if (h.gradient_free)
        require(!p.depends_on_z,
                "gradient-free training cannot serve z-dependent coefficients");

    const auto t_sim = detail::Clock::now();
    const EpochTrajectories et =
        lockstep_trajectories(p, model, h.M1, h.N, epoch_rng, h.gradient_free);
    if (stats) stats->simulate_seconds += detail::seconds_since(t_sim);

    const long d = p.d;
    const long M = h.M;
    const long nodes = h.N + 1;              // residual nodes 0..N
    const long per_node = 2 * M + 1;
    const bool terminal_row = !model.use_ansatz;
    const long R = nodes * per_node + (terminal_row ? 1 : 0);
    const long chunk = std::max<long>(1, std::min<long>(h.M1, 12288 / R));
    const long n_chunks = (h.M1 + chunk - 1) / chunk;
    const double wi = 1.0 / (static_cast<double>(h.M1) * static_cast<double>(nodes));
    const double wt = 1.0 / static_cast<double>(h.M1);

    std::vector<NetworkGradients> gslots;
    gslots.reserve(static_cast<std::size_t>(n_chunks));
    for (long c = 0; c < n_chunks; ++c) gslots.push_back(make_gradients(model.net));
    std::vector<double> interior_slot(static_cast<std::size_t>(n_chunks), 0.0);
    std::vector<double> terminal_slot(static_cast<std::size_t>(n_chunks), 0.0);
    std::vector<double> fwd_seconds(static_cast<std::size_t>(n_chunks), 0.0);
    std::vector<double> bwd_seconds(static_cast<std::size_t>(n_chunks), 0.0);

    parallel_chunks(n_chunks, threads, [&](long c) {
        const long c0 = c * chunk;
        const long c1 = std::min<long>(h.M1, c0 + chunk);
        const long nt = c1 - c0;
        const long rows = nt * R;

        thread_local detail::ChunkScratch ws;
        detail::ensure(ws.work.in, rows, d + 1);
        ws.upstream.resize(rows);
        if (model.use_ansatz) {
            ws.tfac.resize(static_cast<std::size_t>(rows));
            ws.gval.resize(static_cast<std::size_t>(rows));
        }

        const auto t_fwd = detail::Clock::now();
        // pass 1: assemble all rows of this chunk
        RowMat pert;
        Vec x(d), xb(d);
        for (long j = 0; j < nt; ++j) {
            const long m = c0 + j;
            const auto ms = static_cast<std::size_t>(m);
            const RngStream traj = epoch_rng.derive(static_cast<std::uint64_t>(m));
            for (long n = 0; n < nodes; ++n) {
                const auto nn = static_cast<std::size_t>(n);
                const long base = j * R + n * per_node;
                const double t = et.grids[ms].points[nn];
                const double dt = std::min(h.local_dt, p.T - t);
                x = et.X[nn].row(m).transpose();
                const double y = et.Y[nn](m);
                const Vec z = h.gradient_free ? Vec::Zero(d).eval()
                                              : et.Z[nn].row(m).transpose().eval();
                const SigmaAction sig = p.sigma(t, x, y, z);
                xb = x + p.mu(t, x, y, z) * dt;

                pert = antithetic_normals(
                    traj.derive(static_cast<std::uint64_t>(kSubEstimatorBase + n)), M, d,
                    dt);
                sig.apply_rows(pert);

                ws.work.in(base, 0) = t;
                ws.work.in.row(base).tail(d) = x.transpose();
                const double tp = t + dt;
                for (long k = 0; k < M; ++k) {
                    ws.work.in(base + 1 + k, 0) = tp;
                    ws.work.in.row(base + 1 + k).tail(d) = xb.transpose() + pert.row(k);
                    ws.work.in(base + 1 + M + k, 0) = tp;
                    ws.work.in.row(base + 1 + M + k).tail(d) =
                        xb.transpose() - pert.row(k);
                }
            }
            if (terminal_row) {
                const long base = j * R + nodes * per_node;
                ws.work.in(base, 0) = p.T;
                ws.work.in.row(base).tail(d) =
                    et.X[static_cast<std::size_t>(h.N) + 1].row(m);
            }
        }
        if (model.use_ansatz) {
            Vec xr(d);
            for (long i = 0; i < rows; ++i) {
                ws.tfac[static_cast<std::size_t>(i)] = model.horizon - ws.work.in(i, 0);
                xr = ws.work.in.row(i).tail(d).transpose();
                ws.gval[static_cast<std::size_t>(i)] = model.terminal(xr);
            }
        }

        forward_batch(model.net, ws.work);

        // pass 2: residuals, loss, upstream weights
        auto value_at = [&](long i) {
            const double raw = ws.work.out(i);
            if (!model.use_ansatz) return raw;
            return ws.gval[static_cast<std::size_t>(i)] +
                   ws.tfac[static_cast<std::size_t>(i)] * raw;
        };
        double interior = 0.0, terminal = 0.0;
        for (long j = 0; j < nt; ++j) {
            const long m = c0 + j;
            const auto ms = static_cast<std::size_t>(m);
            for (long n = 0; n < nodes; ++n) {
                const auto nn = static_cast<std::size_t>(n);
                const long base = j * R + n * per_node;
                const double t = et.grids[ms].points[nn];
                const double dt = std::min(h.local_dt, p.T - t);
                x = et.X[nn].row(m).transpose();
                const Vec z = h.gradient_free ? Vec::Zero(d).eval()
                                              : et.Z[nn].row(m).transpose().eval();
                const double v0 = value_at(base);
                const double y = h.live_coefficients ? v0 : et.Y[nn](m);

                double sum = 0.0;
                for (long k = 0; k < M; ++k)
                    sum += value_at(base + 1 + k) + value_at(base + 1 + M + k);
                const double phi = p.phi(t, x, y, z);
                const double r =
                    (sum - 2.0 * static_cast<double>(M) * v0) /
                        (2.0 * static_cast<double>(M) * dt) -
                    phi;
                interior += wi * r * r;

                const double gup = 2.0 * wi * r;
                const double up_pm = gup / (2.0 * static_cast<double>(M) * dt);
                double up_v0 = -gup / dt;
                if (h.live_coefficients) up_v0 -= gup * detail::phi_dy(p, t, x, y, z);
                ws.upstream(base) = up_v0;
                for (long k = 0; k < 2 * M; ++k) ws.upstream(base + 1 + k) = up_pm;
            }
            if (terminal_row) {
                const long base = j * R + nodes * per_node;
                const double vT = value_at(base);
                const double diff =
                    vT - p.g(et.X[static_cast<std::size_t>(h.N) + 1].row(m).transpose());
                terminal += wt * diff * diff;
                ws.upstream(base) = 2.0 * wt * diff;
            }
        }
        if (model.use_ansatz)
            for (long i = 0; i < rows; ++i)
                ws.upstream(i) *= ws.tfac[static_cast<std::size_t>(i)];
        interior_slot[static_cast<std::size_t>(c)] = interior;
        terminal_slot[static_cast<std::size_t>(c)] = terminal;
        fwd_seconds[static_cast<std::size_t>(c)] = detail::seconds_since(t_fwd);

        const auto t_bwd = detail::Clock::now();
        backward_batch(model.net, ws.work, ws.upstream,
                       &gslots[static_cast<std::size_t>(c)]);
        bwd_seconds[static_cast<std::size_t>(c)] = detail::seconds_since(t_bwd);
    });

    LossBreakdown loss;
    for (long c = 0; c < n_chunks; ++c) {
        loss.interior += interior_slot[static_cast<std::size_t>(c)];
        loss.terminal += terminal_slot[static_cast<std::size_t>(c)];
        grads.add(gslots[static_cast<std::size_t>(c)]);
        if (stats) {
            stats->residual_seconds += fwd_seconds[static_cast<std::size_t>(c)];
            stats->backward_seconds += bwd_seconds[static_cast<std::size_t>(c)];
        }
    }
    return loss;
}

// One epoch of the collocation loss for time-independent 1-D problems:
//   L = sum_i r(x_i)^2 + (v(a) - u_a)^2 + (v(b) - u_b)^2,
// x_i uniform on (a, b), r the antithetic one-step residual with the field
// itself as both time slices. Point i draws its perturbations from
// epoch_rng.derive(1 + i); the collocation points come from derive(0).
inline LossBreakdown collocation_epoch_loss(const NetModel& model, const PdeProblem& p,
                                            const Boundary1D& bd,
                                            const ShotgunHyperparams& h,
                                            RngStream epoch_rng, NetworkGradients& grads,
                                            EpochStats* stats = nullptr, int threads = 1) {
    require(!p.time_dependent, "collocation training is for time-independent problems");
    require(p.d == 1, "collocation training is implemented for d = 1");
    require(h.collocation >= 1, "collocation count must be positive");
    require(h.M >= 1 && h.local_dt > 0.0, "M and local_dt must be positive");

    const long P = h.collocation;
    const long M = h.M;
    const double dt = h.local_dt;
    const long per_pt = 2 * M + 1;
    const long chunk_pts = std::max<long>(1, std::min<long>(P, 12288 / per_pt));
    const long n_chunks = (P + chunk_pts - 1) / chunk_pts;

    std::vector<double> xs(static_cast<std::size_t>(P));
    {
        RngStream pts = epoch_rng.derive(0);
        for (long i = 0; i < P; ++i)
            xs[static_cast<std::size_t>(i)] = pts.uniform(bd.a, bd.b);
    }

    std::vector<NetworkGradients> gslots;
    gslots.reserve(static_cast<std::size_t>(n_chunks) + 1);
    for (long c = 0; c <= n_chunks; ++c) gslots.push_back(make_gradients(model.net));
    std::vector<double> interior_slot(static_cast<std::size_t>(n_chunks), 0.0);
    std::vector<double> fwd_seconds(static_cast<std::size_t>(n_chunks), 0.0);
    std::vector<double> bwd_seconds(static_cast<std::size_t>(n_chunks), 0.0);

    parallel_chunks(n_chunks, threads, [&](long c) {
        const long i0 = c * chunk_pts;
        const long i1 = std::min<long>(P, i0 + chunk_pts);
        const long np = i1 - i0;
        const long rows = np * per_pt;

        thread_local detail::ChunkScratch ws;
        detail::ensure(ws.work.in, rows, 1);
        ws.upstream.resize(rows);

        const auto t_fwd = detail::Clock::now();
        Vec x(1);
        RowMat pert;
        for (long j = 0; j < np; ++j) {
            const long i = i0 + j;
            const long base = j * per_pt;
            x(0) = xs[static_cast<std::size_t>(i)];
            const SigmaAction sig = p.sigma(0.0, x, 0.0, Vec::Zero(1));
            const Vec xb = x + p.mu(0.0, x, 0.0, Vec::Zero(1)) * dt;
            pert = antithetic_normals(epoch_rng.derive(static_cast<std::uint64_t>(1 + i)),
                                      M, 1, dt);
            sig.apply_rows(pert);
            ws.work.in(base, 0) = x(0);
            for (long k = 0; k < M; ++k) {
                ws.work.in(base + 1 + k, 0) = xb(0) + pert(k, 0);
                ws.work.in(base + 1 + M + k, 0) = xb(0) - pert(k, 0);
            }
        }
        forward_batch(model.net, ws.work);

        double interior = 0.0;
        for (long j = 0; j < np; ++j) {
            const long i = i0 + j;
            const long base = j * per_pt;
            x(0) = xs[static_cast<std::size_t>(i)];
            const double v0 = ws.work.out(base);
            double sum = 0.0;
            for (long k = 0; k < 2 * M; ++k) sum += ws.work.out(base + 1 + k);
            const double phi = p.phi(0.0, x, v0, Vec::Zero(1));
            const double r = (sum - 2.0 * static_cast<double>(M) * v0) /
                                 (2.0 * static_cast<double>(M) * dt) -
                             phi;
            interior += r * r;
            const double gup = 2.0 * r;
            ws.upstream(base) = -gup / dt;
            const double up_pm = gup / (2.0 * static_cast<double>(M) * dt);
            for (long k = 0; k < 2 * M; ++k) ws.upstream(base + 1 + k) = up_pm;
        }
        interior_slot[static_cast<std::size_t>(c)] = interior;
        fwd_seconds[static_cast<std::size_t>(c)] = detail::seconds_since(t_fwd);

        const auto t_bwd = detail::Clock::now();
        backward_batch(model.net, ws.work, ws.upstream,
                       &gslots[static_cast<std::size_t>(c)]);
        bwd_seconds[static_cast<std::size_t>(c)] = detail::seconds_since(t_bwd);
    });

    // boundary penalty as its own two-row batch
    LossBreakdown loss;
    {
        thread_local BatchWork bw;
        detail::ensure(bw.in, 2, 1);
        bw.in(0, 0) = bd.a;
        bw.in(1, 0) = bd.b;
        forward_batch(model.net, bw);
        const double da = bw.out(0) - bd.ua;
        const double db = bw.out(1) - bd.ub;
        loss.boundary = da * da + db * db;
        Vec up(2);
        up(0) = 2.0 * da;
        up(1) = 2.0 * db;
        const auto t_bwd = detail::Clock::now();
        backward_batch(model.net, bw, up, &gslots[static_cast<std::size_t>(n_chunks)]);
        if (stats) stats->backward_seconds += detail::seconds_since(t_bwd);
    }

    for (long c = 0; c < n_chunks; ++c) {
        loss.interior += interior_slot[static_cast<std::size_t>(c)];
        grads.add(gslots[static_cast<std::size_t>(c)]);
        if (stats) {
            stats->residual_seconds += fwd_seconds[static_cast<std::size_t>(c)];
            stats->backward_seconds += bwd_seconds[static_cast<std::size_t>(c)];
        }
    }
    grads.add(gslots[static_cast<std::size_t>(n_chunks)]);
    return loss;
}

// One epoch of the trajectory-matching baseline on a uniform N-step grid:
//   X_{n+1} = X_n + mu dt + sigma dW,        Y_n = v(t_n, X_n)  (live),
//   Yh_{n+1} = Yh_n + phi(t_n, X_n, Y_n, Z_n) dt + Z_n . sigma dW,  Yh_0 = Y_0,
//   L_m = (1/N) sum_{n>=1} (Y_n - Yh_n)^2 + (Y_N - g)^2 + |Z_N - grad g|^2,
// averaged over M1 trajectories. The squared-Y terms land in loss.interior /
// loss.terminal; the gradient penalty |Z_N - grad g|^2 is reported in
// loss.boundary. Gradients flow through every field value Y_k, including its
// feedback into later Yh_n through phi's y argument (handled exactly via
// suffix sums); the Z paths are treated as constants, so the gradient
// penalty steers the loss value but not the parameter update. Because the coefficients may read y and z, nodes are simulated
// sequentially; the gradient pass re-runs one forward/backward per node.
inline LossBreakdown sde_matching_loss(const NetModel& model, const PdeProblem& p,
                                       const ShotgunHyperparams& h, RngStream epoch_rng,
                                       NetworkGradients& grads,
                                       EpochStats* stats = nullptr) {
    require(p.time_dependent, "the trajectory-matching loss needs a time-dependent problem");
    require(h.M1 >= 1 && h.N >= 1, "M1 and N must be positive");
    require(static_cast<bool>(p.grad_g),
            "the trajectory-matching loss needs the terminal gradient");
    const long N = h.N;
    const long d = p.d;
    const double dt = p.T / static_cast<double>(N);
    const double invM1 = 1.0 / static_cast<double>(h.M1);

    LossBreakdown loss;
    RowMat X(N + 1, d);
    Vec Y(N + 1), Yh(N + 1), phis(N), phiy(N), w(N + 1);
    RowMat Z(N + 1, d);
    std::vector<double> suffix(static_cast<std::size_t>(N) + 2, 0.0);
    Vec eta(d), x(d), z(d);

    thread_local BatchWork work;
    for (long m = 0; m < h.M1; ++m) {
        const RngStream traj = epoch_rng.derive(static_cast<std::uint64_t>(m));
        RngStream path = traj.derive(kSubPath);
        x = sample_initial(p, traj.derive(kSubInitial));

        const auto t_sim = detail::Clock::now();
        RowMat xrow(1, d), grow;
        Vec vrow;
        for (long n = 0; n <= N; ++n) {
            const double t = dt * static_cast<double>(n);
            X.row(n) = x;
            xrow.row(0) = x;
            model.eval_rows(&t, xrow, &vrow, &grow);
            Y(n) = vrow(0);
            z = grow.row(0).transpose();
            Z.row(n) = z;
            if (n == 0) Yh(0) = Y(0);
            if (!std::isfinite(Y(n)) || !std::isfinite(Yh(n)) || !x.allFinite())
                throw divergence_error("trajectory state became non-finite", n);
            if (n == N) break;
            const SigmaAction sig = p.sigma(t, x, Y(n), z);
            path.fill_normal(eta, std::sqrt(dt));
            const Vec noise = sig.apply(eta);
            phis(n) = p.phi(t, x, Y(n), z);
            phiy(n) = detail::phi_dy(p, t, x, Y(n), z);
            Yh(n + 1) = Yh(n) + phis(n) * dt + z.dot(noise);
            x += p.mu(t, x, Y(n), z) * dt + noise;
        }
        if (stats) stats->simulate_seconds += detail::seconds_since(t_sim);

        double interior = 0.0;
        suffix[static_cast<std::size_t>(N) + 1] = 0.0;
        for (long n = N; n >= 1; --n) {
            const double diff = Y(n) - Yh(n);
            interior += diff * diff;
            suffix[static_cast<std::size_t>(n)] = suffix[static_cast<std::size_t>(n) + 1] + diff;
        }
        interior /= static_cast<double>(N);
        const double gx = p.g(X.row(N).transpose());
        const double tdiff = Y(N) - gx;
        const Vec zdiff = Z.row(N).transpose() - p.grad_g(X.row(N).transpose());
        loss.interior += invM1 * interior;
        loss.terminal += invM1 * tdiff * tdiff;
        loss.boundary += invM1 * zdiff.squaredNorm();

        // exact first-order weights dL_m / dY_k
        const double c = 2.0 / static_cast<double>(N);
        for (long k = 0; k <= N; ++k) {
            double wk = 0.0;
            if (k >= 1) wk += c * (Y(k) - Yh(k));
            if (k == 0) wk -= c * suffix[1];
            if (k <= N - 1) wk -= c * phiy(k) * dt * suffix[static_cast<std::size_t>(k) + 1];
            if (k == N) wk += 2.0 * tdiff;
            w(k) = wk * invM1;
        }

        const auto t_bwd = detail::Clock::now();
        Vec up(1);
        for (long k = 0; k <= N; ++k) {
            if (w(k) == 0.0) continue;
            const double t = dt * static_cast<double>(k);
            detail::ensure(work.in, 1, d + 1);
            work.in(0, 0) = t;
            work.in.row(0).tail(d) = X.row(k);
            forward_batch(model.net, work);
            up(0) = model.use_ansatz ? w(k) * (model.horizon - t) : w(k);
            backward_batch(model.net, work, up, &grads);
        }
        if (stats) stats->backward_seconds += detail::seconds_since(t_bwd);
    }
    return loss;
}

struct EpochRecord {
    long epoch = 0;
    LossBreakdown loss;
    double lr = 0.0;
};

struct TrainResult {
    NetModel model;
    std::vector<EpochRecord> history;
    long diverged_at = -1;  // epoch index, or -1
    std::string divergence_what;
    double wall_seconds = 0.0;
    EpochStats stats;
    long epochs_run = 0;
};

struct TrainOptions {
    std::vector<int> hidden = {128, 128, 128, 128};
    Activation activation = Activation::mish;
    bool use_ansatz = false;
    int threads = 1;
    std::function<void(const EpochRecord&, const NetModel&)> on_epoch;
};

// Full training run: initializes the network from seed substream 0, then for
// each epoch e draws the data from substream (1, e), accumulates gradients,
// and applies one Adam update at the scheduled rate. Divergence stops the
// loop and is reported in the result rather than thrown.
inline TrainResult train(const ProblemBundle& bundle, const ShotgunHyperparams& h,
                         const TrainOptions& opts = {}) {
    const PdeProblem& p = bundle.problem;
    require(h.epochs >= 0, "epochs must be non-negative");
    if (h.gradient_free)
        require(!p.depends_on_z,
                "gradient-free training cannot serve z-dependent coefficients");
    if (h.method == TrainMethod::sde_match)
        require(p.time_dependent, "the trajectory-matching baseline needs time dependence");
    if (!p.time_dependent)
        require(bundle.boundary.has_value(),
                "time-independent training needs boundary data");

    const RngStream root(h.seed);
    std::vector<int> sizes;
    sizes.push_back(p.d + (p.time_dependent ? 1 : 0));
    for (int hsz : opts.hidden) sizes.push_back(hsz);
    sizes.push_back(1);

    TrainResult res;
    res.model = wrap_model(init_network(sizes, opts.activation, root.derive(0)), p,
                           opts.use_ansatz);
    AdamState adam = make_adam(res.model.net);
    NetworkGradients grads = make_gradients(res.model.net);

    const auto t0 = detail::Clock::now();
    for (long e = 0; e < h.epochs; ++e) {
        const double lr = h.lr.rate(adam.step);
        const RngStream epoch_rng = root.derive(1, static_cast<std::uint64_t>(e));
        grads.set_zero();
        LossBreakdown loss;
        try {
            if (!p.time_dependent)
                loss = collocation_epoch_loss(res.model, p, *bundle.boundary, h, epoch_rng,
                                              grads, &res.stats, opts.threads);
            else if (h.method == TrainMethod::sde_match)
                loss = sde_matching_loss(res.model, p, h, epoch_rng, grads, &res.stats);
            else
                loss = shotgun_epoch_loss(res.model, p, h, epoch_rng, grads, &res.stats,
                                          opts.threads);
            if (!std::isfinite(loss.total()))
                throw divergence_error("loss became non-finite", e);
            adam_step(res.model.net, adam, grads, lr);
        } catch (const divergence_error& de) {
            res.diverged_at = e;
            res.divergence_what = de.what();
            break;
        }
        res.history.push_back(EpochRecord{e, loss, lr});
        res.epochs_run = e + 1;
        if (opts.on_epoch) opts.on_epoch(res.history.back(), res.model);
    }
    res.wall_seconds = detail::seconds_since(t0);
    return res;
}

}  // namespace sgpde

#include <catch_amalgamated.hpp>
#include <algorithm>
#include <cmath>
#include <vector>

#include <sgpde/model.hpp>
#include <sgpde/problems.hpp>
#include <sgpde/rng.hpp>
#include <sgpde/sampler.hpp>

using namespace sgpde;

TEST_CASE("offset time grid layout") {
    const TimeGrid g = coarse_time_grid(1.0, 10, 0.05);
    REQUIRE(g.points.size() == 12);
    REQUIRE(g.ell() == Catch::Approx(0.1));
    REQUIRE(g.steps() == 11);
    const std::vector<double> want = {0.0,  0.05, 0.15, 0.25, 0.35, 0.45,
                                      0.55, 0.65, 0.75, 0.85, 0.95, 1.0};
    for (std::size_t i = 0; i < want.size(); ++i)
        REQUIRE(g.points[i] == Catch::Approx(want[i]).margin(1e-15));

    // first and last intervals are the short ones
    REQUIRE(g.points[1] - g.points[0] == Catch::Approx(0.05));
    REQUIRE(g.points[11] - g.points[10] == Catch::Approx(0.05));
    for (std::size_t n = 1; n < 10; ++n)
        REQUIRE(g.points[n + 1] - g.points[n] == Catch::Approx(0.1));

    REQUIRE_THROWS_AS(coarse_time_grid(1.0, 10, 0.0), config_error);
    REQUIRE_THROWS_AS(coarse_time_grid(1.0, 10, 0.1), config_error);
    REQUIRE_THROWS_AS(coarse_time_grid(0.0, 10, 0.05), config_error);
    REQUIRE_THROWS_AS(coarse_time_grid(1.0, 0, 0.05), config_error);
}

TEST_CASE("offsets are uniform strictly inside the first cell") {
    RngStream g(13);
    const double ell = 0.25;
    double mn = 1e9, mx = -1e9, sum = 0.0;
    const int trials = 20000;
    for (int k = 0; k < trials; ++k) {
        const double u = sample_offset(g.derive(std::uint64_t(k)), ell);
        REQUIRE(u > 0.0);
        REQUIRE(u < ell);
        mn = std::min(mn, u);
        mx = std::max(mx, u);
        sum += u;
    }
    REQUIRE(sum / trials == Catch::Approx(ell / 2).epsilon(0.02));
    REQUIRE(mn < 0.01 * ell);
    REQUIRE(mx > 0.99 * ell);
}

TEST_CASE("antithetic perturbation draws have covariance dt I") {
    RngStream g(21);
    const long M = 8, d = 3;
    const double dt = 0.04;
    double sum = 0.0, sumsq = 0.0, cross = 0.0;
    const int trials = 6000;
    for (int k = 0; k < trials; ++k) {
        const RowMat eta = antithetic_normals(g.derive(std::uint64_t(k)), M, d, dt);
        REQUIRE(eta.rows() == M);
        REQUIRE(eta.cols() == d);
        sum += eta.sum();
        sumsq += eta.array().square().sum();
        cross += (eta.col(0).array() * eta.col(1).array()).sum();
    }
    const double n = double(trials) * M * d;
    REQUIRE(sum / n == Catch::Approx(0.0).margin(3e-3 * std::sqrt(dt)));
    REQUIRE(sumsq / n == Catch::Approx(dt).epsilon(0.02));
    REQUIRE(cross / (double(trials) * M) == Catch::Approx(0.0).margin(2e-3));
}

namespace {

// Exact linear field: u(t, x) = 2 + 3 t + sum_i c_i x_i. For a linear field
// the Euler recursion for Y is exact pathwise when phi = L[u] is plugged in:
// dY = phi dt + grad u . sigma dW reproduces u(t, X_t) with no Taylor error
// beyond the drift term, which vanishes for mu = 0 and linear u.
FnModel linear_field(const Vec& c) {
    FnModel f;
    f.d = int(c.size());
    f.timed = true;
    f.v = [c](double t, const Vec& x) { return 2.0 + 3.0 * t + c.dot(x); };
    f.grad = [c](double, const Vec&) { return c; };
    return f;
}

}  // namespace

TEST_CASE("coupled recursion is exact for a linear field") {
    // mu = 0, sigma = sqrt(2) I, u linear => phi must equal d_t u = 3.
    const int d = 4;
    Vec c(d);
    c << 0.5, -1.0, 2.0, 0.25;
    PdeProblem p;
    p.id = "toy";
    p.d = d;
    p.T = 1.0;
    p.mu = [d](double, const Vec&, double, const Vec&) { return Vec::Zero(d).eval(); };
    p.sigma = [](double, const Vec&, double, const Vec&) {
        return SigmaAction::scalar(std::sqrt(2.0));
    };
    p.phi = [](double, const Vec&, double, const Vec&) { return 3.0; };
    p.g = [c](const Vec& x) { return 2.0 + 3.0 + c.dot(x); };
    p.x0 = Vec::Zero(d);
    p.depends_on_z = false;
    p.time_dependent = true;

    const FnModel f = linear_field(c);
    const TimeGrid grid = coarse_time_grid(1.0, 10, 0.03);
    const TrajectoryBatch tb = simulate_trajectory(p, f, grid, RngStream(5).derive(0));
    REQUIRE(tb.Y(0) == Catch::Approx(2.0));
    for (long n = 0; n <= grid.steps(); ++n) {
        const double want = f.v(grid.points[std::size_t(n)], tb.X.row(n).transpose());
        REQUIRE(tb.Y(n) == Catch::Approx(want).margin(1e-12));
        REQUIRE((tb.Z.row(n).transpose() - c).cwiseAbs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("forward increments have the diffusion's covariance") {
    // X_{n+1} - X_n ~ N(0, 2 dt I) for sigma = sqrt(2) I, mu = 0.
    const ProblemBundle b = allen_cahn(3, 1.0);
    FnModel f;
    f.d = 3;
    f.v = [](double, const Vec&) { return 0.1; };
    f.grad = [](double, const Vec&) { return Vec::Zero(3).eval(); };
    const TimeGrid grid = coarse_time_grid(1.0, 5, 0.07);
    RngStream g(31);
    double sumsq = 0.0;
    long count = 0;
    for (int m = 0; m < 3000; ++m) {
        const TrajectoryBatch tb =
            simulate_trajectory(b.problem, f, grid, g.derive(std::uint64_t(m)), true);
        for (long n = 0; n + 1 <= grid.steps(); ++n) {
            const double dt = grid.points[std::size_t(n) + 1] - grid.points[std::size_t(n)];
            sumsq += (tb.X.row(n + 1) - tb.X.row(n)).squaredNorm() / (2.0 * dt);
            count += 3;
        }
    }
    REQUIRE(sumsq / double(count) == Catch::Approx(1.0).epsilon(0.02));
}

TEST_CASE("gradient-free mode reads the field at every node and skips gradients") {
    const ProblemBundle b = allen_cahn(2, 1.0);
    FnModel f;
    f.d = 2;
    f.v = [](double t, const Vec& x) { return t + x.squaredNorm(); };
    f.grad = [](double, const Vec&) -> Vec { throw std::logic_error("gradient requested"); };
    const TimeGrid grid = coarse_time_grid(1.0, 6, 0.02);
    const TrajectoryBatch tb = simulate_trajectory(b.problem, f, grid, RngStream(8), true);
    REQUIRE(tb.Z.size() == 0);
    for (long n = 0; n <= grid.steps(); ++n)
        REQUIRE(tb.Y(n) == Catch::Approx(grid.points[std::size_t(n)] +
                                         tb.X.row(n).squaredNorm()));
    REQUIRE_THROWS_AS(
        simulate_trajectory(bsb(2, 1.0, 0.4, 0.05).problem, f, grid, RngStream(8), true),
        config_error);
}

TEST_CASE("multiplicative diffusion keeps positive coordinates positive") {
    const ProblemBundle b = bsb(1, 1.0, 0.4, 0.05);
    FnModel f;
    f.d = 1;
    f.v = [&](double t, const Vec& x) { return b.exact.value(t, x); };
    f.grad = [&](double t, const Vec& x) {
        return (2.0 * std::exp((0.05 + 0.16) * (1.0 - t)) * x).eval();
    };
    const TimeGrid grid = coarse_time_grid(1.0, 20, 0.01);
    RngStream g(77);
    for (int m = 0; m < 200; ++m) {
        const TrajectoryBatch tb =
            simulate_trajectory(b.problem, f, grid, g.derive(std::uint64_t(m)));
        REQUIRE(tb.X.minCoeff() > 0.0);
    }
}

TEST_CASE("trajectories replay bitwise from the same stream") {
    const ProblemBundle b = hjb_lqg(5, 1.0);
    NetworkParams net = init_network({6, 10, 1}, Activation::mish, RngStream(4));
    const NetModel m = wrap_model(std::move(net), b.problem, false);
    const TimeGrid grid = coarse_time_grid(1.0, 8, 0.04);
    const TrajectoryBatch a = simulate_trajectory(b.problem, m, grid, RngStream(55).derive(3));
    const TrajectoryBatch c = simulate_trajectory(b.problem, m, grid, RngStream(55).derive(3));
    const TrajectoryBatch e = simulate_trajectory(b.problem, m, grid, RngStream(55).derive(4));
    REQUIRE((a.X - c.X).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((a.Y - c.Y).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((a.Z - c.Z).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE((a.X - e.X).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("divergent fields report the failing node") {
    PdeProblem p;
    p.d = 1;
    p.T = 1.0;
    p.mu = [](double, const Vec&, double, const Vec&) { return Vec::Zero(1).eval(); };
    p.sigma = [](double, const Vec&, double, const Vec&) { return SigmaAction::scalar(1.0); };
    p.phi = [](double t, const Vec&, double, const Vec&) {
        return t > 0.4 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
    };
    p.g = [](const Vec&) { return 0.0; };
    p.x0 = Vec::Zero(1);
    p.time_dependent = true;
    FnModel f;
    f.d = 1;
    f.v = [](double, const Vec&) { return 0.0; };
    f.grad = [](double, const Vec&) { return Vec::Zero(1).eval(); };
    const TimeGrid grid = coarse_time_grid(1.0, 4, 0.1);  // nodes 0,.1,.35,.6,.85,1
    try {
        simulate_trajectory(p, f, grid, RngStream(1));
        FAIL("expected divergence");
    } catch (const divergence_error& e) {
        REQUIRE(e.step >= 3);  // first node whose preceding step used t > 0.4
    }
}

TEST_CASE("state-only simulation follows the same path layout") {
    const ProblemBundle b = hjb_lqg(4, 1.0);
    FnModel f;
    f.d = 4;
    f.v = [](double, const Vec&) { return 0.0; };
    f.grad = [](double, const Vec&) { return Vec::Zero(4).eval(); };
    const std::vector<double> times = {0.0, 0.2, 0.5, 1.0};
    const RowMat X = simulate_states(b.problem, f, times, RngStream(3).derive(1));
    REQUIRE(X.rows() == 4);
    REQUIRE(X.cols() == 4);
    const RowMat X2 = simulate_states(b.problem, f, times, RngStream(3).derive(1));
    REQUIRE((X - X2).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE_THROWS_AS(simulate_states(b.problem, f, {0.0, 0.5, 0.5}, RngStream(1)),
                      config_error);
}

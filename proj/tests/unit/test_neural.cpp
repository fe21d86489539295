#include <catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include <sgpde/neural.hpp>
#include <sgpde/rng.hpp>

using namespace sgpde;

namespace {

NetworkParams random_net(const std::vector<int>& sizes, Activation act,
                         std::uint64_t seed) {
    return init_network(sizes, act, RngStream(seed));
}

std::vector<double*> param_pointers(NetworkParams& net) {
    std::vector<double*> out;
    for (auto& l : net.layers) {
        for (long i = 0; i < l.W.size(); ++i) out.push_back(l.W.data() + i);
        for (long i = 0; i < l.b.size(); ++i) out.push_back(l.b.data() + i);
    }
    return out;
}

std::vector<double> grad_values(const NetworkGradients& g) {
    std::vector<double> out;
    for (const auto& l : g.layers) {
        for (long i = 0; i < l.W.size(); ++i) out.push_back(*(l.W.data() + i));
        for (long i = 0; i < l.b.size(); ++i) out.push_back(*(l.b.data() + i));
    }
    return out;
}

}  // namespace

TEST_CASE("hand-computed forward pass on a tiny tanh network") {
    NetworkParams net;
    net.hidden_activation = Activation::tanh;
    DenseLayer l0;
    l0.W = RowMat(2, 1);
    l0.W << 0.5, -1.25;
    l0.b = Vec(2);
    l0.b << 0.1, 0.2;
    DenseLayer l1;
    l1.W = RowMat(1, 2);
    l1.W << 2.0, -0.5;
    l1.b = Vec(1);
    l1.b << 0.05;
    net.layers = {l0, l1};

    const double x = 0.8;
    const double h0 = std::tanh(0.5 * x + 0.1);
    const double h1 = std::tanh(-1.25 * x + 0.2);
    const double want = 2.0 * h0 - 0.5 * h1 + 0.05;
    REQUIRE(forward(net, Vec::Constant(1, x)) == Catch::Approx(want).epsilon(1e-15));
}

TEST_CASE("batched forward agrees with single-row calls") {
    for (Activation act : {Activation::sine, Activation::mish}) {
        NetworkParams net = random_net({3, 16, 16, 1}, act, 11);
        RngStream g(77);
        BatchWork work;
        work.in.resize(9, 3);
        for (long i = 0; i < work.in.size(); ++i) *(work.in.data() + i) = g.normal();
        forward_batch(net, work);
        for (long i = 0; i < 9; ++i) {
            const Vec x = work.in.row(i).transpose();
            REQUIRE(work.out(i) == Catch::Approx(forward(net, x)).epsilon(1e-13).margin(1e-15));
        }
    }
}

TEST_CASE("parameter gradients match finite differences") {
    NetworkParams net = random_net({2, 8, 8, 1}, Activation::mish, 3);
    RngStream g(5);
    RowMat inputs(5, 2);
    for (long i = 0; i < inputs.size(); ++i) *(inputs.data() + i) = g.normal();
    Vec upstream(5);
    for (long i = 0; i < 5; ++i) upstream(i) = g.normal();

    NetworkGradients grads = make_gradients(net);
    BatchWork work;
    work.in = inputs;
    forward_batch(net, work);
    backward_batch(net, work, upstream, &grads);
    const std::vector<double> analytic = grad_values(grads);

    auto loss = [&]() {
        BatchWork w;
        w.in = inputs;
        forward_batch(net, w);
        return upstream.dot(w.out);
    };
    const std::vector<double*> params = param_pointers(net);
    REQUIRE(params.size() == analytic.size());
    const double h = 1e-6;
    for (std::size_t k = 0; k < params.size(); k += 7) {  // spot-check every 7th
        const double save = *params[k];
        *params[k] = save + h;
        const double up = loss();
        *params[k] = save - h;
        const double dn = loss();
        *params[k] = save;
        REQUIRE(analytic[k] == Catch::Approx((up - dn) / (2 * h)).margin(2e-6).epsilon(2e-5));
    }
}

TEST_CASE("input gradients match finite differences") {
    NetworkParams net = random_net({3, 12, 1}, Activation::sine, 9);
    RngStream g(1);
    Vec x(3);
    for (int i = 0; i < 3; ++i) x(i) = g.normal();
    const Vec din = input_gradient(net, x);
    for (int i = 0; i < 3; ++i) {
        const double h = 1e-6;
        Vec xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        const double fd = (forward(net, xp) - forward(net, xm)) / (2 * h);
        REQUIRE(din(i) == Catch::Approx(fd).margin(1e-8).epsilon(1e-7));
    }
}

TEST_CASE("backward accumulates per-row input gradients") {
    NetworkParams net = random_net({2, 6, 1}, Activation::tanh, 21);
    BatchWork work;
    work.in.resize(4, 2);
    RngStream g(4);
    for (long i = 0; i < work.in.size(); ++i) *(work.in.data() + i) = g.normal();
    forward_batch(net, work);
    Vec up(4);
    up << 1.0, -2.0, 0.5, 3.0;
    RowMat dins;
    backward_batch(net, work, up, nullptr, &dins);
    for (long r = 0; r < 4; ++r) {
        const Vec single = input_gradient(net, work.in.row(r).transpose());
        for (long c = 0; c < 2; ++c)
            REQUIRE(dins(r, c) ==
                    Catch::Approx(up(r) * single(c)).margin(1e-13).epsilon(1e-11));
    }
}

TEST_CASE("initialization is bounded, zero-bias, and reproducible") {
    const std::vector<int> sizes = {4, 32, 32, 1};
    NetworkParams a = random_net(sizes, Activation::mish, 123);
    NetworkParams b = random_net(sizes, Activation::mish, 123);
    NetworkParams c = random_net(sizes, Activation::mish, 124);
    REQUIRE(a.layers.size() == 3);
    bool any_diff = false;
    for (std::size_t k = 0; k < a.layers.size(); ++k) {
        const double lim =
            std::sqrt(6.0 / double(a.layers[k].W.rows() + a.layers[k].W.cols()));
        REQUIRE(a.layers[k].W.cwiseAbs().maxCoeff() <= lim);
        REQUIRE(a.layers[k].W.cwiseAbs().maxCoeff() > 0.0);
        REQUIRE(a.layers[k].b.cwiseAbs().maxCoeff() == 0.0);
        REQUIRE((a.layers[k].W - b.layers[k].W).cwiseAbs().maxCoeff() == 0.0);
        if ((a.layers[k].W - c.layers[k].W).cwiseAbs().maxCoeff() > 0) any_diff = true;
    }
    REQUIRE(any_diff);
    REQUIRE_THROWS_AS(init_network({3}, Activation::mish, RngStream(1)), config_error);
    REQUIRE_THROWS_AS(init_network({3, 0, 1}, Activation::mish, RngStream(1)),
                      config_error);
}

TEST_CASE("adam follows the hand recursion") {
    // one weight, one bias: theta(t+1) = theta - lr * mhat / (sqrt(vhat) + eps)
    NetworkParams net;
    net.hidden_activation = Activation::identity;
    DenseLayer l;
    l.W = RowMat::Constant(1, 1, 0.5);
    l.b = Vec::Constant(1, -0.25);
    net.layers = {l};
    AdamState st = make_adam(net);
    NetworkGradients g = make_gradients(net);

    double w = 0.5, b = -0.25, mw = 0, vw = 0, mb = 0, vb = 0;
    const double lr = 0.01;
    const std::vector<std::pair<double, double>> grads = {
        {0.3, -0.1}, {-0.2, 0.4}, {1.0, 1.0}};
    for (std::size_t t = 0; t < grads.size(); ++t) {
        g.layers[0].W(0, 0) = grads[t].first;
        g.layers[0].b(0) = grads[t].second;
        adam_step(net, st, g, lr);

        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        mw = b1 * mw + (1 - b1) * grads[t].first;
        vw = b2 * vw + (1 - b2) * grads[t].first * grads[t].first;
        mb = b1 * mb + (1 - b1) * grads[t].second;
        vb = b2 * vb + (1 - b2) * grads[t].second * grads[t].second;
        const double bc1 = 1 - std::pow(b1, double(t + 1));
        const double bc2 = 1 - std::pow(b2, double(t + 1));
        w -= lr * (mw / bc1) / (std::sqrt(vw / bc2) + eps);
        b -= lr * (mb / bc1) / (std::sqrt(vb / bc2) + eps);
        REQUIRE(net.layers[0].W(0, 0) == Catch::Approx(w).epsilon(1e-14));
        REQUIRE(net.layers[0].b(0) == Catch::Approx(b).epsilon(1e-14));
    }
    REQUIRE(st.step == 3);
}

TEST_CASE("adam rejects non-finite gradients") {
    NetworkParams net = random_net({1, 4, 1}, Activation::tanh, 1);
    AdamState st = make_adam(net);
    NetworkGradients g = make_gradients(net);
    g.layers[0].W(0, 0) = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(adam_step(net, st, g, 1e-3), divergence_error);
}

TEST_CASE("step-decay schedule") {
    LrSchedule s;
    s.initial = 1e-3;
    s.factor = 0.2;
    s.interval = 2500;
    REQUIRE(s.rate(0) == Catch::Approx(1e-3));
    REQUIRE(s.rate(2499) == Catch::Approx(1e-3));
    REQUIRE(s.rate(2500) == Catch::Approx(2e-4));
    REQUIRE(s.rate(5000) == Catch::Approx(4e-5));
    LrSchedule flat;
    REQUIRE(flat.rate(100000) == Catch::Approx(1e-3));
}

TEST_CASE("gradient containers zero, add, and detect non-finite entries") {
    NetworkParams net = random_net({2, 4, 1}, Activation::mish, 8);
    NetworkGradients a = make_gradients(net), b = make_gradients(net);
    a.layers[0].W(0, 0) = 2.0;
    b.layers[0].W(0, 0) = 3.5;
    a.add(b);
    REQUIRE(a.layers[0].W(0, 0) == 5.5);
    REQUIRE(a.all_finite());
    a.layers[1].b(0) = std::numeric_limits<double>::infinity();
    REQUIRE_FALSE(a.all_finite());
    a.set_zero();
    REQUIRE(a.all_finite());
    REQUIRE(a.layers[0].W.cwiseAbs().maxCoeff() == 0.0);
}

#pragma once

#include <cmath>
#include <cstdint>

#include "core.hpp"
#include "simd.hpp"

namespace sgpde {

// Tag values are part of the checkpoint format; do not renumber.
enum class Activation : std::uint8_t { sine = 0, tanh = 1, mish = 2, identity = 3 };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::sine: return "sine";
        case Activation::tanh: return "tanh";
        case Activation::mish: return "mish";
        case Activation::identity: return "identity";
    }
    return "?";
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "sine") return Activation::sine;
    if (s == "tanh") return Activation::tanh;
    if (s == "mish") return Activation::mish;
    if (s == "identity") return Activation::identity;
    throw config_error("unknown activation '" + s + "'");
}

namespace detail {

// mish(x) = x * tanh(log1p(exp(x))). With p = e^x the tanh collapses to the
// rational q / (q + 2), q = p^2 + 2p, so one exponential serves both the value
// and the derivative. Inputs are clamped at 40 where mish(x) = x to double
// precision; large negative x underflows gracefully through p -> 0.
inline void mish_pair(double x, double p, double& h, double& d) {
    if (x >= 40.0) {
        h = x;
        d = 1.0;
        return;
    }
    const double q = p * (p + 2.0);
    const double t = q / (q + 2.0);
    h = x * t;
    const double one_m_t2 = 4.0 * (q + 1.0) / ((q + 2.0) * (q + 2.0));
    d = t + x * one_m_t2 * (p / (1.0 + p));
}

inline void tanh_pair(double x, double e2, double& h, double& d) {
    // e2 = exp(-2|x|); accurate for both signs without cancellation
    const double t = (1.0 - e2) / (1.0 + e2);
    h = x >= 0.0 ? t : -t;
    d = 1.0 - h * h;
}

// Second derivative of mish at pre-activation x with p = e^x. In the same
// rational parameterization as mish_pair: with t = tanh(softplus(x)) and
// s = sigmoid(x),  mish'' = (1 - t^2) (2s + x s (1 - s) - 2 x t s^2).
inline double mish_second(double x, double p) {
    if (x >= 40.0) return 0.0;
    const double q = p * (p + 2.0);
    const double t = q / (q + 2.0);
    const double one_m_t2 = 4.0 * (q + 1.0) / ((q + 2.0) * (q + 2.0));
    const double s = p / (1.0 + p);
    return one_m_t2 * (2.0 * s + x * s * (1.0 - s) - 2.0 * x * t * s * s);
}

}  // namespace detail

inline double activation_value(Activation a, double x) {
    switch (a) {
        case Activation::sine: return std::sin(x);
        case Activation::tanh: return std::tanh(x);
        case Activation::mish: {
            double h, d;
            detail::mish_pair(x, x >= 40.0 ? 0.0 : std::exp(x), h, d);
            return h;
        }
        case Activation::identity: return x;
    }
    return x;
}

inline double activation_derivative(Activation a, double x) {
    switch (a) {
        case Activation::sine: return std::cos(x);
        case Activation::tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Activation::mish: {
            double h, d;
            detail::mish_pair(x, x >= 40.0 ? 0.0 : std::exp(x), h, d);
            return d;
        }
        case Activation::identity: return 1.0;
    }
    return 1.0;
}

// Batched value + derivative on a contiguous buffer of pre-activations.
// `scratch` must hold at least n doubles; h may alias x.
inline void activation_batch(Activation a, const double* x, double* h, double* d,
                             double* scratch, std::size_t n) {
    switch (a) {
        case Activation::sine:
            simd::vcos(x, d, n);
            simd::vsin(x, h, n);
            return;
        case Activation::tanh: {
            for (std::size_t i = 0; i < n; ++i) scratch[i] = -2.0 * std::abs(x[i]);
            simd::vexp(scratch, scratch, n);
            for (std::size_t i = 0; i < n; ++i) detail::tanh_pair(x[i], scratch[i], h[i], d[i]);
            return;
        }
        case Activation::mish: {
            for (std::size_t i = 0; i < n; ++i) scratch[i] = x[i] >= 40.0 ? 0.0 : x[i];
            simd::vexp(scratch, scratch, n);
            for (std::size_t i = 0; i < n; ++i) detail::mish_pair(x[i], scratch[i], h[i], d[i]);
            return;
        }
        case Activation::identity:
            for (std::size_t i = 0; i < n; ++i) {
                h[i] = x[i];
                d[i] = 1.0;
            }
            return;
    }
}

}  // namespace sgpde

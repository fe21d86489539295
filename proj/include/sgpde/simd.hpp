#pragma once

#include <cmath>
#include <cstddef>

#if defined(__AVX512F__) && defined(__GLIBC__) && defined(__x86_64__)
#define SGPDE_HAVE_MVEC 1
#include <immintrin.h>
extern "C" {
__m512d _ZGVeN8v_exp(__m512d);
__m512d _ZGVeN8v_sin(__m512d);
__m512d _ZGVeN8v_cos(__m512d);
__m512d _ZGVeN8v_log(__m512d);
}
#endif

namespace sgpde::simd {

// Elementwise transcendentals over contiguous buffers. The vector and scalar
// paths agree to a few ulp; every result is deterministic for a given binary.

inline void vexp(const double* x, double* out, std::size_t n) {
    std::size_t i = 0;
#ifdef SGPDE_HAVE_MVEC
    for (; i + 8 <= n; i += 8)
        _mm512_storeu_pd(out + i, _ZGVeN8v_exp(_mm512_loadu_pd(x + i)));
#endif
    for (std::size_t r = n - i; r != 0; --r, ++i) out[i] = std::exp(x[i]);
}

inline void vlog(const double* x, double* out, std::size_t n) {
    std::size_t i = 0;
#ifdef SGPDE_HAVE_MVEC
    for (; i + 8 <= n; i += 8)
        _mm512_storeu_pd(out + i, _ZGVeN8v_log(_mm512_loadu_pd(x + i)));
#endif
    for (std::size_t r = n - i; r != 0; --r, ++i) out[i] = std::log(x[i]);
}

inline void vsin(const double* x, double* out, std::size_t n) {
    std::size_t i = 0;
#ifdef SGPDE_HAVE_MVEC
    for (; i + 8 <= n; i += 8)
        _mm512_storeu_pd(out + i, _ZGVeN8v_sin(_mm512_loadu_pd(x + i)));
#endif
    for (std::size_t r = n - i; r != 0; --r, ++i) out[i] = std::sin(x[i]);
}

inline void vcos(const double* x, double* out, std::size_t n) {
    std::size_t i = 0;
#ifdef SGPDE_HAVE_MVEC
    for (; i + 8 <= n; i += 8)
        _mm512_storeu_pd(out + i, _ZGVeN8v_cos(_mm512_loadu_pd(x + i)));
#endif
    for (std::size_t r = n - i; r != 0; --r, ++i) out[i] = std::cos(x[i]);
}

}  // namespace sgpde::simd

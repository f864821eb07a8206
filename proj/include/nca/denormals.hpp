#pragma once

#if defined(__SSE__) || defined(__x86_64__)
#include <pmmintrin.h>
#include <xmmintrin.h>
#endif

namespace nca {

// BPTT through a near-identity CA shrinks float gradients below the denormal
// threshold, where hardware arithmetic is orders of magnitude slower. Flush
// them to zero; call once at the top of main in every binary so results stay
// consistent across tools.
inline void flush_denormals() {
#if defined(__SSE__) || defined(__x86_64__)
  _MM_SET_FLUSH_ZERO_MODE(_MM_FLUSH_ZERO_ON);
  _MM_SET_DENORMALS_ZERO_MODE(_MM_DENORMALS_ZERO_ON);
#endif
}

}  // namespace nca

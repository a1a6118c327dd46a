#pragma once

// Numeric precision is a build-time choice. The default library is 32-bit;
// verification builds compile the same sources with EVLOOP_DOUBLE=1. Both
// variants live in distinct inline namespaces so they can be linked into one
// binary without symbol clashes.
#ifndef EVLOOP_DOUBLE
#define EVLOOP_DOUBLE 0
#endif

#if EVLOOP_DOUBLE
#define EVLOOP_ABI f64
#else
#define EVLOOP_ABI f32
#endif

#define EVLOOP_NAMESPACE_BEGIN \
  namespace evloop {           \
  inline namespace EVLOOP_ABI {
#define EVLOOP_NAMESPACE_END \
  }                          \
  }

EVLOOP_NAMESPACE_BEGIN

#if EVLOOP_DOUBLE
using Real = double;
#else
using Real = float;
#endif

EVLOOP_NAMESPACE_END

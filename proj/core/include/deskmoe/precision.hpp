// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// The numeric core is compiled twice: once with 32-bit reals (the production
// library) and once with 64-bit reals for gradient checking. Each build lives
// in its own inline namespace so both can be linked into one binary.
#if defined(DESKMOE_REAL_DOUBLE)
#define DESKMOE_PRECISION_NS f64
#else
#define DESKMOE_PRECISION_NS f32
#endif

#define DESKMOE_NUMERIC_BEGIN \
  namespace deskmoe {         \
  inline namespace DESKMOE_PRECISION_NS {
#define DESKMOE_NUMERIC_END \
  }                         \
  }

DESKMOE_NUMERIC_BEGIN

#if defined(DESKMOE_REAL_DOUBLE)
using Real = double;
inline constexpr bool kDoublePrecision = true;
#else
using Real = float;
inline constexpr bool kDoublePrecision = false;
#endif

DESKMOE_NUMERIC_END

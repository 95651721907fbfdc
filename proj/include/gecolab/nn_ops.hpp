// Copyright (c) 2026 gecolab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gecolab/tape.hpp"

namespace gecolab::ad {

// x viewed as [M, Cin] times W [Cin, Cout] plus b [Cout]; keeps leading dims.
Var linear(Var x, Var w, Var b);
Var linear_nobias(Var x, Var w);

// x [N,Cin,H,W], w [Cout,Cin,kh,kw], b [Cout]. Same-shape output requires
// pad = k/2 with odd k and stride 1; stride 2 halves spatial dims.
Var conv2d(Var x, Var w, Var b, int stride, int pad);

Var upsample_nearest2(Var x);   // [N,C,H,W] -> [N,C,2H,2W]
Var avgpool2(Var x);            // [N,C,H,W] -> [N,C,H/2,W/2]; H,W even

Var group_norm(Var x, int groups, Var gamma, Var beta, double eps = 1e-5);

Var softmax_lastdim(Var x);

Var bmm(Var a, Var b);     // [B,M,K] x [B,K,N] -> [B,M,N]
Var bmm_bt(Var a, Var b);  // [B,M,K] x [B,N,K]^T -> [B,M,N]

// Layout bridges for cross-view attention: tokens are views at a fixed pixel.
Var vchw_to_pvc(Var x);                  // [V,C,H,W] -> [H*W,V,C]
Var pvc_to_vchw(Var x, int h, int w);    // [H*W,V,C] -> [V,C,H,W]

Var normalize_rows(Var x, double eps = 1e-12);          // [N,K] row unit norm
Var channel_unit_normalize(Var x, double eps = 1e-8);   // [N,C,H,W] over C

} // namespace gecolab::ad

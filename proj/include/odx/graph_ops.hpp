#pragma once

#include <cstddef>
#include <vector>

#include "odx/autodiff.hpp"

namespace odx {

enum class PoolMode { max, average };

namespace ad {

// Graph tensors are node-major: (batch..., nodes, channels). All leading axes
// are treated as one batch axis.

// Reorders nodes into plan slots; slot_to_node[s] < 0 yields a zero dummy row.
Var gather_slots(Var x, const std::vector<std::ptrdiff_t>& slot_to_node);

// Cheby-Net filtering with the activation inside the channel sum:
//   out(b,v,q) = sum_c relu( sum_s T_s(Lhat) x(b,:,c) [v] * G(q,c,s) + bias(v,q) )
// `filters` is (Q, C, S), or (Q, 1, S) to share one filter across channels.
Var chebyshev_filter_sum(Var x, const DenseTensor& lhat, Var filters, Var bias);

// Linear feature-mixing graph convolution used inside recurrent gates:
//   out(b,v,f) = sum_{c,s} T_s(Lhat) x(b,:,c) [v] * G(f,c,s) + bias(v,f)
Var chebyshev_conv(Var x, const DenseTensor& lhat, Var filters, Var bias);

// Pools consecutive runs of `pool` nodes. Dummy nodes never win a max and are
// excluded from a mean; an all-dummy run yields 0.
Var graph_pool(Var x, std::size_t pool, const std::vector<bool>& dummy, PoolMode mode);

}  // namespace ad
}  // namespace odx

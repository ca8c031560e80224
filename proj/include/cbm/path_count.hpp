#pragma once

#include <map>

namespace cbm::nn {

// Expected number of distinct backward paths through the unrolled
// (layer x step) grid, starting at the top layer's output of the last step
// and keyed by path length (number of cell-to-cell hops). Moves available to
// a backward walker:
//   from an output port:  down to the layer below via the representation
//                         branch (always) or via the gated temporal input
//                         (survives with probability 1 - td_rate), or left
//                         into the same layer's previous memory;
//   from a memory port:   left along the memory chain (always), or down via
//                         the gated temporal input (1 - td_rate).
// Gate draws are independent per (layer, step) and a walk never revisits a
// cell, so the expectation is a polynomial in (1 - td_rate) computed exactly
// by dynamic programming.
std::map<int, double> expected_backprop_paths(int num_layers, int num_steps, double td_rate);

}  // namespace cbm::nn

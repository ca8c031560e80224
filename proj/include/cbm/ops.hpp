#pragma once

#include "cbm/tensor.hpp"

namespace cbm::ad {

enum class Gate { Pass, Block };

// Elementwise
Tensor relu(Tensor x);
Tensor sigmoid(Tensor x);
Tensor add(Tensor a, Tensor b);
Tensor mul(Tensor a, Tensor b);
Tensor scale(Tensor x, double c);

// Shape
Tensor flatten(Tensor x);
Tensor concat_channels(Tensor a, Tensor b);

// Linear maps
// x: [C_in,H,W], kernel: [C_out,C_in,kh,kw] (odd kh/kw), bias: [C_out]
Tensor conv2d(Tensor x, Tensor kernel, Tensor bias, int padding);
// x: [D_in], weight: [D_out,D_in], bias: [D_out]
Tensor affine(Tensor x, Tensor weight, Tensor bias);

// Reductions / losses
Tensor sum(Tensor x);
Tensor mse(Tensor pred, Tensor target);
// logits: [K]; fused stable softmax + cross-entropy against an integer label
Tensor softmax_xent(Tensor logits, int label);

// Identity in the forward pass; the backward pass propagates gradient to x
// only when gate == Pass. A blocked edge behaves exactly like a detached
// constant input.
Tensor gated_edge(Tensor x, Gate gate);

}  // namespace cbm::ad

#pragma once

#include "covidseg/core/graph.hpp"

namespace covidseg {

// Generalized Dice loss over a (N, C, H, W) batch, pooling all pixels n:
//   w_c  = 1 / ((sum_n r_cn)^2 + eps)
//   GDL  = 1 - (2 * sum_c w_c sum_n r_cn p_cn + eps) / (sum_c w_c sum_n (r_cn + p_cn) + eps)
// targets is one-hot and constant. The result lies in [0, 1] and is exactly 0 when
// probs equals targets (up to rounding).
Var generalized_dice_loss(Var probs, const Tensor& targets, double eps = 1e-6);

}  // namespace covidseg

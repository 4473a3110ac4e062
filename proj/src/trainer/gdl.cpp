#include "covidseg/trainer/gdl.hpp"

#include <stdexcept>
#include <vector>

namespace covidseg {

Var generalized_dice_loss(Var probs, const Tensor& targets, double eps) {
  const Tensor& p = probs.value();
  if (p.shape() != targets.shape() || p.rank() != 4) {
    throw std::invalid_argument("generalized_dice_loss: probs " + shape_string(p.shape()) + " vs targets " +
                                shape_string(targets.shape()));
  }
  const std::size_t n = p.dim(0), classes = p.dim(1), plane = p.dim(2) * p.dim(3);
  std::vector<double> ref_sum(classes, 0.0), inter(classes, 0.0), pred_sum(classes, 0.0);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t c = 0; c < classes; ++c) {
      const std::size_t base = (b * classes + c) * plane;
      double rs = 0.0, is = 0.0, ps = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        rs += targets[base + i];
        is += targets[base + i] * p[base + i];
        ps += p[base + i];
      }
      ref_sum[c] += rs;
      inter[c] += is;
      pred_sum[c] += ps;
    }
  }
  std::vector<double> weight(classes);
  double numer = 0.0, denom = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    weight[c] = 1.0 / (ref_sum[c] * ref_sum[c] + eps);
    numer += weight[c] * inter[c];
    denom += weight[c] * (ref_sum[c] + pred_sum[c]);
  }
  const double top = 2.0 * numer + eps;
  const double bottom = denom + eps;
  const double loss = 1.0 - top / bottom;

  return probs.graph().record(
      Tensor::scalar(loss), {probs},
      [targets, weight, top, bottom, n, classes, plane](std::span<const double> gout, GradSlots grads) {
        auto& g = *grads[0];
        const double scale = -gout[0] / (bottom * bottom);
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t c = 0; c < classes; ++c) {
            const std::size_t base = (b * classes + c) * plane;
            const double wc = weight[c];
            for (std::size_t i = 0; i < plane; ++i) {
              g[base + i] += scale * wc * (2.0 * targets[base + i] * bottom - top);
            }
          }
      });
}

}  // namespace covidseg

#include "covidseg/cli/gradcheck_suite.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

#include "covidseg/core/ops.hpp"
#include "covidseg/core/rng.hpp"
#include "covidseg/segnet/layers.hpp"
#include "covidseg/segnet/model.hpp"
#include "covidseg/trainer/gdl.hpp"

namespace covidseg {

bool GradSuiteResult::passed() const {
  return std::all_of(reports.begin(), reports.end(), [&](const GradCheckReport& r) { return r.passed(tolerance); });
}

void to_json(nlohmann::json& j, const GradSuiteResult& r) {
  nlohmann::json ops = nlohmann::json::array();
  for (const auto& rep : r.reports) {
    nlohmann::json inputs = nlohmann::json::array();
    for (const auto& e : rep.entries) {
      nlohmann::json in{{"name", e.name}, {"probed", e.probed}, {"max_rel_error", e.max_rel_error}};
      if (!e.failure.empty()) in["failure"] = e.failure;
      inputs.push_back(std::move(in));
    }
    ops.push_back({{"op", rep.op},
                   {"max_rel_error", rep.max_rel_error()},
                   {"passed", rep.passed(r.tolerance)},
                   {"inputs", std::move(inputs)}});
  }
  j = nlohmann::json{{"tolerance", r.tolerance}, {"passed", r.passed()}, {"ops", std::move(ops)}};
}

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double sd = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal(0.0, sd);
  return t;
}

// Values at least 0.05 away from zero, so relu kinks stay out of the stencil.
Tensor off_kink_tensor(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) {
    const double mag = rng.uniform(0.05, 1.5);
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

// A shuffled arithmetic sequence: every element distinct by 0.01, so max-pool
// winners do not change under the probe step.
Tensor distinct_tensor(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  const double mid = 0.5 * static_cast<double>(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = (static_cast<double>(order[i]) - mid) * 0.01;
  return t;
}

Tensor softmax_of(const Tensor& logits) {
  Graph g;
  return softmax_channels(g.view(logits)).value();
}

}  // namespace

GradSuiteResult run_gradcheck_suite(const GradSuiteOptions& options) {
  GradSuiteResult result;
  result.tolerance = options.tolerance;
  Rng rng(options.seed);
  auto check = [&](std::string op, std::vector<GradCheckInput> inputs, auto body, GradCheckOptions go = {}) {
    // Non-scalar outputs are read out through fixed random weights; a plain sum
    // would hide errors in ops like softmax.
    Tensor weights;
    bool have_weights = false;
    LossBuilder build = [&, body](Graph& g, std::span<const Var> in) {
      Var out = body(g, in);
      if (out.value().size() == 1) return out;
      if (!have_weights) {
        weights = random_tensor(rng, out.shape());
        have_weights = true;
      }
      return weighted_sum(out, weights);
    };
    result.reports.push_back(grad_check(std::move(op), build, std::move(inputs), go));
  };

  auto conv_case = [&](const std::string& name, Shape x, Shape k, Conv2dOptions co) {
    const std::size_t cout = k[0];
    check(name,
          {{"input", random_tensor(rng, x)}, {"kernel", random_tensor(rng, k, 0.5)}, {"bias", random_tensor(rng, {cout})}},
          [co](Graph&, std::span<const Var> in) { return conv2d(in[0], in[1], in[2], co); });
  };
  conv_case("conv2d", {2, 3, 6, 6}, {4, 3, 3, 3}, {.stride = 1, .padding = 1, .dilation = 1});
  conv_case("conv2d_valid", {1, 2, 7, 5}, {3, 2, 3, 2}, {.stride = 1, .padding = 0, .dilation = 1});
  conv_case("conv2d_stride2", {1, 2, 7, 7}, {3, 2, 3, 3}, {.stride = 2, .padding = 1, .dilation = 1});
  conv_case("conv2d_dilation2", {2, 2, 8, 8}, {3, 2, 3, 3}, {.stride = 1, .padding = 2, .dilation = 2});
  conv_case("conv2d_dilation4", {1, 2, 10, 10}, {3, 2, 3, 3}, {.stride = 1, .padding = 4, .dilation = 4});
  conv_case("conv2d_1x1", {2, 5, 4, 4}, {3, 5, 1, 1}, {});

  check("max_pool2", {{"input", distinct_tensor(rng, {2, 3, 4, 6})}},
        [](Graph&, std::span<const Var> in) { return max_pool2(in[0]); });
  check("avg_pool2", {{"input", random_tensor(rng, {2, 3, 4, 6})}},
        [](Graph&, std::span<const Var> in) { return avg_pool2(in[0]); });
  check("mixed_pool", {{"input", distinct_tensor(rng, {2, 3, 4, 4})}, {"alpha_raw", Tensor::scalar(0.3)}},
        [](Graph&, std::span<const Var> in) { return mixed_pool(in[0], in[1]); });
  check("upsample_nearest2", {{"input", random_tensor(rng, {2, 3, 3, 4})}},
        [](Graph&, std::span<const Var> in) { return upsample_nearest2(in[0]); });
  check("concat_channels",
        {{"a", random_tensor(rng, {2, 1, 3, 3})}, {"b", random_tensor(rng, {2, 3, 3, 3})}, {"c", random_tensor(rng, {2, 2, 3, 3})}},
        [](Graph&, std::span<const Var> in) { return concat_channels(in); });
  check("relu", {{"input", off_kink_tensor(rng, {2, 3, 4, 4})}},
        [](Graph&, std::span<const Var> in) { return relu(in[0]); });
  check("softmax_channels", {{"input", random_tensor(rng, {2, 4, 3, 3}, 2.0)}},
        [](Graph&, std::span<const Var> in) { return softmax_channels(in[0]); });
  check("add", {{"a", random_tensor(rng, {2, 3})}, {"b", random_tensor(rng, {2, 3})}},
        [](Graph&, std::span<const Var> in) { return add(in[0], in[1]); });
  check("mul", {{"a", random_tensor(rng, {2, 3})}, {"b", random_tensor(rng, {2, 3})}},
        [](Graph&, std::span<const Var> in) { return mul(in[0], in[1]); });
  check("sum", {{"input", random_tensor(rng, {3, 4})}}, [](Graph&, std::span<const Var> in) { return sum(in[0]); });

  {
    std::vector<GradCheckInput> in{{"input", random_tensor(rng, {1, 2, 8, 8})}};
    const int rates[3] = {1, 2, 4};
    for (int r : rates) {
      in.push_back({"r" + std::to_string(r) + ".kernel", random_tensor(rng, {2, 2, 3, 3}, 0.5)});
      in.push_back({"r" + std::to_string(r) + ".bias", random_tensor(rng, {2})});
    }
    check("dilated_block", std::move(in), [rates](Graph&, std::span<const Var> v) {
      const ConvParams branches[3] = {{v[1], v[2]}, {v[3], v[4]}, {v[5], v[6]}};
      return dilated_block(v[0], branches, rates);
    });
  }
  check("dense_pool_connect",
        {{"level1", distinct_tensor(rng, {1, 2, 8, 8})},
         {"level2", distinct_tensor(rng, {1, 3, 4, 4})},
         {"standard", random_tensor(rng, {1, 2, 2, 2})},
         {"hop1.1", Tensor::scalar(0.2)},
         {"hop1.2", Tensor::scalar(-0.4)},
         {"hop2.1", Tensor::scalar(0.7)}},
        [](Graph&, std::span<const Var> v) {
          const Var enc[2] = {v[0], v[1]};
          const std::vector<PoolAlpha> hops[2] = {{PoolAlpha{v[3], 0.0}, PoolAlpha{v[4], 0.0}}, {PoolAlpha{v[5], 0.0}}};
          return dense_pool_connect(enc, v[2], hops);
        });

  {
    Tensor targets({2, 3, 3, 3}, 0.0);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t p = 0; p < 9; ++p) targets[(n * 3 + rng.below(3)) * 9 + p] = 1.0;
    check("generalized_dice_loss", {{"probs", softmax_of(random_tensor(rng, {2, 3, 3, 3}))}},
          [targets](Graph&, std::span<const Var> in) { return generalized_dice_loss(in[0], targets, 1e-6); });
    Tensor absent({1, 3, 2, 2}, 0.0);
    for (std::size_t p = 0; p < 4; ++p) absent[(p % 2) * 4 + p] = 1.0;
    check("generalized_dice_loss_absent_class", {{"probs", softmax_of(random_tensor(rng, {1, 3, 2, 2}))}},
          [absent](Graph&, std::span<const Var> in) { return generalized_dice_loss(in[0], absent, 1e-6); });
  }

  {
    ModelConfig mc = options.model;
    mc.image_size = 16;
    Model model = build_model(mc, options.seed);
    std::vector<GradCheckInput> in;
    std::vector<std::string> names;
    for (const auto& [name, t] : model.params) {
      in.push_back({name, t});
      names.push_back(name);
    }
    // Nonzero biases so a freshly initialised model does not park units at the relu kink.
    for (auto& gi : in) {
      if (gi.name.ends_with(".bias"))
        for (double& v : gi.tensor.data()) v = rng.normal(0.0, 0.1);
    }
    in.push_back({"input", random_tensor(rng, {2, static_cast<std::size_t>(mc.in_channels), 16, 16})});
    GradCheckOptions go;
    go.max_probes_per_input = options.model_probes_per_tensor;
    check(
        "model_end_to_end", std::move(in),
        [mc, names](Graph&, std::span<const Var> v) {
          std::unordered_map<std::string, Var> lookup;
          for (std::size_t i = 0; i < names.size(); ++i) lookup.emplace(names[i], v[i]);
          return forward_with(mc, [&](const std::string& n) { return lookup.at(n); }, v.back());
        },
        go);
  }
  return result;
}

}  // namespace covidseg

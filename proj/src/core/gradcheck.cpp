#include "covidseg/core/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace covidseg {

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

bool GradCheckReport::passed(double tolerance) const {
  for (const auto& e : entries) {
    if (!e.failure.empty() || !(e.max_rel_error < tolerance)) return false;
  }
  return true;
}

namespace {

double evaluate(const LossBuilder& build, std::vector<GradCheckInput>& inputs) {
  Graph graph;
  std::vector<Var> leaves;
  for (auto& in : inputs) leaves.push_back(graph.bind(in.tensor));
  const Var loss = build(graph, leaves);
  if (loss.value().size() != 1) throw std::invalid_argument("grad_check: loss must be scalar");
  return loss.value()[0];
}

}  // namespace

GradCheckReport grad_check(std::string op, const LossBuilder& build, std::vector<GradCheckInput> inputs,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  report.op = std::move(op);

  for (auto& in : inputs) {
    in.tensor.set_requires_grad(true);
    in.tensor.clear_grad();
  }
  {
    Graph graph;
    std::vector<Var> leaves;
    for (auto& in : inputs) leaves.push_back(graph.bind(in.tensor));
    const Var loss = build(graph, leaves);
    graph.backward(loss);
  }

  for (auto& in : inputs) {
    GradCheckEntry entry;
    entry.name = in.name;
    const std::size_t n = in.tensor.size();
    std::vector<double> analytic = in.tensor.has_grad() ? std::vector<double>(in.tensor.grad().begin(), in.tensor.grad().end())
                                                        : std::vector<double>(n, 0.0);
    std::vector<std::size_t> probes;
    if (options.max_probes_per_input == 0 || n <= options.max_probes_per_input) {
      for (std::size_t i = 0; i < n; ++i) probes.push_back(i);
    } else {
      const std::size_t k = options.max_probes_per_input;
      for (std::size_t j = 0; j < k; ++j) probes.push_back((j * (n - 1)) / (k - 1 > 0 ? k - 1 : 1));
      probes.erase(std::unique(probes.begin(), probes.end()), probes.end());
    }
    for (std::size_t idx : probes) {
      const double original = in.tensor[idx];
      in.tensor[idx] = original + options.step;
      const double up = evaluate(build, inputs);
      in.tensor[idx] = original - options.step;
      const double down = evaluate(build, inputs);
      in.tensor[idx] = original;
      ++entry.probed;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        entry.failure = "non-finite loss when probing element " + std::to_string(idx);
        break;
      }
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[idx];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (!std::isfinite(a)) {
        entry.failure = "non-finite analytic gradient at element " + std::to_string(idx);
        break;
      }
      if (err > entry.max_rel_error) {
        entry.max_rel_error = err;
        entry.worst_index = idx;
      }
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace covidseg

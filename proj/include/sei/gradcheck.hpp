#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sei/graph.hpp"

namespace sei {

struct GradCheckReport {
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string worst;  // "input 1 [23]" at the max error
};

// Builds a scalar-valued graph from leaf ids; re-invoked for every probe.
using ScalarProgram = std::function<Graph::ValueId(Graph&, const std::vector<Graph::ValueId>&)>;

// Compares reverse-mode gradients against central differences (step 1e-5).
// The relative error denominator is floored at 1e-4 so coordinates with a
// genuinely tiny gradient do not amplify finite-difference roundoff.
inline GradCheckReport grad_check(const ScalarProgram& program, std::vector<Tensor> point, double tolerance = 1e-4,
                                  double step = 1e-5) {
  GradCheckReport report;
  report.tolerance = tolerance;

  auto evaluate = [&](const std::vector<Tensor>& inputs) {
    Graph g;
    std::vector<Graph::ValueId> ids;
    ids.reserve(inputs.size());
    for (const Tensor& t : inputs) ids.push_back(g.leaf(t, false));
    return g.value(program(g, ids)).item();
  };

  Graph g;
  std::vector<Graph::ValueId> ids;
  for (const Tensor& t : point) ids.push_back(g.leaf(t, true));
  Graph::ValueId root = program(g, ids);
  g.backward(root);

  for (std::size_t i = 0; i < point.size(); ++i) {
    const Tensor& analytic = g.grad(ids[i]);
    for (std::size_t j = 0; j < point[i].data.size(); ++j) {
      double saved = point[i].data[j];
      point[i].data[j] = saved + step;
      double fp = evaluate(point);
      point[i].data[j] = saved - step;
      double fm = evaluate(point);
      point[i].data[j] = saved;
      double fd = (fp - fm) / (2 * step);
      double ad = analytic.data.empty() ? 0.0 : analytic.data[j];
      double rel = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 1e-4});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = "input " + std::to_string(i) + " [" + std::to_string(j) + "]";
      }
    }
  }
  report.pass = report.max_rel_err < tolerance;
  return report;
}

}  // namespace sei

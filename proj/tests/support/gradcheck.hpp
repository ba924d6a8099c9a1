#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "voxmend/ag/tensor.hpp"

namespace testsupport {

using voxmend::ag::Tensor;

struct GradReport {
  double worst_rel = 0.0;
  std::string worst_where;
  std::size_t checked = 0;
  bool ok = true;
};

// Central differences on every element of every input. A component passes
// when |analytic - numeric| <= rel * max(|analytic|, |numeric|) + abs_floor;
// the floor only matters for gradients that are zero up to rounding.
inline GradReport gradcheck(const std::function<Tensor<double>()>& loss_fn, std::vector<Tensor<double>> inputs,
                            double h = 1e-3, double rel = 1e-3, double abs_floor = 1e-7,
                            std::size_t max_per_input = 0) {
  for (auto& t : inputs) {
    t.zero_grad();
    t.set_requires_grad(true);
  }
  auto loss = loss_fn();
  voxmend::ag::backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    if (t.has_grad()) analytic.emplace_back(t.grad().begin(), t.grad().end());
    else analytic.emplace_back(t.numel(), 0.0);
  }
  GradReport rep;
  voxmend::ag::NoGradGuard guard;
  std::mt19937_64 pick(7);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& data = inputs[k].storage();
    std::vector<std::size_t> idx(data.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (max_per_input && idx.size() > max_per_input) {
      std::shuffle(idx.begin(), idx.end(), pick);
      idx.resize(max_per_input);
    }
    for (std::size_t i : idx) {
      const double orig = data[i];
      data[i] = orig + h;
      const double lp = loss_fn().item();
      data[i] = orig - h;
      const double lm = loss_fn().item();
      data[i] = orig;
      const double num = (lp - lm) / (2 * h);
      const double an = analytic[k][i];
      const double diff = std::abs(an - num);
      const double scale = std::max(std::abs(an), std::abs(num));
      const double r = scale > 0 ? diff / scale : 0.0;
      ++rep.checked;
      if (diff > rel * scale + abs_floor) {
        rep.ok = false;
        if (r > rep.worst_rel || rep.worst_where.empty()) {
          rep.worst_rel = r;
          rep.worst_where = "input " + std::to_string(k) + " element " + std::to_string(i) +
                            " analytic " + std::to_string(an) + " numeric " + std::to_string(num);
        }
      } else if (rep.ok && r > rep.worst_rel && diff > abs_floor) {
        rep.worst_rel = r;
      }
    }
  }
  return rep;
}

inline Tensor<double> random_tensor(voxmend::ag::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                    double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(voxmend::ag::numel(shape));
  for (auto& x : v) x = d(rng);
  return Tensor<double>(std::move(shape), std::move(v));
}

}  // namespace testsupport

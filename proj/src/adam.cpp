#include "dldmd/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace dldmd::ad {

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state,
               double lr) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: gradient size does not match parameters");
  if (state.m.size() == 0) state = AdamState::zeros(params.size());
  if (state.m.size() != params.size())
    throw std::invalid_argument("adam_step: optimizer state size does not match parameters");

  ++state.step;
  const double t = static_cast<double>(state.step);
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  params.array() -=
      lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

}  // namespace dldmd::ad

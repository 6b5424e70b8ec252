#include "hdgcn/layers/nn.hpp"

#include "hdgcn/core/init.hpp"

namespace hdgcn::layers {

template <typename T>
BatchNorm<T>::BatchNorm(const std::string& name, std::size_t channels, bool enabled)
    : name_(name),
      enabled_(enabled),
      gamma_(name + ".gamma", {channels}, std::vector<T>(channels, T(1))),
      beta_(name + ".beta", {channels}, std::vector<T>(channels, T(0))),
      stats_(channels) {}

template <typename T>
DiffTensor<T> BatchNorm<T>::forward(const DiffTensor<T>& x, bool training) {
  if (!enabled_) return x;
  return ops::batch_norm(x, gamma_.tensor(), beta_.tensor(), stats_, training);
}

template <typename T>
void BatchNorm<T>::collect(StateRefs<T>& out) {
  if (!enabled_) return;
  out.params.push_back(gamma_);
  out.params.push_back(beta_);
  out.buffers.emplace_back(name_ + ".running_mean", &stats_.running_mean);
  out.buffers.emplace_back(name_ + ".running_var", &stats_.running_var);
}

template <typename T>
Parameter<T> make_weight(const std::string& name, std::size_t out, std::size_t in, std::mt19937_64& rng) {
  return Parameter<T>(name, {out, in}, fan_in_uniform<T>({out, in}, in, rng));
}

template <typename T>
Linear<T>::Linear(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng)
    : weight_(name + ".weight", {in, out}, fan_in_uniform<T>({in, out}, in, rng)),
      bias_(name + ".bias", {out}, fan_in_uniform<T>({out}, in, rng)) {}

template <typename T>
DiffTensor<T> Linear<T>::forward(const DiffTensor<T>& x) const {
  return ops::add(ops::matmul(x, weight_.tensor()), bias_.tensor());
}

template <typename T>
void Linear<T>::collect(StateRefs<T>& out) {
  out.params.push_back(weight_);
  out.params.push_back(bias_);
}

template class BatchNorm<float>;
template class BatchNorm<double>;
template class Linear<float>;
template class Linear<double>;
template Parameter<float> make_weight(const std::string&, std::size_t, std::size_t, std::mt19937_64&);
template Parameter<double> make_weight(const std::string&, std::size_t, std::size_t, std::mt19937_64&);

}  // namespace hdgcn::layers

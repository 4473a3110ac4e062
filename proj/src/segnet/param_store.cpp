#include "covidseg/segnet/param_store.hpp"

#include <stdexcept>

namespace covidseg {

Tensor& ParamStore::add(std::string name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
  return entries_.back().second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return entries_[it->second].second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return entries_[it->second].second;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : entries_) t.clear_grad();
}

}  // namespace covidseg

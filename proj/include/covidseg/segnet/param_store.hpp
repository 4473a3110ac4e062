#pragma once

#include <cstddef>
#include <deque>
#include <string>
#include <unordered_map>
#include <utility>

#include "covidseg/core/tensor.hpp"

namespace covidseg {

// Named parameters in registration order. References returned by add/at stay
// valid for the lifetime of the store.
class ParamStore {
 public:
  using Entry = std::pair<std::string, Tensor>;

  Tensor& add(std::string name, Tensor value);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const noexcept { return entries_.size(); }
  // Total number of scalar parameters.
  std::size_t parameter_count() const;
  void zero_grad();

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::deque<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace covidseg

#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ggsa/tensor.hpp"

namespace ggsa::models {

// Ordered, name-addressed parameter tensors. Order is fixed at construction
// and shared by the optimizer state and the checkpoint layout.
class ParamStore {
public:
    void add(const std::string& name, ad::TensorPtr t);
    ad::TensorPtr& at(const std::string& name);
    const ad::TensorPtr& at(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t size() const { return items_.size(); }
    const std::vector<std::pair<std::string, ad::TensorPtr>>& items() const { return items_; }
    std::vector<std::pair<std::string, ad::TensorPtr>>& items() { return items_; }

private:
    std::vector<std::pair<std::string, ad::TensorPtr>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

} // namespace ggsa::models

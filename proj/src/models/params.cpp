#include "ggsa/params.hpp"

namespace ggsa::models {

void ParamStore::add(const std::string& name, ad::TensorPtr t) {
    if (index_.count(name)) fail(ErrorKind::Contract, "duplicate parameter name " + name);
    index_[name] = items_.size();
    items_.emplace_back(name, std::move(t));
}

ad::TensorPtr& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) fail(ErrorKind::Contract, "unknown parameter " + name);
    return items_[it->second].second;
}

const ad::TensorPtr& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) fail(ErrorKind::Contract, "unknown parameter " + name);
    return items_[it->second].second;
}

} // namespace ggsa::models

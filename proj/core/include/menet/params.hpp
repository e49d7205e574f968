#pragma once

#include <string>
#include <utility>
#include <vector>

#include "menet/tensor.hpp"

namespace menet {

// Ordered registry of named learnable tensors. Registration order is the
// optimizer's and checkpoint's parameter order, so it must be deterministic.
class ParamStore {
  public:
    Tensor add(const std::string& name, Tensor t) {
        t.set_requires_grad(true);
        for (const auto& [n, _] : items_)
            if (n == name) throw ConfigError("duplicate parameter name: " + name);
        items_.emplace_back(name, t);
        return t;
    }

    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }

    Tensor* find(const std::string& name) {
        for (auto& [n, t] : items_)
            if (n == name) return &t;
        return nullptr;
    }

    void zero_grad() {
        for (auto& [_, t] : items_) t.zero_grad();
    }

  private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

}  // namespace menet

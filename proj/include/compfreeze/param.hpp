#pragma once

#include <memory>
#include <string>
#include <vector>

#include "compfreeze/tensor.hpp"

namespace compfreeze {

/// What a tensor is, for weight-decay and freezing rules.
enum class ParamRole { weight, bias, layer_norm, embedding };

/// A named tensor with its gradient buffer. `path` is the stable key used by
/// masks, checkpoints and reports.
struct Parameter {
    std::string path;
    Matrix value;
    Matrix grad;
    ParamRole role = ParamRole::weight;
    bool trainable = true;

    Parameter(std::string p, std::size_t rows, std::size_t cols, ParamRole r)
        : path(std::move(p)), value(rows, cols), grad(rows, cols), role(r) {}

    void zero_grad() { grad.fill(0.0); }
    std::size_t count() const { return value.size(); }
};

using ParamPtr = std::shared_ptr<Parameter>;

inline ParamPtr make_param(std::string path, std::size_t rows, std::size_t cols, ParamRole role) {
    return std::make_shared<Parameter>(std::move(path), rows, cols, role);
}

}  // namespace compfreeze

#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adaptsde/sde_system.hpp"

namespace adaptsde {

/// y_t from (y0, t, W_t). Only available when the solution is a function of W_t.
using ExactSolution = std::function<std::vector<double>(std::span<const double> y0, double t,
                                                        std::span<const double> W_t)>;

struct ModelSpec {
    std::string name;
    SystemPtr system;
    double horizon = 1.0;
    std::vector<double> y0;
    ExactSolution exact;  // may be empty
    std::map<std::string, double> params;
};

/// SABR with alpha = 1, beta = rho = 0 in Stratonovich (S, nu) coordinates, sigma = e^nu:
/// dS = e^nu o dW^1, dnu = -1/2 dt + dW^2. y0 = (0,0), T = 8.
ModelSpec sabr_model();
/// The same model in Ito (S, sigma) coordinates: dS = sigma dW^1, dsigma = sigma dW^2.
ModelSpec sabr_ito_model();
/// dx = dW^1, dy = x o dW^2 from (0,0), T = 1.
ModelSpec counterexample_model();
/// Ito geometric Brownian motion dy = mu y dt + sigma y dW, y0 = 1, T = 1.
ModelSpec gbm_model(double mu = 0.05, double sigma = 0.2);
/// dy = -theta y dt + sigma dW, y0 = 1, T = 1.
ModelSpec additive_ou_model(double theta = 1.0, double sigma = 1.0);

struct ModelInfo {
    std::string_view name;
    std::map<std::string, double> defaults;
    std::string_view description;
};

const std::vector<ModelInfo>& model_registry();

/// Builds a registered model. Unknown names or parameter keys throw InvalidArgument.
/// Every model accepts `T` and `y0` (scalar, broadcast) overrides.
ModelSpec make_model(std::string_view name, const std::map<std::string, double>& overrides = {});

}  // namespace adaptsde

#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>

namespace adaptsde {

enum class Formulation { Ito, Stratonovich };

const char* to_string(Formulation f) noexcept;

enum class SecondOrderSupport { Analytic, FiniteDifference, None };

/// dy = f(y) dt + g(y) dW (Ito) or dy = f(y) dt + g(y) o dW (Stratonovich).
/// Diffusion matrices are e x d, row-major: g[i*d + j] = g_ij.
/// Implementations must be reentrant: one system is shared by all worker threads.
class SdeSystem {
public:
    virtual ~SdeSystem() = default;

    virtual int state_dim() const = 0;
    virtual int noise_dim() const = 0;
    virtual Formulation formulation() const = 0;
    virtual std::string name() const { return "custom"; }

    virtual void drift(std::span<const double> y, std::span<double> out) const = 0;
    virtual void diffusion(std::span<const double> y, std::span<double> out) const = 0;

    virtual SecondOrderSupport second_order_support() const { return SecondOrderSupport::FiniteDifference; }

    /// out = sum_{i,j} g_j'(y) g_i(y) u_i v_j.
    /// Default: central difference of y -> g(y)v along g(y)u,
    /// relative step cbrt(eps) * (1 + |y|).
    virtual void second_order(std::span<const double> y, std::span<const double> u, std::span<const double> v,
                              std::span<double> out) const;

    /// out = sum_i g_i'(y) g_i(y), the Ito-Stratonovich drift correction times two.
    void correction(std::span<const double> y, std::span<double> out) const;

protected:
    void finite_difference_second_order(std::span<const double> y, std::span<const double> u,
                                        std::span<const double> v, std::span<double> out) const;
};

using SystemPtr = std::shared_ptr<const SdeSystem>;

/// System assembled from callables. second_order may be left empty, in which
/// case the finite-difference fallback is used unless `allow_fd` is false.
struct LambdaSystemSpec {
    int state_dim = 1;
    int noise_dim = 1;
    Formulation formulation = Formulation::Stratonovich;
    std::string name = "custom";
    std::function<void(std::span<const double>, std::span<double>)> drift;
    std::function<void(std::span<const double>, std::span<double>)> diffusion;
    std::function<void(std::span<const double>, std::span<const double>, std::span<const double>, std::span<double>)>
        second_order;
    bool allow_fd = true;
};

SystemPtr make_system(LambdaSystemSpec spec);

/// Same dynamics in the other calculus: f~ = f -/+ 1/2 sum_i g_i' g_i.
/// Returns `sys` itself when it already has the requested formulation.
SystemPtr with_formulation(SystemPtr sys, Formulation target);
SystemPtr to_ito(SystemPtr sys);
SystemPtr to_stratonovich(SystemPtr sys);

}  // namespace adaptsde

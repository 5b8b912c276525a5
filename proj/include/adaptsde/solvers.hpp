#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adaptsde/brownian_tree.hpp"
#include "adaptsde/sde_system.hpp"

namespace adaptsde {

/// Brownian data for one step. Empty spans mean "not supplied".
struct PathIncrement {
    double h = 0.0;
    std::span<const double> W;
    std::span<const double> H;
    /// Auxiliary draws, e.g. the Rademacher vector of the randomized Ito Heun method.
    std::span<const double> z;

    static PathIncrement from(const BrownianSample& s) { return {s.h, s.W, s.H, {}}; }
};

/// Main and embedded approximations after one step.
struct StepOutput {
    std::vector<double> y_next;
    std::vector<double> y_embedded;
    /// Raw ||y_next - y_embedded||_2. Controllers rescale by their tolerance.
    double error_norm = 0.0;
    /// Number of evaluations of F = (f g) spent.
    int evaluations = 0;

    /// ||y_next - y_embedded||_2 / (C sqrt(d)).
    double error_scaled(double C, int d) const;
};

enum class Method { Euler, Milstein, Heun, Spark, ItoHeunRandomized };

struct MethodInfo {
    Method method;
    std::string_view name;
    /// Calculus the method integrates in; nullopt when it accepts either.
    std::optional<Formulation> formulation;
    int evaluations_per_step;
    bool needs_H;
    bool needs_z;
    std::string_view description;
};

const std::vector<MethodInfo>& method_registry();
const MethodInfo& method_info(Method m);
/// Throws InvalidArgument for unknown names.
Method parse_method(std::string_view name);

/// Reusable stepping workspace for one method. Not shared between threads.
class Stepper {
public:
    explicit Stepper(Method m) : method_(m) {}

    Method method() const noexcept { return method_; }
    const MethodInfo& info() const { return method_info(method_); }

    void step(const SdeSystem& sys, std::span<const double> y, const PathIncrement& inc, StepOutput& out);

private:
    void prepare(const SdeSystem& sys, std::span<const double> y, const PathIncrement& inc);
    /// f and g at y into slot k.
    void eval(const SdeSystem& sys, std::span<const double> y, int k);
    /// out = base + a * h * f_k + g_k (b * W + c * H)
    void combine(int k, std::span<const double> base, double a, double b, double c, std::span<double> out) const;

    void euler(const SdeSystem&, std::span<const double>, StepOutput&);
    void milstein(const SdeSystem&, std::span<const double>, StepOutput&);
    void heun(const SdeSystem&, std::span<const double>, StepOutput&);
    void spark(const SdeSystem&, std::span<const double>, StepOutput&);
    void ito_heun(const SdeSystem&, std::span<const double>, StepOutput&);

    Method method_;
    int e_ = 0, d_ = 0;
    double h_ = 0.0;
    std::span<const double> W_, H_, z_;
    std::vector<double> f_[3], g_[3];
    std::vector<double> s1_, s2_, tmp_, wz_;
};

StepOutput euler_maruyama_step(const SdeSystem& sys, std::span<const double> y, const PathIncrement& inc);
StepOutput no_area_milstein_step(const SdeSystem& sys, std::span<const double> y, const PathIncrement& inc);
StepOutput heun_step(const SdeSystem& sys, std::span<const double> y, const PathIncrement& inc);
StepOutput spark_step(const SdeSystem& sys, std::span<const double> y, const PathIncrement& inc);
StepOutput ito_heun_randomized_step(const SdeSystem& sys, std::span<const double> y, const PathIncrement& inc);

/// E[int W (x) o dW | W, H] over one interval as a d x d row-major matrix:
/// 1/2 W W^T, plus H W^T - W H^T when H is given (H empty = absent).
std::vector<double> conditional_levy_expectation(std::span<const double> W, std::span<const double> H = {});

inline constexpr double kSparkA = 0.21132486540518713;  // (3 - sqrt 3) / 6
inline constexpr double kSparkB = 0.5773502691896258;   // sqrt 3 / 3

}  // namespace adaptsde

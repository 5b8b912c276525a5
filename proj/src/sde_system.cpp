#include "adaptsde/sde_system.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "adaptsde/errors.hpp"

namespace adaptsde {

const char* to_string(Formulation f) noexcept { return f == Formulation::Ito ? "ito" : "stratonovich"; }

namespace {

double norm2(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
}

void gemv(std::span<const double> g, int e, int d, std::span<const double> u, std::span<double> out) {
    for (int i = 0; i < e; ++i) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += g[i * d + j] * u[j];
        out[i] = s;
    }
}

}  // namespace

void SdeSystem::second_order(std::span<const double> y, std::span<const double> u, std::span<const double> v,
                             std::span<double> out) const {
    if (second_order_support() == SecondOrderSupport::None)
        throw MissingInput("system '" + name() + "' provides no second-order action");
    finite_difference_second_order(y, u, v, out);
}

void SdeSystem::finite_difference_second_order(std::span<const double> y, std::span<const double> u,
                                               std::span<const double> v, std::span<double> out) const {
    const int e = state_dim(), d = noise_dim();
    std::vector<double> g(static_cast<std::size_t>(e) * d), w(e), yp(e), gp(e), gm(e);
    diffusion(y, g);
    gemv(g, e, d, u, w);
    const double wn = norm2(w);
    if (wn == 0.0) {
        for (int i = 0; i < e; ++i) out[i] = 0.0;
        return;
    }
    const double eps = std::cbrt(std::numeric_limits<double>::epsilon()) * (1.0 + norm2(y));
    const double t = eps / wn;
    for (int i = 0; i < e; ++i) yp[i] = y[i] + t * w[i];
    diffusion(yp, g);
    gemv(g, e, d, v, gp);
    for (int i = 0; i < e; ++i) yp[i] = y[i] - t * w[i];
    diffusion(yp, g);
    gemv(g, e, d, v, gm);
    for (int i = 0; i < e; ++i) out[i] = (gp[i] - gm[i]) / (2.0 * t);
}

void SdeSystem::correction(std::span<const double> y, std::span<double> out) const {
    const int e = state_dim(), d = noise_dim();
    thread_local std::vector<double> unit, tmp;
    unit.assign(d, 0.0);
    tmp.resize(e);
    for (int i = 0; i < e; ++i) out[i] = 0.0;
    for (int j = 0; j < d; ++j) {
        unit[j] = 1.0;
        second_order(y, unit, unit, tmp);
        for (int i = 0; i < e; ++i) out[i] += tmp[i];
        unit[j] = 0.0;
    }
}

namespace {

class LambdaSystem final : public SdeSystem {
public:
    explicit LambdaSystem(LambdaSystemSpec s) : s_(std::move(s)) {
        if (s_.state_dim < 1 || s_.noise_dim < 1) throw InvalidArgument("make_system: dimensions must be >= 1");
        if (!s_.drift || !s_.diffusion) throw InvalidArgument("make_system: drift and diffusion are required");
    }
    int state_dim() const override { return s_.state_dim; }
    int noise_dim() const override { return s_.noise_dim; }
    Formulation formulation() const override { return s_.formulation; }
    std::string name() const override { return s_.name; }
    void drift(std::span<const double> y, std::span<double> out) const override { s_.drift(y, out); }
    void diffusion(std::span<const double> y, std::span<double> out) const override { s_.diffusion(y, out); }
    SecondOrderSupport second_order_support() const override {
        if (s_.second_order) return SecondOrderSupport::Analytic;
        return s_.allow_fd ? SecondOrderSupport::FiniteDifference : SecondOrderSupport::None;
    }
    void second_order(std::span<const double> y, std::span<const double> u, std::span<const double> v,
                      std::span<double> out) const override {
        if (s_.second_order) return s_.second_order(y, u, v, out);
        SdeSystem::second_order(y, u, v, out);
    }

private:
    LambdaSystemSpec s_;
};

class ConvertedSystem final : public SdeSystem {
public:
    ConvertedSystem(SystemPtr base, Formulation target) : base_(std::move(base)), target_(target) {}
    int state_dim() const override { return base_->state_dim(); }
    int noise_dim() const override { return base_->noise_dim(); }
    Formulation formulation() const override { return target_; }
    std::string name() const override { return base_->name(); }
    void drift(std::span<const double> y, std::span<double> out) const override {
        thread_local std::vector<double> c;
        c.resize(base_->state_dim());
        base_->drift(y, out);
        base_->correction(y, c);
        // Stratonovich drift = Ito drift - 1/2 sum g_i' g_i.
        const double sign = target_ == Formulation::Stratonovich ? -0.5 : 0.5;
        for (std::size_t i = 0; i < c.size(); ++i) out[i] += sign * c[i];
    }
    void diffusion(std::span<const double> y, std::span<double> out) const override { base_->diffusion(y, out); }
    SecondOrderSupport second_order_support() const override { return base_->second_order_support(); }
    void second_order(std::span<const double> y, std::span<const double> u, std::span<const double> v,
                      std::span<double> out) const override {
        base_->second_order(y, u, v, out);
    }

private:
    SystemPtr base_;
    Formulation target_;
};

}  // namespace

SystemPtr make_system(LambdaSystemSpec spec) { return std::make_shared<LambdaSystem>(std::move(spec)); }

SystemPtr with_formulation(SystemPtr sys, Formulation target) {
    if (!sys) throw InvalidArgument("with_formulation: null system");
    if (sys->formulation() == target) return sys;
    return std::make_shared<ConvertedSystem>(std::move(sys), target);
}

SystemPtr to_ito(SystemPtr sys) { return with_formulation(std::move(sys), Formulation::Ito); }
SystemPtr to_stratonovich(SystemPtr sys) { return with_formulation(std::move(sys), Formulation::Stratonovich); }

}  // namespace adaptsde

#include "adaptsde/models.hpp"

#include <cmath>

#include "adaptsde/errors.hpp"

namespace adaptsde {

namespace {

class SabrStrat final : public SdeSystem {
public:
    int state_dim() const override { return 2; }
    int noise_dim() const override { return 2; }
    Formulation formulation() const override { return Formulation::Stratonovich; }
    std::string name() const override { return "sabr"; }
    void drift(std::span<const double>, std::span<double> out) const override {
        out[0] = 0.0;
        out[1] = -0.5;
    }
    void diffusion(std::span<const double> y, std::span<double> g) const override {
        g[0] = std::exp(y[1]);
        g[1] = 0.0;
        g[2] = 0.0;
        g[3] = 1.0;
    }
    SecondOrderSupport second_order_support() const override { return SecondOrderSupport::Analytic; }
    // Only g_1 = (e^nu, 0) varies, along nu; g_2 = (0, 1) is constant.
    void second_order(std::span<const double> y, std::span<const double> u, std::span<const double> v,
                      std::span<double> out) const override {
        out[0] = std::exp(y[1]) * u[1] * v[0];
        out[1] = 0.0;
    }
};

class SabrIto final : public SdeSystem {
public:
    int state_dim() const override { return 2; }
    int noise_dim() const override { return 2; }
    Formulation formulation() const override { return Formulation::Ito; }
    std::string name() const override { return "sabr-ito"; }
    void drift(std::span<const double>, std::span<double> out) const override {
        out[0] = 0.0;
        out[1] = 0.0;
    }
    void diffusion(std::span<const double> y, std::span<double> g) const override {
        g[0] = y[1];
        g[1] = 0.0;
        g[2] = 0.0;
        g[3] = y[1];
    }
    SecondOrderSupport second_order_support() const override { return SecondOrderSupport::Analytic; }
    void second_order(std::span<const double> y, std::span<const double> u, std::span<const double> v,
                      std::span<double> out) const override {
        out[0] = y[1] * u[1] * v[0];
        out[1] = y[1] * u[1] * v[1];
    }
};

class Counterexample final : public SdeSystem {
public:
    int state_dim() const override { return 2; }
    int noise_dim() const override { return 2; }
    Formulation formulation() const override { return Formulation::Stratonovich; }
    std::string name() const override { return "counterexample"; }
    void drift(std::span<const double>, std::span<double> out) const override {
        out[0] = 0.0;
        out[1] = 0.0;
    }
    void diffusion(std::span<const double> y, std::span<double> g) const override {
        g[0] = 1.0;
        g[1] = 0.0;
        g[2] = 0.0;
        g[3] = y[0];
    }
    SecondOrderSupport second_order_support() const override { return SecondOrderSupport::Analytic; }
    void second_order(std::span<const double>, std::span<const double> u, std::span<const double> v,
                      std::span<double> out) const override {
        out[0] = 0.0;
        out[1] = u[0] * v[1];
    }
};

class Gbm final : public SdeSystem {
public:
    Gbm(double mu, double sigma) : mu_(mu), sigma_(sigma) {}
    int state_dim() const override { return 1; }
    int noise_dim() const override { return 1; }
    Formulation formulation() const override { return Formulation::Ito; }
    std::string name() const override { return "gbm"; }
    void drift(std::span<const double> y, std::span<double> out) const override { out[0] = mu_ * y[0]; }
    void diffusion(std::span<const double> y, std::span<double> g) const override { g[0] = sigma_ * y[0]; }
    SecondOrderSupport second_order_support() const override { return SecondOrderSupport::Analytic; }
    void second_order(std::span<const double> y, std::span<const double> u, std::span<const double> v,
                      std::span<double> out) const override {
        out[0] = sigma_ * sigma_ * y[0] * u[0] * v[0];
    }

private:
    double mu_, sigma_;
};

class Ou final : public SdeSystem {
public:
    Ou(double theta, double sigma) : theta_(theta), sigma_(sigma) {}
    int state_dim() const override { return 1; }
    int noise_dim() const override { return 1; }
    // Additive noise: both calculi coincide; tagged Stratonovich for the path methods.
    Formulation formulation() const override { return Formulation::Stratonovich; }
    std::string name() const override { return "ou"; }
    void drift(std::span<const double> y, std::span<double> out) const override { out[0] = -theta_ * y[0]; }
    void diffusion(std::span<const double>, std::span<double> g) const override { g[0] = sigma_; }
    SecondOrderSupport second_order_support() const override { return SecondOrderSupport::Analytic; }
    void second_order(std::span<const double>, std::span<const double>, std::span<const double>,
                      std::span<double> out) const override {
        out[0] = 0.0;
    }

private:
    double theta_, sigma_;
};

double get(const std::map<std::string, double>& m, const std::string& k) { return m.at(k); }

void apply_common(ModelSpec& spec, const std::map<std::string, double>& p) {
    if (auto it = p.find("T"); it != p.end()) {
        if (!(it->second > 0)) throw InvalidArgument("model parameter T must be positive");
        spec.horizon = it->second;
    }
    if (auto it = p.find("y0"); it != p.end())
        for (double& v : spec.y0) v = it->second;
}

}  // namespace

ModelSpec sabr_model() {
    ModelSpec m;
    m.name = "sabr";
    m.system = std::make_shared<SabrStrat>();
    m.horizon = 8.0;
    m.y0 = {0.0, 0.0};
    return m;
}

ModelSpec sabr_ito_model() {
    ModelSpec m;
    m.name = "sabr-ito";
    m.system = std::make_shared<SabrIto>();
    m.horizon = 8.0;
    m.y0 = {0.0, 1.0};
    return m;
}

ModelSpec counterexample_model() {
    ModelSpec m;
    m.name = "counterexample";
    m.system = std::make_shared<Counterexample>();
    m.horizon = 1.0;
    m.y0 = {0.0, 0.0};
    return m;
}

ModelSpec gbm_model(double mu, double sigma) {
    ModelSpec m;
    m.name = "gbm";
    m.system = std::make_shared<Gbm>(mu, sigma);
    m.horizon = 1.0;
    m.y0 = {1.0};
    m.params = {{"mu", mu}, {"sigma", sigma}};
    m.exact = [mu, sigma](std::span<const double> y0, double t, std::span<const double> Wt) {
        return std::vector<double>{y0[0] * std::exp((mu - 0.5 * sigma * sigma) * t + sigma * Wt[0])};
    };
    return m;
}

ModelSpec additive_ou_model(double theta, double sigma) {
    if (!(theta > 0)) throw InvalidArgument("ou: theta must be positive");
    ModelSpec m;
    m.name = "ou";
    m.system = std::make_shared<Ou>(theta, sigma);
    m.horizon = 1.0;
    m.y0 = {1.0};
    m.params = {{"theta", theta}, {"sigma", sigma}};
    return m;
}

const std::vector<ModelInfo>& model_registry() {
    static const std::vector<ModelInfo> reg{
        {"sabr", {}, "SABR (alpha=1, beta=rho=0), Stratonovich (S, nu), T=8"},
        {"counterexample", {}, "dx = dW1, dy = x o dW2, T=1"},
        {"gbm", {{"mu", 0.05}, {"sigma", 0.2}}, "geometric Brownian motion (Ito), exact solution"},
        {"ou", {{"theta", 1.0}, {"sigma", 1.0}}, "additive-noise Ornstein-Uhlenbeck"},
    };
    return reg;
}

ModelSpec make_model(std::string_view name, const std::map<std::string, double>& overrides) {
    const ModelInfo* info = nullptr;
    for (const auto& mi : model_registry())
        if (mi.name == name) info = &mi;
    if (!info) throw InvalidArgument("unknown model '" + std::string(name) + "'");
    std::map<std::string, double> p = info->defaults;
    for (const auto& [k, v] : overrides) {
        if (k != "T" && k != "y0" && !p.count(k))
            throw InvalidArgument("model '" + std::string(name) + "' has no parameter '" + k + "'");
        p[k] = v;
    }
    ModelSpec spec;
    if (name == "sabr") spec = sabr_model();
    else if (name == "counterexample") spec = counterexample_model();
    else if (name == "gbm") spec = gbm_model(get(p, "mu"), get(p, "sigma"));
    else spec = additive_ou_model(get(p, "theta"), get(p, "sigma"));
    apply_common(spec, p);
    return spec;
}

}  // namespace adaptsde

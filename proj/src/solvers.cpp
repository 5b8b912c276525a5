#include "adaptsde/solvers.hpp"

#include <cmath>

#include "adaptsde/errors.hpp"

namespace adaptsde {

double StepOutput::error_scaled(double C, int d) const {
    if (!(C > 0)) throw InvalidArgument("error_scaled: tolerance must be positive");
    return error_norm / (C * std::sqrt(static_cast<double>(d)));
}

const std::vector<MethodInfo>& method_registry() {
    static const std::vector<MethodInfo> reg{
        {Method::Euler, "euler", Formulation::Ito, 1, false, false, "Euler-Maruyama (no embedded pair)"},
        {Method::Milstein, "milstein", std::nullopt, 1, false, false, "no-area Milstein with embedded Euler"},
        {Method::Heun, "heun", Formulation::Stratonovich, 2, false, false, "Heun with embedded Euler"},
        {Method::Spark, "spark", Formulation::Stratonovich, 3, true, false,
         "splitting path Runge-Kutta with embedded Heun"},
        {Method::ItoHeunRandomized, "ito-heun-rand", Formulation::Ito, 2, false, true,
         "randomized Ito Heun with embedded Euler"},
    };
    return reg;
}

const MethodInfo& method_info(Method m) {
    for (const auto& mi : method_registry())
        if (mi.method == m) return mi;
    throw InvalidArgument("unknown method id");
}

Method parse_method(std::string_view name) {
    for (const auto& mi : method_registry())
        if (mi.name == name) return mi.method;
    throw InvalidArgument("unknown method '" + std::string(name) + "'");
}

void Stepper::prepare(const SdeSystem& sys, std::span<const double> y, const PathIncrement& inc) {
    const MethodInfo& mi = info();
    e_ = sys.state_dim();
    d_ = sys.noise_dim();
    if (static_cast<int>(y.size()) != e_)
        throw DimensionMismatch(std::string(mi.name) + ": state has " + std::to_string(y.size()) +
                                " entries, system expects " + std::to_string(e_));
    if (static_cast<int>(inc.W.size()) != d_)
        throw DimensionMismatch(std::string(mi.name) + ": W has " + std::to_string(inc.W.size()) +
                                " entries, system expects " + std::to_string(d_));
    if (!(inc.h > 0)) throw InvalidArgument(std::string(mi.name) + ": step size must be positive");
    if (mi.formulation && sys.formulation() != *mi.formulation)
        throw FormulationMismatch(std::string(mi.name) + " integrates " + to_string(*mi.formulation) +
                                  " systems, got " + to_string(sys.formulation()));
    if (mi.needs_H) {
        if (inc.H.empty()) throw MissingInput(std::string(mi.name) + ": space-time Levy area H not supplied");
        if (static_cast<int>(inc.H.size()) != d_) throw DimensionMismatch(std::string(mi.name) + ": H size");
    }
    if (mi.needs_z) {
        if (inc.z.empty()) throw MissingInput(std::string(mi.name) + ": Rademacher vector z not supplied");
        if (static_cast<int>(inc.z.size()) != d_) throw DimensionMismatch(std::string(mi.name) + ": z size");
        for (double s : inc.z)
            if (s != 1.0 && s != -1.0) throw InvalidArgument(std::string(mi.name) + ": z entries must be +1 or -1");
    }
    h_ = inc.h;
    W_ = inc.W;
    H_ = inc.H;
    z_ = inc.z;
    for (int k = 0; k < 3; ++k) {
        f_[k].resize(e_);
        g_[k].resize(static_cast<std::size_t>(e_) * d_);
    }
    s1_.resize(e_);
    s2_.resize(e_);
    tmp_.resize(e_);
}

void Stepper::eval(const SdeSystem& sys, std::span<const double> y, int k) {
    sys.drift(y, f_[k]);
    sys.diffusion(y, g_[k]);
}

void Stepper::combine(int k, std::span<const double> base, double a, double b, double c,
                      std::span<double> out) const {
    const double* g = g_[k].data();
    const double ah = a * h_;
    for (int i = 0; i < e_; ++i) {
        double s = base[i] + ah * f_[k][i];
        for (int j = 0; j < d_; ++j) {
            double w = b * W_[j];
            if (c != 0.0) w += c * wz_[j];
            s += g[i * d_ + j] * w;
        }
        out[i] = s;
    }
}

void Stepper::step(const SdeSystem& sys, std::span<const double> y, const PathIncrement& inc, StepOutput& out) {
    prepare(sys, y, inc);
    out.y_next.resize(e_);
    out.y_embedded.resize(e_);
    switch (method_) {
        case Method::Euler: euler(sys, y, out); break;
        case Method::Milstein: milstein(sys, y, out); break;
        case Method::Heun: heun(sys, y, out); break;
        case Method::Spark: spark(sys, y, out); break;
        case Method::ItoHeunRandomized: ito_heun(sys, y, out); break;
    }
    double s = 0.0;
    for (int i = 0; i < e_; ++i) {
        const double r = out.y_next[i] - out.y_embedded[i];
        s += r * r;
    }
    out.error_norm = std::sqrt(s);
}

void Stepper::euler(const SdeSystem& sys, std::span<const double> y, StepOutput& out) {
    eval(sys, y, 0);
    combine(0, y, 1.0, 1.0, 0.0, out.y_next);
    out.y_embedded = out.y_next;
    out.evaluations = 1;
}

void Stepper::milstein(const SdeSystem& sys, std::span<const double> y, StepOutput& out) {
    if (sys.second_order_support() == SecondOrderSupport::None)
        throw MissingInput("milstein: system '" + sys.name() + "' provides no second-order action");
    eval(sys, y, 0);
    combine(0, y, 1.0, 1.0, 0.0, out.y_embedded);
    sys.second_order(y, W_, W_, tmp_);
    for (int i = 0; i < e_; ++i) out.y_next[i] = out.y_embedded[i] + 0.5 * tmp_[i];
    if (sys.formulation() == Formulation::Ito) {
        // (W W^T - h I) form: subtract 1/2 h sum_i g_i' g_i.
        sys.correction(y, tmp_);
        for (int i = 0; i < e_; ++i) out.y_next[i] -= 0.5 * h_ * tmp_[i];
    }
    out.evaluations = 1;
}

void Stepper::heun(const SdeSystem& sys, std::span<const double> y, StepOutput& out) {
    eval(sys, y, 0);
    combine(0, y, 1.0, 1.0, 0.0, out.y_embedded);
    eval(sys, out.y_embedded, 1);
    combine(0, y, 0.5, 0.5, 0.0, s1_);
    combine(1, s1_, 0.5, 0.5, 0.0, out.y_next);
    out.evaluations = 2;
}

void Stepper::spark(const SdeSystem& sys, std::span<const double> y, StepOutput& out) {
    static const double kSqrt3 = std::sqrt(3.0);
    wz_.assign(H_.begin(), H_.end());
    eval(sys, y, 0);
    combine(0, y, 0.5, 0.5, kSqrt3, s1_);  // Y_{k+1/2}
    eval(sys, s1_, 1);
    combine(1, y, 1.0, 1.0, 0.0, s2_);  // Z_{k+1}
    eval(sys, s2_, 2);
    combine(0, y, kSparkA, kSparkA, 1.0, tmp_);
    combine(1, tmp_, kSparkB, kSparkB, 0.0, tmp_);
    combine(2, tmp_, kSparkA, kSparkA, -1.0, out.y_next);
    combine(0, y, 0.5, 0.5, 0.0, tmp_);
    combine(2, tmp_, 0.5, 0.5, 0.0, out.y_embedded);
    out.evaluations = 3;
}

void Stepper::ito_heun(const SdeSystem& sys, std::span<const double> y, StepOutput& out) {
    const double sh = std::sqrt(h_);
    wz_.resize(d_);
    for (int j = 0; j < d_; ++j) wz_[j] = sh * z_[j];
    eval(sys, y, 0);
    combine(0, y, 1.0, 1.0, 1.0, s1_);  // Z = y + F(y)(W + S)
    eval(sys, s1_, 1);
    combine(0, y, 0.5, 0.5, 0.5, tmp_);
    combine(1, tmp_, 0.5, 0.5, -0.5, out.y_next);
    combine(0, y, 1.0, 1.0, 0.0, out.y_embedded);
    out.evaluations = 2;
}

namespace {

StepOutput one_step(Method m, const SdeSystem& sys, std::span<const double> y, const PathIncrement& inc) {
    Stepper st(m);
    StepOutput out;
    st.step(sys, y, inc, out);
    return out;
}

}  // namespace

StepOutput euler_maruyama_step(const SdeSystem& sys, std::span<const double> y, const PathIncrement& inc) {
    return one_step(Method::Euler, sys, y, inc);
}
StepOutput no_area_milstein_step(const SdeSystem& sys, std::span<const double> y, const PathIncrement& inc) {
    return one_step(Method::Milstein, sys, y, inc);
}
StepOutput heun_step(const SdeSystem& sys, std::span<const double> y, const PathIncrement& inc) {
    return one_step(Method::Heun, sys, y, inc);
}
StepOutput spark_step(const SdeSystem& sys, std::span<const double> y, const PathIncrement& inc) {
    return one_step(Method::Spark, sys, y, inc);
}
StepOutput ito_heun_randomized_step(const SdeSystem& sys, std::span<const double> y, const PathIncrement& inc) {
    return one_step(Method::ItoHeunRandomized, sys, y, inc);
}

std::vector<double> conditional_levy_expectation(std::span<const double> W, std::span<const double> H) {
    const std::size_t d = W.size();
    if (!H.empty() && H.size() != d) throw DimensionMismatch("conditional_levy_expectation: H size");
    std::vector<double> m(d * d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double v = 0.5 * W[i] * W[j];
            if (!H.empty()) v += H[i] * W[j] - W[i] * H[j];
            m[i * d + j] = v;
        }
    return m;
}

}  // namespace adaptsde

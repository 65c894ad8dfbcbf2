#include "polarsdf/difftape.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace polarsdf::ad {

namespace {

[[noreturn]] void domain_fail(const char* op, double a, double b = NAN)
{
    std::ostringstream msg;
    msg << "domain error in '" << op << "' with operand " << a;
    if (!std::isnan(b)) msg << ", " << b;
    throw DomainError(msg.str());
}

void require_finite(const char* op, double v, double a, double b = NAN)
{
    if (!std::isfinite(v)) domain_fail(op, a, b);
}

} // namespace

void Tape::clear()
{
    ++gen_;
    value_.clear();
    first_.clear();
    parent_.clear();
    partial_.clear();
}

void Tape::check(const Var& v) const
{
    if (v.tape_ != this || v.gen_ != gen_) throw GenerationMismatch();
}

Var Tape::push(double value, std::size_t nparents)
{
    (void)nparents;
    if (first_.empty()) first_.push_back(0);
    const auto id = static_cast<std::int32_t>(value_.size());
    value_.push_back(value);
    first_.push_back(static_cast<std::uint32_t>(parent_.size()));
    return Var(this, id, gen_, value);
}

Var Tape::param(std::int32_t pid, double value)
{
    parent_.push_back(Ref::param(pid).raw);
    partial_.push_back(1.0);
    return push(value, 1);
}

Var Tape::node(double value, std::span<const Ref> parents, std::span<const double> partials)
{
    if (parents.size() != partials.size()) throw InvalidInput("node: parents and partials differ in length");
    if (!std::isfinite(value)) throw DomainError("custom node produced a non-finite value");
    for (std::size_t k = 0; k < parents.size(); ++k) {
        parent_.push_back(parents[k].raw);
        partial_.push_back(partials[k]);
    }
    return push(value, parents.size());
}

Var Tape::linear(std::span<const std::int32_t> params, std::span<const double> weights, double value)
{
    if (params.size() != weights.size()) throw InvalidInput("linear: params and weights differ in length");
    for (std::size_t k = 0; k < params.size(); ++k) {
        parent_.push_back(Ref::param(params[k]).raw);
        partial_.push_back(weights[k]);
    }
    return push(value, params.size());
}

void Tape::backward(const Var& out, double seed, std::vector<ParamGrad>& sink)
{
    if (out.is_constant()) return;
    check(out);
    adj_.assign(static_cast<std::size_t>(out.id_) + 1, 0.0);
    adj_[out.id_] = seed;
    for (std::int32_t i = out.id_; i >= 0; --i) {
        const double a = adj_[i];
        if (a == 0.0) continue;
        for (std::uint32_t k = first_[i]; k < first_[i + 1]; ++k) {
            const std::int32_t p = parent_[k];
            if (p >= 0) {
                adj_[p] += a * partial_[k];
            } else {
                sink.push_back({-p - 1, a * partial_[k]});
            }
        }
    }
}

std::map<std::int32_t, double> Tape::gradient(const Var& out)
{
    std::vector<ParamGrad> raw;
    backward(out, 1.0, raw);
    std::map<std::int32_t, double> g;
    for (const auto& e : raw) g[e.param] += e.grad;
    return g;
}

std::vector<double> Tape::adjoints(const Var& out)
{
    std::vector<ParamGrad> ignored;
    backward(out, 1.0, ignored);
    std::vector<double> a(size(), 0.0);
    std::copy(adj_.begin(), adj_.end(), a.begin());
    return a;
}

Var record_unary(const char* op, const Var& a, double value, double da)
{
    require_finite(op, value, a.value());
    if (a.is_constant()) return Var(value);
    Tape& t = *a.tape();
    t.check(a);
    t.parent_.push_back(a.id());
    t.partial_.push_back(da);
    return t.push(value, 1);
}

Var record_binary(const char* op, const Var& a, const Var& b, double value, double da, double db)
{
    require_finite(op, value, a.value(), b.value());
    if (a.is_constant() && b.is_constant()) return Var(value);
    if (a.is_constant()) return record_unary(op, b, value, db);
    if (b.is_constant()) return record_unary(op, a, value, da);
    if (a.tape() != b.tape()) throw InvalidInput(std::string("operands of '") + op + "' live on different tapes");
    Tape& t = *a.tape();
    t.check(a);
    t.check(b);
    t.parent_.push_back(a.id());
    t.partial_.push_back(da);
    t.parent_.push_back(b.id());
    t.partial_.push_back(db);
    return t.push(value, 2);
}

Var operator+(const Var& a, const Var& b) { return record_binary("+", a, b, a.value() + b.value(), 1.0, 1.0); }
Var operator-(const Var& a, const Var& b) { return record_binary("-", a, b, a.value() - b.value(), 1.0, -1.0); }
Var operator*(const Var& a, const Var& b) { return record_binary("*", a, b, a.value() * b.value(), b.value(), a.value()); }

Var operator/(const Var& a, const Var& b)
{
    if (b.value() == 0.0) domain_fail("/", a.value(), b.value());
    const double q = a.value() / b.value();
    return record_binary("/", a, b, q, 1.0 / b.value(), -q / b.value());
}

Var operator-(const Var& a) { return record_unary("neg", a, -a.value(), -1.0); }

Var pow(const Var& a, double p)
{
    const double x = a.value();
    if (x < 0.0 && p != std::floor(p)) domain_fail("pow", x, p);
    if (x == 0.0 && p < 1.0) domain_fail("pow", x, p);
    return record_unary("pow", a, std::pow(x, p), p * std::pow(x, p - 1.0));
}

Var exp(const Var& a)
{
    const double e = std::exp(a.value());
    return record_unary("exp", a, e, e);
}

Var log(const Var& a)
{
    if (!(a.value() > 0.0)) domain_fail("log", a.value());
    return record_unary("log", a, std::log(a.value()), 1.0 / a.value());
}

Var sqrt(const Var& a)
{
    const double x = a.value();
    if (x < 0.0) domain_fail("sqrt", x);
    const double r = std::sqrt(x);
    // d sqrt at 0 is unbounded; only allowed for constants.
    if (r == 0.0 && !a.is_constant()) domain_fail("sqrt", x);
    return record_unary("sqrt", a, r, r == 0.0 ? 0.0 : 0.5 / r);
}

Var sin(const Var& a) { return record_unary("sin", a, std::sin(a.value()), std::cos(a.value())); }
Var cos(const Var& a) { return record_unary("cos", a, std::cos(a.value()), -std::sin(a.value())); }

Var atan2(const Var& y, const Var& x)
{
    const double r2 = x.value() * x.value() + y.value() * y.value();
    if (r2 == 0.0) domain_fail("atan2", y.value(), x.value());
    return record_binary("atan2", y, x, std::atan2(y.value(), x.value()), x.value() / r2, -y.value() / r2);
}

Var abs(const Var& a)
{
    const double x = a.value();
    return record_unary("abs", a, std::abs(x), x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
}

Var square(const Var& a) { return record_unary("square", a, a.value() * a.value(), 2.0 * a.value()); }

Var min(const Var& a, const Var& b)
{
    const bool first = a.value() <= b.value();
    return record_binary("min", a, b, first ? a.value() : b.value(), first ? 1.0 : 0.0, first ? 0.0 : 1.0);
}

Var max(const Var& a, const Var& b)
{
    const bool first = a.value() >= b.value();
    return record_binary("max", a, b, first ? a.value() : b.value(), first ? 1.0 : 0.0, first ? 0.0 : 1.0);
}

Var clamp(const Var& a, double lo, double hi)
{
    const double x = a.value();
    if (x < lo) return record_unary("clamp", a, lo, 0.0);
    if (x > hi) return record_unary("clamp", a, hi, 0.0);
    return record_unary("clamp", a, x, 1.0);
}

Var sigmoid(const Var& a)
{
    const double x = a.value();
    const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    return record_unary("sigmoid", a, s, s * (1.0 - s));
}

GradientCheckReport gradient_check(const CheckedFunction& f, std::vector<double> theta, const GradientCheckOptions& opt,
                                   std::span<const std::size_t> subset)
{
    std::vector<double> analytic(theta.size(), 0.0);
    f(theta, &analytic);

    std::vector<std::size_t> indices(subset.begin(), subset.end());
    if (indices.empty()) {
        indices.resize(theta.size());
        for (std::size_t i = 0; i < theta.size(); ++i) indices[i] = i;
    }

    auto eval_at = [&](std::size_t i, double offset) {
        const double saved = theta[i];
        theta[i] = saved + offset;
        const double v = f(theta, nullptr);
        theta[i] = saved;
        return v;
    };

    GradientCheckReport rep;
    rep.pass = true;
    for (std::size_t i : indices) {
        const double h = opt.h;
        double numeric;
        if (opt.fourth_order) {
            numeric = (-eval_at(i, 2 * h) + 8 * eval_at(i, h) - 8 * eval_at(i, -h) + eval_at(i, -2 * h)) / (12 * h);
        } else {
            numeric = (eval_at(i, h) - eval_at(i, -h)) / (2 * h);
        }
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), opt.floor});
        const double rel = std::abs(numeric - analytic[i]) / denom;
        ++rep.checked;
        if (rel > rep.max_rel_error || !std::isfinite(rel)) {
            rep.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
            rep.worst_index = i;
            rep.worst_analytic = analytic[i];
            rep.worst_numeric = numeric;
        }
    }
    rep.pass = rep.max_rel_error < opt.tol;
    return rep;
}

} // namespace polarsdf::ad

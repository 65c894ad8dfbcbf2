#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "polarsdf/error.hpp"

namespace polarsdf::ad {

class Tape;

/// Parent reference inside a tape: a node id (>= 0) or an external parameter slot (< 0).
struct Ref {
    std::int32_t raw = 0;

    static Ref node(std::int32_t id) { return {id}; }
    static Ref param(std::int32_t pid) { return {-pid - 1}; }
    bool is_param() const { return raw < 0; }
    std::int32_t param_id() const { return -raw - 1; }
};

/// A scalar, either a plain constant (no tape) or a node recorded on a tape.
/// Operations on constants fold to constants and record nothing.
class Var {
public:
    Var() = default;
    Var(double v) : value_(v) {} // NOLINT(google-explicit-constructor)

    double value() const { return value_; }
    bool is_constant() const { return tape_ == nullptr; }
    Tape* tape() const { return tape_; }
    std::int32_t id() const { return id_; }
    std::uint32_t generation() const { return gen_; }
    Ref ref() const { return Ref::node(id_); }

private:
    friend class Tape;
    Var(Tape* tape, std::int32_t id, std::uint32_t gen, double v) : tape_(tape), id_(id), gen_(gen), value_(v) {}

    Tape* tape_ = nullptr;
    std::int32_t id_ = -1;
    std::uint32_t gen_ = 0;
    double value_ = 0.0;
};

/// Thrown when an op is evaluated outside its domain or yields a non-finite value.
class DomainError : public NumericalFailure {
public:
    explicit DomainError(const std::string& what) : NumericalFailure(what) {}
};

class GenerationMismatch : public InvalidInput {
public:
    GenerationMismatch() : InvalidInput("variable belongs to a stale tape generation") {}
};

struct ParamGrad {
    std::int32_t param;
    double grad;
};

/// Append-only reverse-mode tape. Insertion order is a topological order, so
/// the backward sweep is a single reverse pass over the node list.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Drops all nodes and bumps the generation; outstanding Vars become stale.
    void clear();

    std::size_t size() const { return value_.size(); }
    std::uint32_t generation() const { return gen_; }

    /// Leaf bound to external parameter `pid`.
    Var param(std::int32_t pid, double value);

    /// Generic node with explicit local partials.
    Var node(double value, std::span<const Ref> parents, std::span<const double> partials);
    Var node(double value, std::initializer_list<Ref> parents, std::initializer_list<double> partials)
    {
        return node(value, std::span<const Ref>(parents.begin(), parents.size()),
                    std::span<const double>(partials.begin(), partials.size()));
    }

    /// Node for sum_k weights[k] * params[k] with fan-in of any size. Parameter
    /// values live outside the tape, so the caller supplies the forward value.
    Var linear(std::span<const std::int32_t> params, std::span<const double> weights, double value);

    /// Reverse accumulation from `out` seeded with `seed`. Every
    /// (parameter, contribution) pair is appended to `sink` in node order;
    /// repeated parameters appear repeatedly.
    void backward(const Var& out, double seed, std::vector<ParamGrad>& sink);

    /// Convenience: gradient map parameter -> d out / d parameter.
    std::map<std::int32_t, double> gradient(const Var& out);

    /// d out / d node for every node reached (sized like the tape); for tests.
    std::vector<double> adjoints(const Var& out);

private:
    friend Var record_unary(const char*, const Var&, double, double);
    friend Var record_binary(const char*, const Var&, const Var&, double, double, double);

    Var push(double value, std::size_t nparents);
    void check(const Var& v) const;

    std::uint32_t gen_ = 1;
    std::vector<double> value_;
    std::vector<std::uint32_t> first_;
    std::vector<std::int32_t> parent_;
    std::vector<double> partial_;
    std::vector<double> adj_;
};

// Recording helpers for the op set: value, and local partials.
Var record_unary(const char* op, const Var& a, double value, double da);
Var record_binary(const char* op, const Var& a, const Var& b, double value, double da, double db);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }

Var pow(const Var& a, double p);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var atan2(const Var& y, const Var& x);
Var abs(const Var& a);
Var square(const Var& a);
/// Ties send the whole gradient to the first operand.
Var min(const Var& a, const Var& b);
Var max(const Var& a, const Var& b);
/// Zero gradient outside [lo, hi].
Var clamp(const Var& a, double lo, double hi);
Var sigmoid(const Var& a);

inline double value_of(double v) { return v; }
inline double value_of(const Var& v) { return v.value(); }

/// Finite-difference check of an analytic gradient.
struct GradientCheckReport {
    bool pass = false;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checked = 0;
};

struct GradientCheckOptions {
    double h = 1e-5;
    double tol = 1e-4;
    double floor = 1e-8;
    /// Use the 4-point central stencil (O(h^4)) instead of the 2-point one.
    bool fourth_order = false;
};

/// `f(theta, grad)` returns the scalar and, if `grad` is non-null, fills the
/// analytic gradient (same length as theta). Only indices in `subset` are
/// perturbed; an empty subset means all.
using CheckedFunction = std::function<double(std::span<const double>, std::vector<double>*)>;

GradientCheckReport gradient_check(const CheckedFunction& f, std::vector<double> theta, const GradientCheckOptions& opt,
                                   std::span<const std::size_t> subset = {});

} // namespace polarsdf::ad

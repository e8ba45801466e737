#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace nbv::ad {

// Reverse-mode scalar tape. Each node stores at most two parents with the
// local partial derivatives; backward() sweeps the tape once.
class Tape {
  public:
    struct Node {
        double w0 = 0.0, w1 = 0.0;
        int32_t p0 = -1, p1 = -1;
    };

    int32_t leaf() {
        nodes_.push_back(Node{});
        return static_cast<int32_t>(nodes_.size() - 1);
    }

    int32_t unary(int32_t p, double w) {
        nodes_.push_back(Node{w, 0.0, p, -1});
        return static_cast<int32_t>(nodes_.size() - 1);
    }

    int32_t binary(int32_t p0, double w0, int32_t p1, double w1) {
        nodes_.push_back(Node{w0, w1, p0, p1});
        return static_cast<int32_t>(nodes_.size() - 1);
    }

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }
    void reserve(std::size_t n) { nodes_.reserve(n); }

    // Propagates pre-seeded adjoints (adjoint.size() == size()) backwards.
    void backward(std::span<double> adjoint) const {
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            double a = adjoint[i];
            if (a == 0.0) continue;
            const Node& n = nodes_[i];
            if (n.p0 >= 0) adjoint[static_cast<std::size_t>(n.p0)] += n.w0 * a;
            if (n.p1 >= 0) adjoint[static_cast<std::size_t>(n.p1)] += n.w1 * a;
        }
    }

  private:
    std::vector<Node> nodes_;
};

// A tracked scalar. Vars with idx < 0 are constants and record nothing.
struct Var {
    double v = 0.0;
    int32_t idx = -1;
    Tape* tape = nullptr;

    Var() = default;
    Var(double value) : v(value) {}
    Var(double value, int32_t i, Tape* t) : v(value), idx(i), tape(t) {}

    static Var leaf(double value, Tape& t) { return Var(value, t.leaf(), &t); }
};

inline double value_of(const Var& x) { return x.v; }

inline Tape* tape_of(const Var& a, const Var& b) {
    return a.tape ? a.tape : b.tape;
}

inline Var operator+(const Var& a, const Var& b) {
    Tape* t = tape_of(a, b);
    if (!t) return Var(a.v + b.v);
    if (a.idx < 0) return Var(a.v + b.v, t->unary(b.idx, 1.0), t);
    if (b.idx < 0) return Var(a.v + b.v, t->unary(a.idx, 1.0), t);
    return Var(a.v + b.v, t->binary(a.idx, 1.0, b.idx, 1.0), t);
}

inline Var operator-(const Var& a, const Var& b) {
    Tape* t = tape_of(a, b);
    if (!t) return Var(a.v - b.v);
    if (a.idx < 0) return Var(a.v - b.v, t->unary(b.idx, -1.0), t);
    if (b.idx < 0) return Var(a.v - b.v, t->unary(a.idx, 1.0), t);
    return Var(a.v - b.v, t->binary(a.idx, 1.0, b.idx, -1.0), t);
}

inline Var operator-(const Var& a) {
    if (!a.tape) return Var(-a.v);
    return Var(-a.v, a.tape->unary(a.idx, -1.0), a.tape);
}

inline Var operator*(const Var& a, const Var& b) {
    Tape* t = tape_of(a, b);
    if (!t) return Var(a.v * b.v);
    if (a.idx < 0) return Var(a.v * b.v, t->unary(b.idx, a.v), t);
    if (b.idx < 0) return Var(a.v * b.v, t->unary(a.idx, b.v), t);
    return Var(a.v * b.v, t->binary(a.idx, b.v, b.idx, a.v), t);
}

inline Var operator/(const Var& a, const Var& b) {
    Tape* t = tape_of(a, b);
    double inv = 1.0 / b.v;
    double v = a.v * inv;
    if (!t) return Var(v);
    if (a.idx < 0) return Var(v, t->unary(b.idx, -v * inv), t);
    if (b.idx < 0) return Var(v, t->unary(a.idx, inv), t);
    return Var(v, t->binary(a.idx, inv, b.idx, -v * inv), t);
}

inline Var operator+(const Var& a, double b) { return a + Var(b); }
inline Var operator+(double a, const Var& b) { return Var(a) + b; }
inline Var operator-(const Var& a, double b) { return a - Var(b); }
inline Var operator-(double a, const Var& b) { return Var(a) - b; }
inline Var operator*(const Var& a, double b) { return a * Var(b); }
inline Var operator*(double a, const Var& b) { return Var(a) * b; }
inline Var operator/(const Var& a, double b) { return a / Var(b); }
inline Var operator/(double a, const Var& b) { return Var(a) / b; }

inline bool operator<(const Var& a, const Var& b) { return a.v < b.v; }
inline bool operator>(const Var& a, const Var& b) { return a.v > b.v; }

inline Var unary_op(const Var& a, double v, double dv) {
    if (!a.tape) return Var(v);
    return Var(v, a.tape->unary(a.idx, dv), a.tape);
}

inline Var exp(const Var& a) {
    double v = std::exp(a.v);
    return unary_op(a, v, v);
}

inline Var log(const Var& a) { return unary_op(a, std::log(a.v), 1.0 / a.v); }

inline Var sqrt(const Var& a) {
    double v = std::sqrt(a.v);
    return unary_op(a, v, 0.5 / v);
}

inline Var sin(const Var& a) { return unary_op(a, std::sin(a.v), std::cos(a.v)); }
inline Var cos(const Var& a) { return unary_op(a, std::cos(a.v), -std::sin(a.v)); }

inline Var erf(const Var& a) {
    constexpr double two_over_sqrt_pi = 1.1283791670955126;
    return unary_op(a, std::erf(a.v), two_over_sqrt_pi * std::exp(-a.v * a.v));
}

// Branch-by-value min/max; the subgradient follows the active branch.
inline Var min(const Var& a, const Var& b) { return a.v <= b.v ? a : b; }
inline Var max(const Var& a, const Var& b) { return a.v >= b.v ? a : b; }

}  // namespace nbv::ad

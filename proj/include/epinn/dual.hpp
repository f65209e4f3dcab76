#pragma once

#include <cmath>

#include "epinn/common.hpp"

namespace epinn {

// Forward-mode scalars, generic over the component type T. With T = double
// they propagate input derivatives directly; with T = Var every component
// arithmetic lands on a tape, so a reverse sweep afterwards yields parameter
// gradients of expressions that already contain input derivatives.

template <class T>
struct Dual {
    T v; // value
    T d; // tangent

    Dual(T value, T tangent) : v(value), d(tangent) {}
};

template <class T> Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
    return {a.v + b.v, a.d + b.d};
}
template <class T> Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
    return {a.v - b.v, a.d - b.d};
}
template <class T> Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
    return {a.v * b.v, a.d * b.v + a.v * b.d};
}
template <class T> Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
    auto q = a.v / b.v;
    return {q, (a.d - q * b.d) / b.v};
}
template <class T> Dual<T> operator-(const Dual<T>& a) { return {-a.v, -a.d}; }

template <class T> Dual<T> operator+(const Dual<T>& a, double c) { return {a.v + c, a.d}; }
template <class T> Dual<T> operator+(double c, const Dual<T>& a) { return {c + a.v, a.d}; }
template <class T> Dual<T> operator-(const Dual<T>& a, double c) { return {a.v - c, a.d}; }
template <class T> Dual<T> operator-(double c, const Dual<T>& a) { return {c - a.v, -a.d}; }
template <class T> Dual<T> operator*(const Dual<T>& a, double c) { return {a.v * c, a.d * c}; }
template <class T> Dual<T> operator*(double c, const Dual<T>& a) { return {c * a.v, c * a.d}; }
template <class T> Dual<T> operator/(const Dual<T>& a, double c) {
    const double r = 1.0 / c;
    return {a.v * r, a.d * r};
}
template <class T> Dual<T> operator/(double c, const Dual<T>& a) {
    auto q = c / a.v;
    return {q, -(q / a.v) * a.d};
}

// f, f' supplied by each elementary function.
template <class T, class F, class DF>
Dual<T> dual_chain(const Dual<T>& a, F f, DF df) {
    auto fv = f(a.v);
    return {fv, df(a.v, fv) * a.d};
}

template <class T> Dual<T> tanh(const Dual<T>& a) {
    using std::tanh;
    auto t = tanh(a.v);
    return {t, (1.0 - t * t) * a.d};
}
template <class T> Dual<T> exp(const Dual<T>& a) {
    using std::exp;
    auto e = exp(a.v);
    return {e, e * a.d};
}
template <class T> Dual<T> log(const Dual<T>& a) {
    using std::log;
    return {log(a.v), a.d / a.v};
}
template <class T> Dual<T> sin(const Dual<T>& a) {
    using std::cos;
    using std::sin;
    return {sin(a.v), cos(a.v) * a.d};
}
template <class T> Dual<T> cos(const Dual<T>& a) {
    using std::cos;
    using std::sin;
    return {cos(a.v), -(sin(a.v) * a.d)};
}
template <class T> Dual<T> sqrt(const Dual<T>& a) {
    using std::sqrt;
    auto s = sqrt(a.v);
    return {s, a.d / (2.0 * s)};
}
template <class T> Dual<T> square(const Dual<T>& a) {
    return {square(a.v), 2.0 * (a.v * a.d)};
}
template <class T> Dual<T> softplus(const Dual<T>& a) {
    return {softplus(a.v), sigmoid(a.v) * a.d};
}
template <class T> Dual<T> sigmoid(const Dual<T>& a) {
    auto s = sigmoid(a.v);
    return {s, s * (1.0 - s) * a.d};
}

using DualValue = Dual<double>;

// Second-order forward scalar: tracks two directional tangents and the
// mixed second derivative along them. Seeding both directions with the
// same unit vector e makes d12 the pure second derivative along e.
template <class T>
struct HyperDual {
    T v;
    T d1;
    T d2;
    T d12;

    HyperDual(T value, T t1, T t2, T t12) : v(value), d1(t1), d2(t2), d12(t12) {}
};

template <class T>
HyperDual<T> operator+(const HyperDual<T>& a, const HyperDual<T>& b) {
    return {a.v + b.v, a.d1 + b.d1, a.d2 + b.d2, a.d12 + b.d12};
}
template <class T>
HyperDual<T> operator-(const HyperDual<T>& a, const HyperDual<T>& b) {
    return {a.v - b.v, a.d1 - b.d1, a.d2 - b.d2, a.d12 - b.d12};
}
template <class T>
HyperDual<T> operator*(const HyperDual<T>& a, const HyperDual<T>& b) {
    return {a.v * b.v,
            a.d1 * b.v + a.v * b.d1,
            a.d2 * b.v + a.v * b.d2,
            a.d12 * b.v + a.d1 * b.d2 + a.d2 * b.d1 + a.v * b.d12};
}
template <class T> HyperDual<T> operator-(const HyperDual<T>& a) {
    return {-a.v, -a.d1, -a.d2, -a.d12};
}

template <class T> HyperDual<T> operator+(const HyperDual<T>& a, double c) {
    return {a.v + c, a.d1, a.d2, a.d12};
}
template <class T> HyperDual<T> operator+(double c, const HyperDual<T>& a) {
    return {c + a.v, a.d1, a.d2, a.d12};
}
template <class T> HyperDual<T> operator-(const HyperDual<T>& a, double c) {
    return {a.v - c, a.d1, a.d2, a.d12};
}
template <class T> HyperDual<T> operator-(double c, const HyperDual<T>& a) {
    return {c - a.v, -a.d1, -a.d2, -a.d12};
}
template <class T> HyperDual<T> operator*(const HyperDual<T>& a, double c) {
    return {a.v * c, a.d1 * c, a.d2 * c, a.d12 * c};
}
template <class T> HyperDual<T> operator*(double c, const HyperDual<T>& a) {
    return {c * a.v, c * a.d1, c * a.d2, c * a.d12};
}
template <class T> HyperDual<T> operator/(const HyperDual<T>& a, double c) {
    const double r = 1.0 / c;
    return a * r;
}

// f(a) via first and second derivative of f at a.v.
template <class T>
HyperDual<T> hd_chain(const HyperDual<T>& a, T f, T df, T d2f) {
    return {f, df * a.d1, df * a.d2, df * a.d12 + d2f * (a.d1 * a.d2)};
}

template <class T> HyperDual<T> recip(const HyperDual<T>& a) {
    auto r = 1.0 / a.v;
    auto r2 = r * r;
    return hd_chain(a, r, -r2, 2.0 * (r2 * r));
}
template <class T>
HyperDual<T> operator/(const HyperDual<T>& a, const HyperDual<T>& b) {
    return a * recip(b);
}
template <class T> HyperDual<T> operator/(double c, const HyperDual<T>& a) {
    return c * recip(a);
}

template <class T> HyperDual<T> tanh(const HyperDual<T>& a) {
    using std::tanh;
    auto t = tanh(a.v);
    auto dt = 1.0 - t * t;
    return hd_chain(a, t, dt, -2.0 * (t * dt));
}
template <class T> HyperDual<T> exp(const HyperDual<T>& a) {
    using std::exp;
    auto e = exp(a.v);
    return hd_chain(a, e, e, e);
}
template <class T> HyperDual<T> log(const HyperDual<T>& a) {
    using std::log;
    auto r = 1.0 / a.v;
    return hd_chain(a, log(a.v), r, -(r * r));
}
template <class T> HyperDual<T> sin(const HyperDual<T>& a) {
    using std::cos;
    using std::sin;
    auto s = sin(a.v);
    return hd_chain(a, s, cos(a.v), -s);
}
template <class T> HyperDual<T> cos(const HyperDual<T>& a) {
    using std::cos;
    using std::sin;
    auto c = cos(a.v);
    return hd_chain(a, c, -sin(a.v), -c);
}
template <class T> HyperDual<T> sqrt(const HyperDual<T>& a) {
    using std::sqrt;
    auto s = sqrt(a.v);
    auto ds = 0.5 / s;
    return hd_chain(a, s, ds, -0.5 * (ds / a.v));
}
template <class T> HyperDual<T> square(const HyperDual<T>& a) {
    T two_a = 2.0 * a.v;
    return {square(a.v), two_a * a.d1, two_a * a.d2,
            two_a * a.d12 + 2.0 * (a.d1 * a.d2)};
}
template <class T> HyperDual<T> softplus(const HyperDual<T>& a) {
    auto s = sigmoid(a.v);
    return hd_chain(a, softplus(a.v), s, s * (1.0 - s));
}
template <class T> HyperDual<T> sigmoid(const HyperDual<T>& a) {
    auto s = sigmoid(a.v);
    auto ds = s * (1.0 - s);
    return hd_chain(a, s, ds, ds * (1.0 - 2.0 * s));
}

} // namespace epinn

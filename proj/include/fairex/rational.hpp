#pragma once

#include <compare>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fairex {

struct RationalError : std::overflow_error {
    using std::overflow_error::overflow_error;
};

/// Exact rational over 64-bit integers. Always normalized: positive
/// denominator, reduced terms. Intermediates use 128-bit arithmetic and
/// throw RationalError instead of silently wrapping.
class Rational {
public:
    using Int = long long;

    Rational() = default;
    Rational(Int value) : num_(value) {}  // NOLINT: implicit by design
    Rational(Int num, Int den) : num_(num), den_(den) { normalize(); }

    Int numerator() const { return num_; }
    Int denominator() const { return den_; }

    friend bool operator==(const Rational&, const Rational&) = default;

    friend std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
        const Wide left = Wide(a.num_) * b.den_;
        const Wide right = Wide(b.num_) * a.den_;
        if (left < right) return std::strong_ordering::less;
        if (left > right) return std::strong_ordering::greater;
        return std::strong_ordering::equal;
    }

    Rational operator-() const { return Rational(-num_, den_, Raw{}); }

    friend Rational operator+(const Rational& a, const Rational& b) {
        return from_wide(Wide(a.num_) * b.den_ + Wide(b.num_) * a.den_, Wide(a.den_) * b.den_);
    }
    friend Rational operator-(const Rational& a, const Rational& b) { return a + (-b); }
    friend Rational operator*(const Rational& a, const Rational& b) {
        return from_wide(Wide(a.num_) * b.num_, Wide(a.den_) * b.den_);
    }
    friend Rational operator/(const Rational& a, const Rational& b) {
        if (b.num_ == 0) throw RationalError("division by zero");
        return from_wide(Wide(a.num_) * b.den_, Wide(a.den_) * b.num_);
    }

    Rational& operator+=(const Rational& o) { return *this = *this + o; }
    Rational& operator-=(const Rational& o) { return *this = *this - o; }
    Rational& operator*=(const Rational& o) { return *this = *this * o; }
    Rational& operator/=(const Rational& o) { return *this = *this / o; }

    std::string str() const {
        return den_ == 1 ? std::to_string(num_)
                         : std::to_string(num_) + "/" + std::to_string(den_);
    }

private:
    using Wide = __int128;
    struct Raw {};
    Rational(Int num, Int den, Raw) : num_(num), den_(den) {}

    static Rational from_wide(Wide num, Wide den) {
        if (den == 0) throw RationalError("zero denominator");
        if (den < 0) {
            num = -num;
            den = -den;
        }
        const Wide g = wide_gcd(num < 0 ? -num : num, den);
        if (g != 0) {
            num /= g;
            den /= g;
        }
        constexpr Wide kMax = 0x7fffffffffffffff;
        if (num > kMax || num < -kMax || den > kMax) {
            throw RationalError("rational exceeds 64-bit range");
        }
        return Rational(static_cast<Int>(num), static_cast<Int>(den), Raw{});
    }

    static Wide wide_gcd(Wide a, Wide b) {
        while (b != 0) {
            const Wide t = a % b;
            a = b;
            b = t;
        }
        return a;
    }

    void normalize() {
        if (den_ == 0) throw RationalError("zero denominator");
        if (den_ < 0) {
            num_ = -num_;
            den_ = -den_;
        }
        const Int g = std::gcd(num_ < 0 ? -num_ : num_, den_);
        if (g != 0) {
            num_ /= g;
            den_ /= g;
        }
    }

    Int num_ = 0;
    Int den_ = 1;
};

inline double to_double(const Rational& r) {
    return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

}  // namespace fairex

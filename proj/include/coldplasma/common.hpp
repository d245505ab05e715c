#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace coldplasma {

using Complex = std::complex<double>;

// Nondimensional defaults; SI values selectable per scenario.
struct Constants {
    double eps0 = 1.0;
    double c = 1.0;
};

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct ZeroExternalField : Error { using Error::Error; };
struct DegenerateDirection : Error { using Error::Error; };
struct SingularShift : Error { using Error::Error; };
struct NonPositiveZeta : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct CFLViolation : Error { using Error::Error; };
struct IterativeSolveFailure : Error { using Error::Error; };
struct NonAdmissibleLambda : Error { using Error::Error; };
struct NearSingularShift : Error { using Error::Error; };
struct EigensolveFailure : Error { using Error::Error; };
struct ConvergenceFailure : Error { using Error::Error; };
struct UnsupportedFace : Error { using Error::Error; };
struct IncompatibleInitialData : Error { using Error::Error; };
struct DegenerateSeries : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct ValidationError : Error { using Error::Error; };

template <class T>
struct V3 {
    std::array<T, 3> v{};

    T& operator[](int i) { return v[static_cast<size_t>(i)]; }
    const T& operator[](int i) const { return v[static_cast<size_t>(i)]; }

    V3 operator+(const V3& o) const { return {{v[0] + o.v[0], v[1] + o.v[1], v[2] + o.v[2]}}; }
    V3 operator-(const V3& o) const { return {{v[0] - o.v[0], v[1] - o.v[1], v[2] - o.v[2]}}; }
    V3 operator*(T s) const { return {{v[0] * s, v[1] * s, v[2] * s}}; }
};

using Vec3 = V3<double>;
using CVec3 = V3<Complex>;

inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {{a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]}};
}
inline Complex cdot(const CVec3& a, const CVec3& b) {
    // Hermitian: conj(a).b
    return std::conj(a[0]) * b[0] + std::conj(a[1]) * b[1] + std::conj(a[2]) * b[2];
}
inline double cnorm(const CVec3& a) { return std::sqrt(std::real(cdot(a, a))); }

// 3x3 matrix, row-major.
template <class T>
struct M3 {
    std::array<T, 9> m{};

    T& operator()(int r, int c) { return m[static_cast<size_t>(3 * r + c)]; }
    const T& operator()(int r, int c) const { return m[static_cast<size_t>(3 * r + c)]; }

    static M3 identity() {
        M3 out;
        out(0, 0) = T(1); out(1, 1) = T(1); out(2, 2) = T(1);
        return out;
    }

    M3 operator+(const M3& o) const {
        M3 out;
        for (size_t i = 0; i < 9; ++i) out.m[i] = m[i] + o.m[i];
        return out;
    }
    M3 operator-(const M3& o) const {
        M3 out;
        for (size_t i = 0; i < 9; ++i) out.m[i] = m[i] - o.m[i];
        return out;
    }
    M3 operator*(T s) const {
        M3 out;
        for (size_t i = 0; i < 9; ++i) out.m[i] = m[i] * s;
        return out;
    }
    M3 operator*(const M3& o) const {
        M3 out;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                T acc{};
                for (int k = 0; k < 3; ++k) acc += (*this)(r, k) * o(k, c);
                out(r, c) = acc;
            }
        return out;
    }
    V3<T> operator*(const V3<T>& x) const {
        V3<T> out;
        for (int r = 0; r < 3; ++r)
            out[r] = (*this)(r, 0) * x[0] + (*this)(r, 1) * x[1] + (*this)(r, 2) * x[2];
        return out;
    }

    M3 adjointM() const {
        M3 out;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                if constexpr (std::is_same_v<T, Complex>)
                    out(r, c) = std::conj((*this)(c, r));
                else
                    out(r, c) = (*this)(c, r);
            }
        return out;
    }

    double fnorm() const {
        double s = 0;
        for (const auto& e : m) s += std::norm(Complex(e));
        return std::sqrt(s);
    }
};

using Mat3 = M3<double>;
using CMat3 = M3<Complex>;

inline CMat3 to_complex(const Mat3& a) {
    CMat3 out;
    for (size_t i = 0; i < 9; ++i) out.m[i] = Complex(a.m[i], 0.0);
    return out;
}

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace coldplasma

#pragma once

#include <algorithm>

#include "coldplasma/medium.hpp"

namespace coldplasma {

// Local orthonormal frame with e3 along the external field direction.
struct StixFrame {
    Vec3 e1, e2, e3;
};

// Tie-break: e1 is the normalized projection, onto the plane normal to b, of
// the canonical axis with the smallest |component along b|.
inline StixFrame stix_frame(const Vec3& b) {
    if (std::abs(norm(b) - 1.0) > 1e-6)
        throw DegenerateDirection("stix_frame: |b| deviates from 1 by more than 1e-6");
    int axis = 0;
    double best = std::abs(b[0]);
    for (int i = 1; i < 3; ++i)
        if (std::abs(b[i]) < best) {
            best = std::abs(b[i]);
            axis = i;
        }
    Vec3 a{};
    a[axis] = 1.0;
    Vec3 e1 = a - b * dot(a, b);
    e1 = e1 * (1.0 / norm(e1));
    const Vec3 e2 = cross(b, e1); // then e1 x e2 = b
    return {e1, e2, b};
}

// M_s v = Omega_c (b x v) + nu v.
inline Mat3 assemble_M(double nu, double Omega_c, const Vec3& b) {
    Mat3 m = Mat3::identity() * nu;
    m(0, 1) += -Omega_c * b[2];
    m(0, 2) += Omega_c * b[1];
    m(1, 0) += Omega_c * b[2];
    m(1, 2) += -Omega_c * b[0];
    m(2, 0) += -Omega_c * b[1];
    m(2, 1) += Omega_c * b[0];
    return m;
}

namespace detail {

inline Mat3 frame_matrix(const StixFrame& f) {
    Mat3 s;
    for (int r = 0; r < 3; ++r) {
        s(r, 0) = f.e1[r];
        s(r, 1) = f.e2[r];
        s(r, 2) = f.e3[r];
    }
    return s;
}

// S * F * S^T with real S.
inline CMat3 rotate_from_frame(const Mat3& s, const CMat3& f) {
    CMat3 out;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            Complex acc{};
            for (int a = 0; a < 3; ++a)
                for (int bb = 0; bb < 3; ++bb) acc += s(r, a) * f(a, bb) * s(c, bb);
            out(r, c) = acc;
        }
    return out;
}

// Cofactor closed form of (sigma I + M_s)^{-1} in the Stix frame, then
// rotated back to the lab frame. det = (sigma+nu)[(sigma+nu)^2 + Omega^2].
inline CMat3 inv_sigma_plus_M(Complex sigma, double nu, double Omega_c, const Vec3& b) {
    const Complex z = sigma + nu;
    const Complex d = z * (z * z + Omega_c * Omega_c);
    if (std::abs(d) <= 1e-14)
        throw SingularShift("inv_sigma_plus_M: determinant below 1e-14 (Hyp. on nu_* violated)");
    CMat3 f;
    f(0, 0) = z * z / d;
    f(0, 1) = Omega_c * z / d;
    f(1, 0) = -Omega_c * z / d;
    f(1, 1) = z * z / d;
    f(2, 2) = (z * z + Omega_c * Omega_c) / d;
    return rotate_from_frame(frame_matrix(stix_frame(b)), f);
}

} // namespace detail

// (i alpha I + M_s)^{-1} via the cofactor formula.
inline CMat3 inv_shifted_M(double alpha, double nu, double Omega_c, const Vec3& b) {
    return detail::inv_sigma_plus_M(Complex(0.0, alpha), nu, Omega_c, b);
}

// (I + lambda M_s)^{-1}, real closed form, lambda > 0.
inline Mat3 inv_I_plus_lambda_M(double lambda, double nu, double Omega_c, const Vec3& b) {
    const double z = 1.0 + lambda * nu;
    const double w = lambda * Omega_c;
    const double det2 = z * z + w * w;
    if (!(det2 > 0.0) || z == 0.0)
        throw SingularShift("inv_I_plus_lambda_M: singular block");
    Mat3 f{};
    f(0, 0) = z / det2;
    f(0, 1) = w / det2;
    f(1, 0) = -w / det2;
    f(1, 1) = z / det2;
    f(2, 2) = 1.0 / z;
    const Mat3 s = detail::frame_matrix(stix_frame(b));
    Mat3 out;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            double acc = 0;
            for (int a = 0; a < 3; ++a)
                for (int bb = 0; bb < 3; ++bb) acc += s(r, a) * f(a, bb) * s(c, bb);
            out(r, c) = acc;
        }
    return out;
}

struct MediumPoint {
    struct Species {
        double omega_p = 1.0;
        double nu = 1.0;
        double Omega_c = 0.0;
    };
    std::array<Species, 4> species{};
    int count = 0;
    Vec3 b{{0.0, 0.0, 1.0}};

    void add(double omega_p, double nu, double Omega_c) {
        species[static_cast<size_t>(count++)] = {omega_p, nu, Omega_c};
    }
};

inline MediumPoint medium_point(const MediumFields& m, int family, int i, int j, int k) {
    MediumPoint p;
    p.b = m.b_at(family, i, j, k);
    for (const auto& s : m.species)
        p.add(s.omega_p[static_cast<size_t>(family)](i, j, k),
              s.nu[static_cast<size_t>(family)](i, j, k),
              s.Omega_c[static_cast<size_t>(family)](i, j, k));
    return p;
}

struct ShiftKind {
    bool imaginary = false; // false: real lambda > 0; true: shift i*alpha
    double value = 0.0;
};

// D_lambda = sum_s omega_ps^2 (I + lambda M_s)^{-1}   (real shift), or
// D_alpha  = sum_s omega_ps^2 (i alpha I + M_s)^{-1}  (imaginary shift).
inline CMat3 assemble_D(const ShiftKind& shift, const MediumPoint& p) {
    CMat3 d{};
    for (int s = 0; s < p.count; ++s) {
        const auto& sp = p.species[static_cast<size_t>(s)];
        const double w2 = sp.omega_p * sp.omega_p;
        if (shift.imaginary) {
            d = d + inv_shifted_M(shift.value, sp.nu, sp.Omega_c, p.b) * Complex(w2);
        } else {
            d = d + to_complex(inv_I_plus_lambda_M(shift.value, sp.nu, sp.Omega_c, p.b)) * Complex(w2);
        }
    }
    return d;
}

struct EigenTriple {
    Complex lambda1, lambda2, lambda3; // P+iQ, P-iQ, R
};

// The scalar functions entering B_alpha in the Stix frame.
inline Complex stix_P(double alpha, const MediumPoint& p) {
    Complex out(0.0, alpha);
    for (int s = 0; s < p.count; ++s) {
        const auto& sp = p.species[static_cast<size_t>(s)];
        const Complex z(sp.nu, alpha);
        out += sp.omega_p * sp.omega_p * z / (z * z + sp.Omega_c * sp.Omega_c);
    }
    return out;
}
inline Complex stix_Q(double alpha, const MediumPoint& p) {
    Complex out(0.0, 0.0);
    for (int s = 0; s < p.count; ++s) {
        const auto& sp = p.species[static_cast<size_t>(s)];
        const Complex z(sp.nu, alpha);
        out += sp.omega_p * sp.omega_p * sp.Omega_c / (z * z + sp.Omega_c * sp.Omega_c);
    }
    return out;
}
inline Complex stix_R(double alpha, const MediumPoint& p) {
    Complex out(0.0, alpha);
    for (int s = 0; s < p.count; ++s) {
        const auto& sp = p.species[static_cast<size_t>(s)];
        out += sp.omega_p * sp.omega_p / Complex(sp.nu, alpha);
    }
    return out;
}

inline EigenTriple b_alpha_eigenvalues(double alpha, const MediumPoint& p) {
    const Complex P = stix_P(alpha, p);
    const Complex Q = stix_Q(alpha, p);
    const Complex R = stix_R(alpha, p);
    const Complex i(0.0, 1.0);
    return {P + i * Q, P - i * Q, R};
}

// Closed real parts of the eigen triple (positive under the hypotheses).
inline std::array<double, 3> b_alpha_re_eigenvalues(double alpha, const MediumPoint& p) {
    std::array<double, 3> out{0.0, 0.0, 0.0};
    for (int s = 0; s < p.count; ++s) {
        const auto& sp = p.species[static_cast<size_t>(s)];
        const double w2 = sp.omega_p * sp.omega_p;
        const double O = sp.Omega_c, nu = sp.nu;
        const double den = std::pow(O * O + nu * nu - alpha * alpha, 2) + 4.0 * alpha * alpha * nu * nu;
        out[0] += w2 * nu * ((O + alpha) * (O + alpha) + nu * nu) / den;
        out[1] += w2 * nu * ((O - alpha) * (O - alpha) + nu * nu) / den;
        out[2] += w2 * nu / (nu * nu + alpha * alpha);
    }
    return out;
}

// B_alpha = i alpha I + D_alpha together with its eigen triple.
inline std::pair<CMat3, EigenTriple> B_alpha(double alpha, const MediumPoint& p) {
    CMat3 b = assemble_D({true, alpha}, p);
    const Complex i(0.0, 1.0);
    for (int r = 0; r < 3; ++r) b(r, r) += i * alpha;
    return {b, b_alpha_eigenvalues(alpha, p)};
}

struct ZetaEta {
    double zeta = 0.0; // min_j inf_x Re(lambda_{alpha,j})
    double eta = 0.0;  // sup_x |||B_alpha(x)|||  (= spectral radius, B_alpha normal)
};

inline ZetaEta zeta_eta(double alpha, const MediumFields& m) {
    ZetaEta out;
    out.zeta = std::numeric_limits<double>::infinity();
    out.eta = 0.0;
    for (int family = 0; family < 3; ++family) {
        const auto d = m.grid.edge_dims(family);
        for (int i = 0; i < d[0]; ++i)
            for (int j = 0; j < d[1]; ++j)
                for (int k = 0; k < d[2]; ++k) {
                    const MediumPoint p = medium_point(m, family, i, j, k);
                    const auto re = b_alpha_re_eigenvalues(alpha, p);
                    out.zeta = std::min({out.zeta, re[0], re[1], re[2]});
                    const EigenTriple t = b_alpha_eigenvalues(alpha, p);
                    out.eta = std::max(
                        {out.eta, std::abs(t.lambda1), std::abs(t.lambda2), std::abs(t.lambda3)});
                }
    }
    if (!(out.zeta > 0.0))
        throw NonPositiveZeta("zeta_eta: zeta_alpha <= 0, hypotheses violated upstream");
    return out;
}

// Shift used by the implicit step, guaranteeing ||lambda M_s|| < 1.
inline double admissible_lambda(double dt, const BoundsReport& bounds) {
    const double cap = 0.5 / std::max(bounds.nu_star + bounds.Omega_star, 1e-300);
    return std::min(dt, cap);
}

} // namespace coldplasma

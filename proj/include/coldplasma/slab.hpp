#pragma once

#include <Eigen/Dense>
#include <functional>

#include "coldplasma/fdtd.hpp"
#include "coldplasma/stix.hpp"

namespace coldplasma {

// ---------------------------------------------------------------------------
// 1-D plasma slab on [0, L]: transverse polarizations (Ey, Ez, By, Bz, J_sy,
// J_sz) plus the longitudinal block (Ex, J_sx), which couples in when b is
// oblique to the slab axis. E/J transverse live on nodes, B and the
// longitudinal fields on cell midpoints (the restriction of the Yee layout).
// ---------------------------------------------------------------------------

struct SlabBC {
    FaceKind lo = FaceKind::PEC;
    FaceKind hi = FaceKind::PEC;
    ForcingSpec forcing_lo, forcing_hi;
};

struct SlabMedium {
    double L = 1.0;
    int n = 0;
    Constants constants;
    // node-sampled (size n+1) and midpoint-sampled (size n) coefficients
    struct Species {
        SpeciesSpec spec;
        std::vector<double> omega_p_node, nu_node, Omega_node;
        std::vector<double> omega_p_half, nu_half, Omega_half;
    };
    std::vector<Species> species;
    std::vector<Vec3> b_node, b_half;

    double dx() const { return L / n; }
    bool b_axis_aligned(double tol = 1e-12) const {
        for (const auto& b : b_node)
            if (std::abs(b[1]) > tol || std::abs(b[2]) > tol) return false;
        for (const auto& b : b_half)
            if (std::abs(b[1]) > tol || std::abs(b[2]) > tol) return false;
        return true;
    }
};

inline SlabMedium sample_slab_medium(const MediumSpec& spec, double L, int n,
                                     const Constants& constants = {}) {
    if (n < 4) throw ShapeMismatch("sample_slab_medium: need n >= 4");
    SlabMedium m;
    m.L = L;
    m.n = n;
    m.constants = constants;
    const double h = L / n;
    auto sample_at = [&](double x, SlabMedium::Species& sp, bool node) {
        const Vec3 pos{{x, 0.0, 0.0}};
        const Vec3 Bext = spec.B_ext(pos);
        const double Bmag = norm(Bext);
        if (Bmag < 1e-30) throw ZeroExternalField("sample_slab_medium: |B_ext| = 0");
        (node ? sp.omega_p_node : sp.omega_p_half).push_back(sp.spec.omega_p(pos));
        (node ? sp.nu_node : sp.nu_half).push_back(sp.spec.nu(pos));
        (node ? sp.Omega_node : sp.Omega_half)
            .push_back(sp.spec.charge_sign * sp.spec.charge_to_mass * Bmag);
        return Bext * (1.0 / Bmag);
    };
    for (const auto& s : spec.species) {
        SlabMedium::Species sp;
        sp.spec = s;
        m.species.push_back(std::move(sp));
    }
    for (int i = 0; i <= n; ++i) {
        Vec3 b{};
        for (auto& sp : m.species) b = sample_at(i * h, sp, true);
        m.b_node.push_back(b);
    }
    for (int i = 0; i < n; ++i) {
        Vec3 b{};
        for (auto& sp : m.species) b = sample_at((i + 0.5) * h, sp, false);
        m.b_half.push_back(b);
    }
    return m;
}

inline BoundsReport slab_bounds(const SlabMedium& m) {
    BoundsReport r;
    r.nu_star = -1e300;
    r.omega_star = -1e300;
    bool hyp1 = true;
    auto scan = [&](const std::vector<double>& nu, const std::vector<double>& wp,
                    const std::vector<double>& oc) {
        for (double x : nu) {
            r.nu_star = std::max(r.nu_star, x);
            r.nu_lower = std::min(r.nu_lower, x);
            if (x < 0) hyp1 = false;
        }
        for (double x : wp) {
            r.omega_star = std::max(r.omega_star, x);
            r.omega_lower = std::min(r.omega_lower, x);
            if (x <= 0) hyp1 = false;
        }
        for (double x : oc) r.Omega_star = std::max(r.Omega_star, std::abs(x));
    };
    for (const auto& s : m.species) {
        scan(s.nu_node, s.omega_p_node, s.Omega_node);
        scan(s.nu_half, s.omega_p_half, s.Omega_half);
    }
    r.hyp1_ok = hyp1;
    r.hyp2_ok = hyp1 && r.nu_lower > 0 && r.omega_lower > 0;
    return r;
}

enum class Longitudinal { Auto, Never, Always };

// Dof layout of the slab state. Transverse component index: 0 = y, 1 = z.
struct SlabLayout {
    int n = 0;
    int ns = 2;
    bool longi = false;
    bool e_lo_free = false, e_hi_free = false; // boundary E nodes are never dofs
    int dim = 0;

    int jt_off(int s, int c) const { return (2 * s + c) * (n + 1); }
    int jt(int s, int c, int i) const { return jt_off(s, c) + i; }
    int et_off(int c) const { return 2 * ns * (n + 1) + c * (n - 1); }
    int et(int c, int i) const { return et_off(c) + (i - 1); } // i in [1, n-1]
    int bf_off(int c) const { return 2 * ns * (n + 1) + 2 * (n - 1) + c * n; }
    int bf(int c, int m) const { return bf_off(c) + m; }
    int jx_off(int s) const { return bf_off(0) + 2 * n + s * n; }
    int jx(int s, int m) const { return jx_off(s) + m; }
    int ex_off() const { return jx_off(0) + ns * n; }
    int ex(int m) const { return ex_off() + m; }

    static SlabLayout make(int n, int ns, bool longi) {
        SlabLayout l;
        l.n = n;
        l.ns = ns;
        l.longi = longi;
        l.dim = 2 * ns * (n + 1) + 2 * (n - 1) + 2 * n + (longi ? (ns + 1) * n : 0);
        return l;
    }
};

// Discrete generator of the slab model written as d/dt U + A U = 0, with the
// boundary-eliminated state described by SlabLayout.
struct SlabOperator {
    SlabMedium med;
    SlabBC bc;
    SlabLayout layout;
    Eigen::MatrixXd A;       // dense generator matrix
    Eigen::VectorXd weights; // diagonal of the X inner product

    int dim() const { return layout.dim; }
};

namespace slab_detail {

// E_c tangential value at a boundary node as a linear functional of the state
// (homogeneous boundary data). c: 0 = y, 1 = z.
inline void boundary_E_terms(const SlabLayout& l, const SlabBC& bc, double cl, int node, int c,
                             std::vector<std::pair<int, double>>& out) {
    out.clear();
    const bool lo = node == 0;
    const FaceKind kind = lo ? bc.lo : bc.hi;
    if (kind == FaceKind::PEC) return;
    const int m = lo ? 0 : l.n - 1;
    // x=0: Ey = -c Bz, Ez = +c By ; x=L: Ey = +c Bz, Ez = -c By
    const double sgn = lo ? -1.0 : 1.0;
    if (c == 0)
        out.emplace_back(l.bf(1, m), sgn * cl);
    else
        out.emplace_back(l.bf(0, m), -sgn * cl);
}

} // namespace slab_detail

inline SlabOperator assemble_slab(const SlabMedium& med, const SlabBC& bc,
                                  Longitudinal mode = Longitudinal::Auto) {
    const int n = med.n;
    if (n < 4) throw ShapeMismatch("assemble_slab: need n >= 4");
    const int ns = static_cast<int>(med.species.size());
    bool longi = false;
    switch (mode) {
    case Longitudinal::Auto: longi = !med.b_axis_aligned(); break;
    case Longitudinal::Never:
        if (!med.b_axis_aligned())
            throw ShapeMismatch("assemble_slab: oblique b requires the longitudinal block");
        longi = false;
        break;
    case Longitudinal::Always: longi = true; break;
    }

    SlabOperator op;
    op.med = med;
    op.bc = bc;
    op.layout = SlabLayout::make(n, ns, longi);
    const SlabLayout& l = op.layout;
    const double h = med.dx();
    const double c = med.constants.c, eps0 = med.constants.eps0;

    op.A = Eigen::MatrixXd::Zero(l.dim, l.dim);
    auto& A = op.A;

    std::vector<std::pair<int, double>> eterms;

    // --- J transverse rows: A[J_s] = M_s J_s - eps0 w^2 E (y,z components) ---
    for (int s = 0; s < ns; ++s) {
        const auto& sp = med.species[static_cast<size_t>(s)];
        for (int i = 0; i <= n; ++i) {
            const double nu = sp.nu_node[static_cast<size_t>(i)];
            const double Om = sp.Omega_node[static_cast<size_t>(i)];
            const double w2 = std::pow(sp.omega_p_node[static_cast<size_t>(i)], 2);
            const Vec3 b = med.b_node[static_cast<size_t>(i)];
            // (M J)_y = nu Jy + Om(b_z Jx - b_x Jz), (M J)_z = nu Jz + Om(b_x Jy - b_y Jx)
            A(l.jt(s, 0, i), l.jt(s, 0, i)) += nu;
            A(l.jt(s, 0, i), l.jt(s, 1, i)) += -Om * b[0];
            A(l.jt(s, 1, i), l.jt(s, 1, i)) += nu;
            A(l.jt(s, 1, i), l.jt(s, 0, i)) += Om * b[0];
            if (longi) {
                // pair-averaged coupling to Jx at the two adjacent midpoints
                const double wnode_y = Om * b[2]; // coefficient magnitude for (y,x) pair
                const double wnode_z = Om * b[1];
                const double wp_node = sp.omega_p_node[static_cast<size_t>(i)];
                for (int mm : {i - 1, i}) {
                    if (mm < 0 || mm >= n) continue;
                    const double Om_h = sp.Omega_half[static_cast<size_t>(mm)];
                    const Vec3 bh = med.b_half[static_cast<size_t>(mm)];
                    const double wp_half = sp.omega_p_half[static_cast<size_t>(mm)];
                    // skew pair on Jhat: (M J)_y has +Om b_z Jx -> kappa_y = avg(Om b_z)/2
                    const double ky = 0.5 * 0.5 * (wnode_y + Om_h * bh[2]);
                    const double kz = 0.5 * 0.5 * (wnode_z + Om_h * bh[1]);
                    // physical-variable entries: row scaled by wp_node, col by 1/wp_half
                    A(l.jt(s, 0, i), l.jx(s, mm)) += ky * wp_node / wp_half;
                    A(l.jx(s, mm), l.jt(s, 0, i)) += -ky * wp_half / wp_node;
                    A(l.jt(s, 1, i), l.jx(s, mm)) += -kz * wp_node / wp_half;
                    A(l.jx(s, mm), l.jt(s, 1, i)) += kz * wp_half / wp_node;
                }
            }
            // -eps0 w^2 E_c with boundary elimination
            for (int cc = 0; cc < 2; ++cc) {
                if (i >= 1 && i <= n - 1) {
                    A(l.jt(s, cc, i), l.et(cc, i)) += -eps0 * w2;
                } else {
                    slab_detail::boundary_E_terms(l, bc, c, i, cc, eterms);
                    for (auto [col, coef] : eterms) A(l.jt(s, cc, i), col) += -eps0 * w2 * coef;
                }
            }
        }
        if (longi) {
            for (int m = 0; m < n; ++m) {
                const double nu = sp.nu_half[static_cast<size_t>(m)];
                A(l.jx(s, m), l.jx(s, m)) += nu;
                A(l.jx(s, m), l.ex(m)) +=
                    -eps0 * std::pow(sp.omega_p_half[static_cast<size_t>(m)], 2);
            }
        }
    }

    // --- E rows (interior nodes): A[E] = (1/eps0) sum_s J - c^2 curl B ---
    for (int i = 1; i <= n - 1; ++i) {
        for (int s = 0; s < ns; ++s) {
            A(l.et(0, i), l.jt(s, 0, i)) += 1.0 / eps0;
            A(l.et(1, i), l.jt(s, 1, i)) += 1.0 / eps0;
        }
        // (curl B)_y = -dBz/dx, (curl B)_z = +dBy/dx
        A(l.et(0, i), l.bf(1, i)) += c * c / h;
        A(l.et(0, i), l.bf(1, i - 1)) += -c * c / h;
        A(l.et(1, i), l.bf(0, i)) += -c * c / h;
        A(l.et(1, i), l.bf(0, i - 1)) += c * c / h;
    }
    if (longi)
        for (int m = 0; m < n; ++m)
            for (int s = 0; s < ns; ++s) A(l.ex(m), l.jx(s, m)) += 1.0 / eps0;

    // --- B rows: A[By] = -dEz/dx, A[Bz] = +dEy/dx ---
    for (int m = 0; m < n; ++m) {
        for (int node : {m, m + 1}) {
            const double sgn = node == m + 1 ? 1.0 : -1.0;
            for (int cc = 0; cc < 2; ++cc) {
                const int row = cc == 0 ? l.bf(1, m) : l.bf(0, m);
                const double coef = (cc == 0 ? 1.0 : -1.0) * sgn / h;
                if (node >= 1 && node <= n - 1) {
                    A(row, l.et(cc, node)) += coef;
                } else {
                    slab_detail::boundary_E_terms(l, bc, c, node, cc, eterms);
                    for (auto [col, cf] : eterms) A(row, col) += coef * cf;
                }
            }
        }
    }

    // --- X-norm weights ---
    op.weights = Eigen::VectorXd::Zero(l.dim);
    for (int s = 0; s < ns; ++s) {
        const auto& sp = med.species[static_cast<size_t>(s)];
        for (int i = 0; i <= n; ++i) {
            const double w = h / (eps0 * std::pow(sp.omega_p_node[static_cast<size_t>(i)], 2));
            op.weights(l.jt(s, 0, i)) = w;
            op.weights(l.jt(s, 1, i)) = w;
        }
        if (longi)
            for (int m = 0; m < n; ++m)
                op.weights(l.jx(s, m)) =
                    h / (eps0 * std::pow(sp.omega_p_half[static_cast<size_t>(m)], 2));
    }
    for (int i = 1; i <= n - 1; ++i) {
        op.weights(l.et(0, i)) = eps0 * h;
        op.weights(l.et(1, i)) = eps0 * h;
    }
    for (int m = 0; m < n; ++m) {
        op.weights(l.bf(0, m)) = c * c * eps0 * h;
        op.weights(l.bf(1, m)) = c * c * eps0 * h;
        if (longi) op.weights(l.ex(m)) = eps0 * h;
    }
    return op;
}

// Matrix-free evaluation of the same generator (independent code path used by
// the apply-vs-assemble check and shared with the time stepper's semantics).
inline Eigen::VectorXd slab_apply(const SlabMedium& med, const SlabBC& bc, const SlabLayout& l,
                                  const Eigen::VectorXd& u) {
    if (u.size() != l.dim) throw ShapeMismatch("slab_apply: dimension mismatch");
    const int n = med.n;
    const int ns = l.ns;
    const double h = med.dx();
    const double c = med.constants.c, eps0 = med.constants.eps0;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(l.dim);

    auto Eval = [&](int cc, int node) -> double {
        if (node >= 1 && node <= n - 1) return u(l.et(cc, node));
        const bool lo = node == 0;
        if ((lo ? bc.lo : bc.hi) == FaceKind::PEC) return 0.0;
        const int m = lo ? 0 : n - 1;
        const double sgn = lo ? -1.0 : 1.0;
        return cc == 0 ? sgn * c * u(l.bf(1, m)) : -sgn * c * u(l.bf(0, m));
    };

    for (int s = 0; s < ns; ++s) {
        const auto& sp = med.species[static_cast<size_t>(s)];
        for (int i = 0; i <= n; ++i) {
            const double nu = sp.nu_node[static_cast<size_t>(i)];
            const double Om = sp.Omega_node[static_cast<size_t>(i)];
            const double w2 = std::pow(sp.omega_p_node[static_cast<size_t>(i)], 2);
            const Vec3 b = med.b_node[static_cast<size_t>(i)];
            const double jy = u(l.jt(s, 0, i)), jz = u(l.jt(s, 1, i));
            out(l.jt(s, 0, i)) += nu * jy - Om * b[0] * jz - eps0 * w2 * Eval(0, i);
            out(l.jt(s, 1, i)) += nu * jz + Om * b[0] * jy - eps0 * w2 * Eval(1, i);
            if (l.longi) {
                const double wp_node = sp.omega_p_node[static_cast<size_t>(i)];
                for (int mm : {i - 1, i}) {
                    if (mm < 0 || mm >= n) continue;
                    const double Om_h = sp.Omega_half[static_cast<size_t>(mm)];
                    const Vec3 bh = med.b_half[static_cast<size_t>(mm)];
                    const double wp_half = sp.omega_p_half[static_cast<size_t>(mm)];
                    const double ky = 0.5 * 0.5 * (Om * b[2] + Om_h * bh[2]);
                    const double kz = 0.5 * 0.5 * (Om * b[1] + Om_h * bh[1]);
                    const double jx = u(l.jx(s, mm));
                    out(l.jt(s, 0, i)) += ky * wp_node / wp_half * jx;
                    out(l.jx(s, mm)) += -ky * wp_half / wp_node * jy;
                    out(l.jt(s, 1, i)) += -kz * wp_node / wp_half * jx;
                    out(l.jx(s, mm)) += kz * wp_half / wp_node * jz;
                }
            }
        }
        if (l.longi)
            for (int m = 0; m < n; ++m)
                out(l.jx(s, m)) += sp.nu_half[static_cast<size_t>(m)] * u(l.jx(s, m)) -
                                   eps0 * std::pow(sp.omega_p_half[static_cast<size_t>(m)], 2) *
                                       u(l.ex(m));
    }

    for (int i = 1; i <= n - 1; ++i) {
        double sjy = 0, sjz = 0;
        for (int s = 0; s < ns; ++s) {
            sjy += u(l.jt(s, 0, i));
            sjz += u(l.jt(s, 1, i));
        }
        out(l.et(0, i)) += sjy / eps0 + c * c * (u(l.bf(1, i)) - u(l.bf(1, i - 1))) / h;
        out(l.et(1, i)) += sjz / eps0 - c * c * (u(l.bf(0, i)) - u(l.bf(0, i - 1))) / h;
    }
    if (l.longi)
        for (int m = 0; m < n; ++m) {
            double sx = 0;
            for (int s = 0; s < ns; ++s) sx += u(l.jx(s, m));
            out(l.ex(m)) += sx / eps0;
        }

    for (int m = 0; m < n; ++m) {
        out(l.bf(0, m)) += -(Eval(1, m + 1) - Eval(1, m)) / h;
        out(l.bf(1, m)) += (Eval(0, m + 1) - Eval(0, m)) / h;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Slab time stepper (b parallel to the axis: transverse CN is the exact
// pointwise Crank-Nicolson with the full 2x2 M_s block).
// ---------------------------------------------------------------------------

struct SlabState {
    double t = 0.0;
    // [species][component 0=y,1=z] on nodes
    std::array<std::array<std::vector<double>, 2>, 2> Jt;
    std::array<std::vector<double>, 2> Et; // interior values at nodes 1..n-1 stored with ghost ends
    std::array<std::vector<double>, 2> Bf; // midpoints
    std::array<std::vector<double>, 2> Jx; // longitudinal per species (midpoints)
    std::vector<double> Ex;

    static SlabState zero(int n, bool longi) {
        SlabState s;
        for (auto& sp : s.Jt)
            for (auto& c : sp) c.assign(static_cast<size_t>(n + 1), 0.0);
        for (auto& c : s.Et) c.assign(static_cast<size_t>(n + 1), 0.0);
        for (auto& c : s.Bf) c.assign(static_cast<size_t>(n), 0.0);
        if (longi) {
            for (auto& sp : s.Jx) sp.assign(static_cast<size_t>(n), 0.0);
            s.Ex.assign(static_cast<size_t>(n), 0.0);
        }
        return s;
    }
};

inline Eigen::VectorXd slab_pack(const SlabLayout& l, const SlabState& s) {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(l.dim);
    for (int sp = 0; sp < l.ns; ++sp)
        for (int c = 0; c < 2; ++c)
            for (int i = 0; i <= l.n; ++i)
                u(l.jt(sp, c, i)) = s.Jt[static_cast<size_t>(sp)][static_cast<size_t>(c)][static_cast<size_t>(i)];
    for (int c = 0; c < 2; ++c)
        for (int i = 1; i <= l.n - 1; ++i) u(l.et(c, i)) = s.Et[static_cast<size_t>(c)][static_cast<size_t>(i)];
    for (int c = 0; c < 2; ++c)
        for (int m = 0; m < l.n; ++m) u(l.bf(c, m)) = s.Bf[static_cast<size_t>(c)][static_cast<size_t>(m)];
    if (l.longi) {
        for (int sp = 0; sp < l.ns; ++sp)
            for (int m = 0; m < l.n; ++m) u(l.jx(sp, m)) = s.Jx[static_cast<size_t>(sp)][static_cast<size_t>(m)];
        for (int m = 0; m < l.n; ++m) u(l.ex(m)) = s.Ex[static_cast<size_t>(m)];
    }
    return u;
}

inline SlabState slab_unpack(const SlabLayout& l, const Eigen::VectorXd& u, double t) {
    SlabState s = SlabState::zero(l.n, l.longi);
    s.t = t;
    for (int sp = 0; sp < l.ns; ++sp)
        for (int c = 0; c < 2; ++c)
            for (int i = 0; i <= l.n; ++i)
                s.Jt[static_cast<size_t>(sp)][static_cast<size_t>(c)][static_cast<size_t>(i)] = u(l.jt(sp, c, i));
    for (int c = 0; c < 2; ++c)
        for (int i = 1; i <= l.n - 1; ++i) s.Et[static_cast<size_t>(c)][static_cast<size_t>(i)] = u(l.et(c, i));
    for (int c = 0; c < 2; ++c)
        for (int m = 0; m < l.n; ++m) s.Bf[static_cast<size_t>(c)][static_cast<size_t>(m)] = u(l.bf(c, m));
    if (l.longi) {
        for (int sp = 0; sp < l.ns; ++sp)
            for (int m = 0; m < l.n; ++m) s.Jx[static_cast<size_t>(sp)][static_cast<size_t>(m)] = u(l.jx(sp, m));
        for (int m = 0; m < l.n; ++m) s.Ex[static_cast<size_t>(m)] = u(l.ex(m));
    }
    return s;
}

// Fill the stored boundary trace of E from the impedance closure at time t.
inline void slab_set_trace_from_closure(SlabState& s, const SlabMedium& med, const SlabBC& bc,
                                        double t) {
    const double c = med.constants.c;
    for (int node : {0, med.n}) {
        const bool lo = node == 0;
        if ((lo ? bc.lo : bc.hi) == FaceKind::PEC) {
            s.Et[0][static_cast<size_t>(node)] = 0.0;
            s.Et[1][static_cast<size_t>(node)] = 0.0;
            continue;
        }
        const auto& f = lo ? bc.forcing_lo : bc.forcing_hi;
        const Vec3 g = f({{lo ? 0.0 : med.L, 0.0, 0.0}}, t);
        const int m = lo ? 0 : med.n - 1;
        const double sgn = lo ? -1.0 : 1.0;
        s.Et[0][static_cast<size_t>(node)] = sgn * (c * s.Bf[1][static_cast<size_t>(m)] - g[2]);
        s.Et[1][static_cast<size_t>(node)] = -sgn * (c * s.Bf[0][static_cast<size_t>(m)] - g[1]);
    }
}

class SlabStepper {
public:
    SlabStepper(const SlabMedium& med, const SlabBC& bc, double dt, bool longi = false)
        : med_(med), bc_(bc), dt_(dt), layout_(SlabLayout::make(med.n, static_cast<int>(med.species.size()), longi)) {
        if (!med.b_axis_aligned())
            throw ShapeMismatch("SlabStepper: oblique b not supported by the 1-D stepper");
        const double c = med.constants.c;
        if (dt > med.dx() / c * (1.0 + 1e-12))
            throw CFLViolation("SlabStepper: dt exceeds dx/c");
        const double lam = dt / 2.0;
        const int n = med.n;
        const int ns = layout_.ns;
        // per node: P_s = (I2 + lam M2_s)^{-1}, Den = (I2 + lam^2 sum w^2 P_s)^{-1}
        Pn_.resize(static_cast<size_t>(ns));
        for (int s = 0; s < ns; ++s) Pn_[static_cast<size_t>(s)].resize(static_cast<size_t>(n + 1));
        Den_.resize(static_cast<size_t>(n + 1));
        for (int i = 0; i <= n; ++i) {
            std::array<double, 4> acc{1.0, 0.0, 0.0, 1.0};
            for (int s = 0; s < ns; ++s) {
                const auto& sp = med.species[static_cast<size_t>(s)];
                const double nu = sp.nu_node[static_cast<size_t>(i)];
                const double W = sp.Omega_node[static_cast<size_t>(i)] * med.b_node[static_cast<size_t>(i)][0];
                const double a = 1.0 + lam * nu, b2 = -lam * W, c2 = lam * W, d = 1.0 + lam * nu;
                const double det = a * d - b2 * c2;
                std::array<double, 4> P{d / det, -b2 / det, -c2 / det, a / det};
                Pn_[static_cast<size_t>(s)][static_cast<size_t>(i)] = P;
                const double w2 = std::pow(sp.omega_p_node[static_cast<size_t>(i)], 2);
                acc[0] += lam * lam * w2 * P[0];
                acc[1] += lam * lam * w2 * P[1];
                acc[2] += lam * lam * w2 * P[2];
                acc[3] += lam * lam * w2 * P[3];
            }
            const double det = acc[0] * acc[3] - acc[1] * acc[2];
            Den_[static_cast<size_t>(i)] = {acc[3] / det, -acc[1] / det, -acc[2] / det, acc[0] / det};
        }
        if (longi) {
            invx_.resize(static_cast<size_t>(ns));
            denx_.assign(static_cast<size_t>(n), 1.0);
            for (int s = 0; s < ns; ++s) {
                auto& v = invx_[static_cast<size_t>(s)];
                v.resize(static_cast<size_t>(n));
                const auto& sp = med.species[static_cast<size_t>(s)];
                for (int m = 0; m < n; ++m) {
                    v[static_cast<size_t>(m)] = 1.0 / (1.0 + lam * sp.nu_half[static_cast<size_t>(m)]);
                    denx_[static_cast<size_t>(m)] += lam * lam *
                        std::pow(sp.omega_p_half[static_cast<size_t>(m)], 2) * v[static_cast<size_t>(m)];
                }
            }
        }
    }

    const SlabLayout& layout() const { return layout_; }
    double dt() const { return dt_; }
    double time() const { return state_.t; }

    // The boundary trace of E is a derived quantity; any values in
    // s0.Et[c][0] / [n] are treated as the declared initial trace for the
    // priming half-step and then dropped from the evolved state.
    void init(const SlabState& s0) {
        state_ = s0;
        // B^{-1/2} = B^0 + (dt/2) curl E^0, with the closure trace of the
        // initial data at the ends
        SlabState prime = s0;
        slab_set_trace_from_closure(prime, med_, bc_, s0.t);
        Bprev_ = state_.Bf;
        for (int m = 0; m < med_.n; ++m) {
            Bprev_[0][static_cast<size_t>(m)] += 0.5 * dt_ * curlE_y(prime, m);
            Bprev_[1][static_cast<size_t>(m)] += 0.5 * dt_ * curlE_z(prime, m);
        }
        for (int cc = 0; cc < 2; ++cc) {
            state_.Et[static_cast<size_t>(cc)][0] = 0.0;
            state_.Et[static_cast<size_t>(cc)][static_cast<size_t>(med_.n)] = 0.0;
        }
    }

    LedgerRow step() {
        const int n = med_.n;
        const double c = med_.constants.c, eps0 = med_.constants.eps0;
        const double lam = dt_ / 2.0;
        const int ns = layout_.ns;

        // leapfrog B with the trapezoidal Silver-Muller closure at the ends
        std::array<std::vector<double>, 2> Bnext = Bprev_;
        for (int m = 0; m < n; ++m) {
            Bnext[0][static_cast<size_t>(m)] -= dt_ * curlE_y(state_, m);
            Bnext[1][static_cast<size_t>(m)] -= dt_ * curlE_z(state_, m);
        }
        close_B_update(Bnext, state_.t);

        LedgerRow row = ledger(Bprev_, Bnext);

        // CN solve for Ebar at interior nodes
        std::array<std::vector<double>, 2> Ebar;
        Ebar[0].assign(static_cast<size_t>(n + 1), 0.0);
        Ebar[1].assign(static_cast<size_t>(n + 1), 0.0);
        for (int i = 1; i <= n - 1; ++i) {
            // rhs = E + lam c^2 (curl B)_t - (lam/eps0) sum_s P_s J_s
            // (curl B)_y = -dBz/dx, (curl B)_z = +dBy/dx
            double ry = state_.Et[0][static_cast<size_t>(i)] -
                        lam * c * c * (Bnext[1][static_cast<size_t>(i)] - Bnext[1][static_cast<size_t>(i - 1)]) / med_.dx();
            double rz = state_.Et[1][static_cast<size_t>(i)] +
                        lam * c * c * (Bnext[0][static_cast<size_t>(i)] - Bnext[0][static_cast<size_t>(i - 1)]) / med_.dx();
            for (int s = 0; s < ns; ++s) {
                const auto& P = Pn_[static_cast<size_t>(s)][static_cast<size_t>(i)];
                const double jy = state_.Jt[static_cast<size_t>(s)][0][static_cast<size_t>(i)];
                const double jz = state_.Jt[static_cast<size_t>(s)][1][static_cast<size_t>(i)];
                ry -= lam / eps0 * (P[0] * jy + P[1] * jz);
                rz -= lam / eps0 * (P[2] * jy + P[3] * jz);
            }
            const auto& D = Den_[static_cast<size_t>(i)];
            Ebar[0][static_cast<size_t>(i)] = D[0] * ry + D[1] * rz;
            Ebar[1][static_cast<size_t>(i)] = D[2] * ry + D[3] * rz;
        }
        // boundary trace of Ebar at t^{n+1/2}
        const double tmid = state_.t + 0.5 * dt_;
        set_boundary_E(Ebar, Bnext, tmid);

        // currents and E to n+1
        for (int s = 0; s < ns; ++s) {
            const auto& sp = med_.species[static_cast<size_t>(s)];
            for (int i = 0; i <= n; ++i) {
                const auto& P = Pn_[static_cast<size_t>(s)][static_cast<size_t>(i)];
                const double w2 = std::pow(sp.omega_p_node[static_cast<size_t>(i)], 2);
                double& jy = state_.Jt[static_cast<size_t>(s)][0][static_cast<size_t>(i)];
                double& jz = state_.Jt[static_cast<size_t>(s)][1][static_cast<size_t>(i)];
                const double ry = jy + lam * eps0 * w2 * Ebar[0][static_cast<size_t>(i)];
                const double rz = jz + lam * eps0 * w2 * Ebar[1][static_cast<size_t>(i)];
                const double jby = P[0] * ry + P[1] * rz;
                const double jbz = P[2] * ry + P[3] * rz;
                jy = 2.0 * jby - jy;
                jz = 2.0 * jbz - jz;
            }
        }
        for (int i = 1; i <= n - 1; ++i) {
            state_.Et[0][static_cast<size_t>(i)] = 2.0 * Ebar[0][static_cast<size_t>(i)] - state_.Et[0][static_cast<size_t>(i)];
            state_.Et[1][static_cast<size_t>(i)] = 2.0 * Ebar[1][static_cast<size_t>(i)] - state_.Et[1][static_cast<size_t>(i)];
        }

        // longitudinal block (decoupled when b is axis aligned)
        if (layout_.longi) {
            for (int m = 0; m < n; ++m) {
                double rx = state_.Ex[static_cast<size_t>(m)];
                for (int s = 0; s < ns; ++s)
                    rx -= lam / eps0 * state_.Jx[static_cast<size_t>(s)][static_cast<size_t>(m)] *
                          invx_[static_cast<size_t>(s)][static_cast<size_t>(m)];
                const double ex_bar = rx / denx_[static_cast<size_t>(m)];
                for (int s = 0; s < ns; ++s) {
                    const auto& sp = med_.species[static_cast<size_t>(s)];
                    double& jx = state_.Jx[static_cast<size_t>(s)][static_cast<size_t>(m)];
                    const double jb = (jx + lam * eps0 * std::pow(sp.omega_p_half[static_cast<size_t>(m)], 2) * ex_bar) *
                                      invx_[static_cast<size_t>(s)][static_cast<size_t>(m)];
                    jx = 2.0 * jb - jx;
                }
                state_.Ex[static_cast<size_t>(m)] = 2.0 * ex_bar - state_.Ex[static_cast<size_t>(m)];
            }
        }

        Bprev_ = std::move(Bnext);
        state_.t += dt_;
        return row;
    }

    LedgerRow ledger_now() const {
        auto Bnext = virtual_advance();
        return ledger(Bprev_, Bnext);
    }

    // Integer-time view (B averaged across the surrounding half steps, the
    // boundary trace filled from the closure).
    SlabState snapshot() const {
        SlabState out = state_;
        const auto Bnext = virtual_advance();
        for (int m = 0; m < med_.n; ++m) {
            out.Bf[0][static_cast<size_t>(m)] =
                0.5 * (Bprev_[0][static_cast<size_t>(m)] + Bnext[0][static_cast<size_t>(m)]);
            out.Bf[1][static_cast<size_t>(m)] =
                0.5 * (Bprev_[1][static_cast<size_t>(m)] + Bnext[1][static_cast<size_t>(m)]);
        }
        slab_set_trace_from_closure(out, med_, bc_, out.t);
        return out;
    }

    const SlabState& raw_state() const { return state_; }

    // X-norm of a state against the layout weights.
    double norm_X(const SlabState& s) const {
        const double eps0 = med_.constants.eps0, c = med_.constants.c;
        const double h = med_.dx();
        double acc = 0.0;
        for (int sp = 0; sp < layout_.ns; ++sp) {
            const auto& spm = med_.species[static_cast<size_t>(sp)];
            for (int i = 0; i <= med_.n; ++i) {
                const double w = h / (eps0 * std::pow(spm.omega_p_node[static_cast<size_t>(i)], 2));
                acc += w * (std::pow(s.Jt[static_cast<size_t>(sp)][0][static_cast<size_t>(i)], 2) +
                            std::pow(s.Jt[static_cast<size_t>(sp)][1][static_cast<size_t>(i)], 2));
            }
            if (layout_.longi)
                for (int m = 0; m < med_.n; ++m)
                    acc += h / (eps0 * std::pow(spm.omega_p_half[static_cast<size_t>(m)], 2)) *
                           std::pow(s.Jx[static_cast<size_t>(sp)][static_cast<size_t>(m)], 2);
        }
        for (int i = 1; i <= med_.n - 1; ++i)
            acc += eps0 * h * (std::pow(s.Et[0][static_cast<size_t>(i)], 2) + std::pow(s.Et[1][static_cast<size_t>(i)], 2));
        for (int m = 0; m < med_.n; ++m)
            acc += c * c * eps0 * h *
                   (std::pow(s.Bf[0][static_cast<size_t>(m)], 2) + std::pow(s.Bf[1][static_cast<size_t>(m)], 2));
        if (layout_.longi)
            for (int m = 0; m < med_.n; ++m) acc += eps0 * h * std::pow(s.Ex[static_cast<size_t>(m)], 2);
        return std::sqrt(acc);
    }

private:
    std::array<std::vector<double>, 2> virtual_advance() const {
        std::array<std::vector<double>, 2> Bnext = Bprev_;
        for (int m = 0; m < med_.n; ++m) {
            Bnext[0][static_cast<size_t>(m)] -= dt_ * curlE_y(state_, m);
            Bnext[1][static_cast<size_t>(m)] -= dt_ * curlE_z(state_, m);
        }
        close_B_update(Bnext, state_.t);
        return Bnext;
    }

    // Trapezoidal closure at the Silver-Muller ends:
    // b+(1 + sigma/2) = b(1 - sigma/2) - dt curlE_0 + (dt/h) g_f.
    void close_B_update(std::array<std::vector<double>, 2>& Bnext, double t) const {
        const double c = med_.constants.c, h = med_.dx();
        const double sig = c * dt_ / h;
        for (int node : {0, med_.n}) {
            const bool lo = node == 0;
            if ((lo ? bc_.lo : bc_.hi) != FaceKind::SilverMuller) continue;
            const auto& f = lo ? bc_.forcing_lo : bc_.forcing_hi;
            const Vec3 g = f({{lo ? 0.0 : med_.L, 0.0, 0.0}}, t);
            const int m = lo ? 0 : med_.n - 1;
            for (int cc = 0; cc < 2; ++cc) {
                double& bn = Bnext[static_cast<size_t>(cc)][static_cast<size_t>(m)];
                const double bp = Bprev_[static_cast<size_t>(cc)][static_cast<size_t>(m)];
                bn = (bn - 0.5 * sig * bp + dt_ / h * g[cc + 1]) / (1.0 + 0.5 * sig);
            }
        }
    }

    // boundary E values at time t given the inner B layer (closure)
    double boundary_E(int cc, int node, const std::array<std::vector<double>, 2>& B, double t) const {
        const bool lo = node == 0;
        const FaceKind kind = lo ? bc_.lo : bc_.hi;
        if (kind == FaceKind::PEC) return 0.0;
        const auto& f = lo ? bc_.forcing_lo : bc_.forcing_hi;
        const Vec3 x{{lo ? 0.0 : med_.L, 0.0, 0.0}};
        const Vec3 g = f(x, t);
        const double c = med_.constants.c;
        const int m = lo ? 0 : med_.n - 1;
        const double sgn = lo ? -1.0 : 1.0;
        // x=L: Ey = cBz - g_z, Ez = g_y - cBy ; x=0: mirrored signs
        if (cc == 0) return sgn * (c * B[1][static_cast<size_t>(m)] - g[2]);
        return -sgn * (c * B[0][static_cast<size_t>(m)] - g[1]);
    }

    void set_boundary_E(std::array<std::vector<double>, 2>& E,
                        const std::array<std::vector<double>, 2>& B, double t) const {
        for (int node : {0, med_.n})
            for (int cc = 0; cc < 2; ++cc)
                E[static_cast<size_t>(cc)][static_cast<size_t>(node)] = boundary_E(cc, node, B, t);
    }

    double curlE_y(const SlabState& s, int m) const {
        // (curl E)_y = -dEz/dx
        return -(s.Et[1][static_cast<size_t>(m + 1)] - s.Et[1][static_cast<size_t>(m)]) / med_.dx();
    }
    double curlE_z(const SlabState& s, int m) const {
        return (s.Et[0][static_cast<size_t>(m + 1)] - s.Et[0][static_cast<size_t>(m)]) / med_.dx();
    }

    LedgerRow ledger(const std::array<std::vector<double>, 2>& Bm,
                     const std::array<std::vector<double>, 2>& Bp) const {
        const double eps0 = med_.constants.eps0, c = med_.constants.c, h = med_.dx();
        LedgerRow row;
        row.t = state_.t;
        for (int sp = 0; sp < layout_.ns; ++sp) {
            const auto& spm = med_.species[static_cast<size_t>(sp)];
            double k = 0.0, d = 0.0;
            for (int i = 0; i <= med_.n; ++i) {
                const double w2 = std::pow(spm.omega_p_node[static_cast<size_t>(i)], 2);
                const double j2 = std::pow(state_.Jt[static_cast<size_t>(sp)][0][static_cast<size_t>(i)], 2) +
                                  std::pow(state_.Jt[static_cast<size_t>(sp)][1][static_cast<size_t>(i)], 2);
                k += j2 / w2;
                d += spm.nu_node[static_cast<size_t>(i)] * j2 / w2;
            }
            if (layout_.longi)
                for (int m = 0; m < med_.n; ++m) {
                    const double w2 = std::pow(spm.omega_p_half[static_cast<size_t>(m)], 2);
                    const double j2 = std::pow(state_.Jx[static_cast<size_t>(sp)][static_cast<size_t>(m)], 2);
                    k += j2 / w2;
                    d += spm.nu_half[static_cast<size_t>(m)] * j2 / w2;
                }
            (sp == 0 ? row.E_J1 : row.E_J2) = 0.5 * h / eps0 * k;
            row.dissipation_vol += h / eps0 * d;
        }
        double ee = 0.0;
        for (int i = 1; i <= med_.n - 1; ++i)
            ee += std::pow(state_.Et[0][static_cast<size_t>(i)], 2) + std::pow(state_.Et[1][static_cast<size_t>(i)], 2);
        if (layout_.longi)
            for (int m = 0; m < med_.n; ++m) ee += std::pow(state_.Ex[static_cast<size_t>(m)], 2);
        row.E_E = 0.5 * eps0 * h * ee;
        double eb = 0.0;
        for (int m = 0; m < med_.n; ++m)
            eb += Bm[0][static_cast<size_t>(m)] * Bp[0][static_cast<size_t>(m)] +
                  Bm[1][static_cast<size_t>(m)] * Bp[1][static_cast<size_t>(m)];
        row.E_B = 0.5 * c * c * eps0 * h * eb;

        for (int node : {0, med_.n}) {
            const bool lo = node == 0;
            if ((lo ? bc_.lo : bc_.hi) != FaceKind::SilverMuller) continue;
            const auto& f = lo ? bc_.forcing_lo : bc_.forcing_hi;
            const Vec3 x{{lo ? 0.0 : med_.L, 0.0, 0.0}};
            const Vec3 g = f(x, state_.t);
            const int m = lo ? 0 : med_.n - 1;
            for (int cc = 0; cc < 2; ++cc) {
                const double bt = 0.5 * (Bm[static_cast<size_t>(cc)][static_cast<size_t>(m)] +
                                         Bp[static_cast<size_t>(cc)][static_cast<size_t>(m)]);
                row.dissipation_bdry += eps0 * c * c * (c * bt * bt - g[cc + 1] * bt);
            }
        }
        return row;
    }

    SlabMedium med_;
    SlabBC bc_;
    double dt_;
    SlabLayout layout_;
    SlabState state_;
    std::array<std::vector<double>, 2> Bprev_;
    std::vector<std::vector<std::array<double, 4>>> Pn_;
    std::vector<std::array<double, 4>> Den_;
    std::vector<std::vector<double>> invx_;
    std::vector<double> denx_;
};


} // namespace coldplasma


#pragma once

#include <vector>

#include "coldplasma/fdtd.hpp"

namespace coldplasma {

// Dual-cell midpoint weights: each staggered sample integrates over its own
// cell, clipped at the walls, so constants integrate exactly.
inline double edge_weight(const Grid& g, int c, int i, int j, int k) {
    double w = 1.0;
    const std::array<int, 3> idx{i, j, k};
    for (int a = 0; a < 3; ++a) {
        if (a == c) {
            w *= g.spacing(a);
            continue;
        }
        const bool boundary = idx[static_cast<size_t>(a)] == 0 || idx[static_cast<size_t>(a)] == g.cells(a);
        w *= boundary ? 0.5 * g.spacing(a) : g.spacing(a);
    }
    return w;
}
inline double face_weight(const Grid& g, int c, int i, int j, int k) {
    const std::array<int, 3> idx{i, j, k};
    double w = 1.0;
    for (int a = 0; a < 3; ++a) {
        if (a != c) {
            w *= g.spacing(a);
            continue;
        }
        const bool boundary = idx[static_cast<size_t>(a)] == 0 || idx[static_cast<size_t>(a)] == g.cells(a);
        w *= boundary ? 0.5 * g.spacing(a) : g.spacing(a);
    }
    return w;
}

struct EnergyReport {
    double t = 0.0;
    double total = 0.0;
    double kinetic1 = 0.0, kinetic2 = 0.0;
    double electric = 0.0, magnetic = 0.0;
    double boundary_flux = 0.0;     // eps0 c^2 int_{Gamma_A} (c|B_top|^2 - g.B_top)
    double dissipation_vol = 0.0;   // (1/eps0) sum_s ||sqrt(nu) J_s/w_ps||^2
};

// Snapshot energy: E(t) = 1/2 ||U||_X^2 with the dual-cell quadrature over
// every stored sample (the run ledger uses its own leapfrog-consistent
// accounting; see Stepper).
inline EnergyReport energy(const StateVector& s, const MediumFields& m) {
    const Grid& g = s.grid;
    const double eps0 = m.constants.eps0, c = m.constants.c;
    EnergyReport r;
    r.t = s.t;
    for (size_t sp = 0; sp < m.species.size(); ++sp) {
        double k = 0.0, d = 0.0;
        const EdgeField& J = sp == 0 ? s.J1 : s.J2;
        for (int cc = 0; cc < 3; ++cc) {
            const auto& wp = m.species[sp].omega_p[static_cast<size_t>(cc)];
            const auto& nu = m.species[sp].nu[static_cast<size_t>(cc)];
            const auto& a = J.comp[static_cast<size_t>(cc)];
            const auto dd = a.dims;
            for (int i = 0; i < dd[0]; ++i)
                for (int j = 0; j < dd[1]; ++j)
                    for (int kk = 0; kk < dd[2]; ++kk) {
                        const double w = edge_weight(g, cc, i, j, kk);
                        const double q = std::pow(a(i, j, kk) / wp(i, j, kk), 2);
                        k += w * q;
                        d += w * nu(i, j, kk) * q;
                    }
        }
        (sp == 0 ? r.kinetic1 : r.kinetic2) = 0.5 * k / eps0;
        r.dissipation_vol += d / eps0;
    }
    for (int cc = 0; cc < 3; ++cc) {
        const auto& a = s.E.comp[static_cast<size_t>(cc)];
        const auto dd = a.dims;
        for (int i = 0; i < dd[0]; ++i)
            for (int j = 0; j < dd[1]; ++j)
                for (int kk = 0; kk < dd[2]; ++kk)
                    r.electric += edge_weight(g, cc, i, j, kk) * a(i, j, kk) * a(i, j, kk);
        const auto& b = s.B.comp[static_cast<size_t>(cc)];
        const auto db = b.dims;
        for (int i = 0; i < db[0]; ++i)
            for (int j = 0; j < db[1]; ++j)
                for (int kk = 0; kk < db[2]; ++kk)
                    r.magnetic += face_weight(g, cc, i, j, kk) * b(i, j, kk) * b(i, j, kk);
    }
    r.electric *= 0.5 * eps0;
    r.magnetic *= 0.5 * c * c * eps0;
    r.total = r.kinetic1 + r.kinetic2 + r.electric + r.magnetic;
    return r;
}

inline EnergyReport energy(const StateVector& s, const MediumFields& m, const BoundarySpec& bc) {
    EnergyReport r = energy(s, m);
    const Grid& g = s.grid;
    const double eps0 = m.constants.eps0, c = m.constants.c;
    for (int axis = 0; axis < 3; ++axis)
        for (int side = 0; side < 2; ++side) {
            if (bc.at(axis, side).kind != FaceKind::SilverMuller) continue;
            const int b = (axis + 1) % 3, c2 = (axis + 2) % 3;
            const double area = g.spacing(b) * g.spacing(c2);
            const int bplane = side == 0 ? 0 : g.cells(axis) - 1;
            for (int f : {b, c2}) {
                const auto& bf = s.B.comp[static_cast<size_t>(f)];
                const auto d = bf.dims;
                std::array<int, 3> lo{0, 0, 0}, hi{d[0], d[1], d[2]};
                lo[static_cast<size_t>(axis)] = bplane;
                hi[static_cast<size_t>(axis)] = bplane + 1;
                for (int i = lo[0]; i < hi[0]; ++i)
                    for (int j = lo[1]; j < hi[1]; ++j)
                        for (int k = lo[2]; k < hi[2]; ++k) {
                            Vec3 x = g.face_center(f, i, j, k);
                            x[axis] = side == 0 ? 0.0 : g.extent(axis);
                            const double bt = bf(i, j, k);
                            const double gv = bc.at(axis, side).forcing(x, s.t)[f];
                            r.boundary_flux += (c * bt * bt - gv * bt) * area;
                        }
            }
        }
    r.boundary_flux *= eps0 * c * c;
    return r;
}

// ---------------------------------------------------------------------------
// Run traces and the dissipation ledger.
// ---------------------------------------------------------------------------

struct RunTrace {
    std::vector<LedgerRow> rows;

    std::vector<double> times() const {
        std::vector<double> t;
        for (const auto& r : rows) t.push_back(r.t);
        return t;
    }
    std::vector<double> norms() const { // ||U||_X = sqrt(2 E)
        std::vector<double> n;
        for (const auto& r : rows) n.push_back(std::sqrt(std::max(0.0, 2.0 * r.total())));
        return n;
    }
};

struct BalanceReport {
    std::vector<double> t_mid;
    std::vector<double> residual; // [E^{m} - E^{m-1}]/dt + avg dissipation
    double max_abs = 0.0;
    double l2 = 0.0;
};

// residual_n = [E(t_{m}) - E(t_{m-1})]/(t_m - t_{m-1}) - RHS(t_{m-1/2}),
// RHS = -(volumetric + boundary dissipation), midpoint-sampled from the
// instantaneous columns of the trace.
inline BalanceReport dissipation_balance(const RunTrace& trace) {
    BalanceReport rep;
    for (size_t m = 1; m < trace.rows.size(); ++m) {
        const auto& a = trace.rows[m - 1];
        const auto& b = trace.rows[m];
        const double dt = b.t - a.t;
        if (dt <= 0) continue;
        const double dE = (b.total() - a.total()) / dt;
        const double rhs = -0.5 * (a.dissipation_vol + b.dissipation_vol) -
                           0.5 * (a.dissipation_bdry + b.dissipation_bdry);
        const double r = dE - rhs;
        rep.t_mid.push_back(0.5 * (a.t + b.t));
        rep.residual.push_back(r);
        rep.max_abs = std::max(rep.max_abs, std::abs(r));
        rep.l2 += r * r * dt;
    }
    rep.l2 = std::sqrt(rep.l2);
    return rep;
}

struct ConstraintReport {
    double divB_max = 0.0;
    double gauss_max = 0.0;
    double Bn_on_GammaP_max = 0.0;
};

inline ConstraintReport constraint_residuals(const StateVector& s, const MediumFields& m,
                                             const BoundarySpec& bc) {
    const Grid& g = s.grid;
    ConstraintReport r;
    const auto divB = divergence_faces(g, s.B);
    for (double x : divB.v) r.divB_max = std::max(r.divB_max, std::abs(x));
    const auto divE = divergence_edges(g, s.E);
    for (int i = 1; i < g.nx; ++i)
        for (int j = 1; j < g.ny; ++j)
            for (int k = 1; k < g.nz; ++k) {
                double res = divE(i, j, k);
                if (s.has_rho) res -= (s.rho1(i, j, k) + s.rho2(i, j, k)) / m.constants.eps0;
                r.gauss_max = std::max(r.gauss_max, std::abs(res));
            }
    for (int axis = 0; axis < 3; ++axis)
        for (int side = 0; side < 2; ++side) {
            if (bc.at(axis, side).kind != FaceKind::PEC) continue;
            const int plane = side == 0 ? 0 : g.cells(axis);
            const auto& bn = s.B.comp[static_cast<size_t>(axis)];
            const auto d = bn.dims;
            std::array<int, 3> lo{0, 0, 0}, hi{d[0], d[1], d[2]};
            lo[static_cast<size_t>(axis)] = plane;
            hi[static_cast<size_t>(axis)] = plane + 1;
            for (int i = lo[0]; i < hi[0]; ++i)
                for (int j = lo[1]; j < hi[1]; ++j)
                    for (int k = lo[2]; k < hi[2]; ++k)
                        r.Bn_on_GammaP_max = std::max(r.Bn_on_GammaP_max, std::abs(bn(i, j, k)));
        }
    return r;
}

// ---------------------------------------------------------------------------
// Decay-rate fitting.
// ---------------------------------------------------------------------------

enum class DecayModel { Poly, Exp };

struct DecayFit {
    DecayModel model = DecayModel::Poly;
    double rate = 0.0;      // slope of log||U|| vs log t (poly) or vs t (exp)
    double prefactor = 0.0; // exp(intercept)
    double window_lo = 0.0, window_hi = 0.0;
    double residual = 0.0;  // rms of the fit residual in log space
    size_t points = 0;
};

inline DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& norm,
                          DecayModel model, double window_lo = -1.0, double window_hi = -1.0) {
    if (t.size() != norm.size() || t.empty())
        throw DegenerateSeries("fit_decay: empty or mismatched series");
    const double T = t.back();
    if (window_lo < 0) window_lo = std::max(1.0, T / 10.0);
    if (window_hi < 0) window_hi = T;

    std::vector<double> xs, ys;
    for (size_t i = 0; i < t.size(); ++i) {
        if (t[i] < window_lo || t[i] > window_hi) continue;
        if (!(norm[i] > 0.0))
            throw DegenerateSeries("fit_decay: non-positive norm inside the fit window");
        xs.push_back(model == DecayModel::Poly ? std::log(t[i]) : t[i]);
        ys.push_back(std::log(norm[i]));
    }
    if (xs.size() < 4) throw DegenerateSeries("fit_decay: fewer than 4 samples in the window");

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(xs.size());
    for (size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-30) throw DegenerateSeries("fit_decay: degenerate abscissae");
    DecayFit f;
    f.model = model;
    f.rate = (n * sxy - sx * sy) / denom;
    const double intercept = (sy - f.rate * sx) / n;
    f.prefactor = std::exp(intercept);
    f.window_lo = window_lo;
    f.window_hi = window_hi;
    f.points = xs.size();
    double ss = 0;
    for (size_t i = 0; i < xs.size(); ++i)
        ss += std::pow(ys[i] - (intercept + f.rate * xs[i]), 2);
    f.residual = std::sqrt(ss / n);
    return f;
}

} // namespace coldplasma

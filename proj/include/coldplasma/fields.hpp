#pragma once

#include "coldplasma/medium.hpp"

namespace coldplasma {

// Per-face boundary tags. Faces indexed axis*2+side (side 0 = low, 1 = high).
enum class FaceKind { PEC, SilverMuller };

struct ForcingSpec {
    enum class Kind { None, Harmonic, Pulse } kind = Kind::None;
    double omega = 0.0;            // harmonic angular frequency
    VectorProfile g_re, g_im;      // complex spatial profile g_hat = g_re + i g_im
    double t0 = 0.0, sigma_t = 1.0; // pulse envelope

    // g(x, t), tangential components used by the caller.
    Vec3 operator()(const Vec3& x, double t) const {
        switch (kind) {
        case Kind::None:
            return {};
        case Kind::Harmonic: {
            const double cwt = std::cos(omega * t), swt = std::sin(omega * t);
            // Re[(g_re + i g_im) e^{-i omega t}]
            return g_re(x) * cwt + g_im(x) * swt;
        }
        case Kind::Pulse: {
            const double env = std::exp(-0.5 * std::pow((t - t0) / sigma_t, 2));
            return g_re(x) * env;
        }
        }
        return {};
    }
};

struct FaceBC {
    FaceKind kind = FaceKind::PEC;
    ForcingSpec forcing;
};

struct BoundarySpec {
    std::array<FaceBC, 6> face{};

    const FaceBC& at(int axis, int side) const { return face[static_cast<size_t>(2 * axis + side)]; }
    FaceBC& at(int axis, int side) { return face[static_cast<size_t>(2 * axis + side)]; }

    bool any_silver_muller() const {
        for (const auto& f : face)
            if (f.kind == FaceKind::SilverMuller) return true;
        return false;
    }
    static BoundarySpec all_pec() { return {}; }
    static BoundarySpec all_silver_muller() {
        BoundarySpec b;
        for (auto& f : b.face) f.kind = FaceKind::SilverMuller;
        return b;
    }
};

// U = (J1, J2, E, B) on the staggered grid, plus optional charge densities.
struct StateVector {
    Grid grid;
    double t = 0.0;
    EdgeField J1, J2, E;
    FaceField B;
    bool has_rho = false;
    Array3 rho1, rho2; // node located

    static StateVector zero(const Grid& g, bool with_rho = false) {
        StateVector s;
        s.grid = g;
        s.J1 = make_edge_field<double>(g);
        s.J2 = make_edge_field<double>(g);
        s.E = make_edge_field<double>(g);
        s.B = make_face_field<double>(g);
        s.has_rho = with_rho;
        if (with_rho) {
            s.rho1.resize(g.node_dims());
            s.rho2.resize(g.node_dims());
        }
        return s;
    }

    EdgeField& J(int s) { return s == 0 ? J1 : J2; }
    const EdgeField& J(int s) const { return s == 0 ? J1 : J2; }
};

// Marks which E-edge samples are independent unknowns. Tangential samples on
// any boundary face are not: PEC pins them to zero and the Silver-Muller
// closure derives them from B and g.
struct DofMask {
    std::array<Arr3<unsigned char>, 3> free_edge;

    static DofMask make(const Grid& g) {
        DofMask m;
        for (int c = 0; c < 3; ++c) {
            auto& a = m.free_edge[static_cast<size_t>(c)];
            a.resize(g.edge_dims(c));
            const auto d = a.dims;
            for (int i = 0; i < d[0]; ++i)
                for (int j = 0; j < d[1]; ++j)
                    for (int k = 0; k < d[2]; ++k)
                        a(i, j, k) = edge_on_any_boundary(g, c, i, j, k) ? 0 : 1;
        }
        return m;
    }
    bool is_free(int c, int i, int j, int k) const { return free_edge[static_cast<size_t>(c)](i, j, k) != 0; }
};

inline double dot_edges(const EdgeField& a, const EdgeField& b) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c)
        for (size_t i = 0; i < a.comp[static_cast<size_t>(c)].v.size(); ++i)
            s += a.comp[static_cast<size_t>(c)].v[i] * b.comp[static_cast<size_t>(c)].v[i];
    return s;
}
inline double dot_edges_masked(const EdgeField& a, const EdgeField& b, const DofMask& m) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c) {
        const auto& mask = m.free_edge[static_cast<size_t>(c)];
        for (size_t i = 0; i < mask.v.size(); ++i)
            if (mask.v[i]) s += a.comp[static_cast<size_t>(c)].v[i] * b.comp[static_cast<size_t>(c)].v[i];
    }
    return s;
}
inline double dot_faces(const FaceField& a, const FaceField& b) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c)
        for (size_t i = 0; i < a.comp[static_cast<size_t>(c)].v.size(); ++i)
            s += a.comp[static_cast<size_t>(c)].v[i] * b.comp[static_cast<size_t>(c)].v[i];
    return s;
}

// Kinetic-weighted inner product of the species currents: sum (a/w)(b/w).
inline double dot_current_weighted(const EdgeField& a, const EdgeField& b,
                                   const MediumFields& m, int species) {
    double s = 0.0;
    const auto& sp = m.species[static_cast<size_t>(species)];
    for (int c = 0; c < 3; ++c) {
        const auto& wp = sp.omega_p[static_cast<size_t>(c)];
        const auto& ac = a.comp[static_cast<size_t>(c)];
        const auto& bc = b.comp[static_cast<size_t>(c)];
        for (size_t i = 0; i < ac.v.size(); ++i) s += ac.v[i] * bc.v[i] / (wp.v[i] * wp.v[i]);
    }
    return s;
}

// Energy-space inner product: midpoint quadrature on the staggered lattices,
// each field family integrated where it lives.
inline double dot_X(const StateVector& u, const StateVector& v, const MediumFields& m,
                    const DofMask& mask) {
    const double vol = u.grid.cell_volume();
    const double eps0 = m.constants.eps0, c = m.constants.c;
    double s = 0.0;
    s += dot_current_weighted(u.J1, v.J1, m, 0) / eps0;
    s += dot_current_weighted(u.J2, v.J2, m, 1) / eps0;
    s += eps0 * dot_edges_masked(u.E, v.E, mask);
    s += c * c * eps0 * dot_faces(u.B, v.B);
    return s * vol;
}
inline double norm_X(const StateVector& u, const MediumFields& m, const DofMask& mask) {
    return std::sqrt(dot_X(u, u, m, mask));
}

inline void axpy(StateVector& y, double a, const StateVector& x) {
    for (int c = 0; c < 3; ++c) {
        for (size_t i = 0; i < y.E.comp[static_cast<size_t>(c)].v.size(); ++i) {
            y.J1.comp[static_cast<size_t>(c)].v[i] += a * x.J1.comp[static_cast<size_t>(c)].v[i];
            y.J2.comp[static_cast<size_t>(c)].v[i] += a * x.J2.comp[static_cast<size_t>(c)].v[i];
            y.E.comp[static_cast<size_t>(c)].v[i] += a * x.E.comp[static_cast<size_t>(c)].v[i];
        }
        for (size_t i = 0; i < y.B.comp[static_cast<size_t>(c)].v.size(); ++i)
            y.B.comp[static_cast<size_t>(c)].v[i] += a * x.B.comp[static_cast<size_t>(c)].v[i];
    }
    if (y.has_rho && x.has_rho)
        for (size_t i = 0; i < y.rho1.v.size(); ++i) {
            y.rho1.v[i] += a * x.rho1.v[i];
            y.rho2.v[i] += a * x.rho2.v[i];
        }
}
inline void scale(StateVector& y, double a) {
    for (int c = 0; c < 3; ++c) {
        for (auto* f : {&y.J1, &y.J2, &y.E})
            for (auto& val : f->comp[static_cast<size_t>(c)].v) val *= a;
        for (auto& val : y.B.comp[static_cast<size_t>(c)].v) val *= a;
    }
    if (y.has_rho) {
        for (auto& val : y.rho1.v) val *= a;
        for (auto& val : y.rho2.v) val *= a;
    }
}

} // namespace coldplasma

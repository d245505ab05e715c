#pragma once

#include <random>

#include "coldplasma/fdtd.hpp"

namespace coldplasma {

inline EdgeField random_edge_field(const Grid& g, std::mt19937_64& rng, double amp = 1.0) {
    std::uniform_real_distribution<double> u(-amp, amp);
    auto f = make_edge_field<double>(g);
    for (int c = 0; c < 3; ++c)
        for (auto& x : f.comp[static_cast<size_t>(c)].v) x = u(rng);
    return f;
}

inline FaceField random_face_field(const Grid& g, std::mt19937_64& rng, double amp = 1.0) {
    std::uniform_real_distribution<double> u(-amp, amp);
    auto f = make_face_field<double>(g);
    for (int c = 0; c < 3; ++c)
        for (auto& x : f.comp[static_cast<size_t>(c)].v) x = u(rng);
    return f;
}

// Smooth random field: a few random low-order sine/cosine products.
inline double smooth_random_value(const Vec3& x, const Grid& g, const std::vector<std::array<double, 7>>& modes) {
    double v = 0.0;
    for (const auto& m : modes) {
        const double px = m[1] * M_PI * x[0] / g.Lx + m[4];
        const double py = m[2] * M_PI * x[1] / g.Ly + m[5];
        const double pz = m[3] * M_PI * x[2] / g.Lz + m[6];
        v += m[0] * std::sin(px) * std::sin(py) * std::sin(pz);
    }
    return v;
}

inline std::vector<std::array<double, 7>> random_modes(std::mt19937_64& rng, int count, int max_mode) {
    std::uniform_real_distribution<double> amp(-1.0, 1.0), ph(0.0, 2.0 * M_PI);
    std::uniform_int_distribution<int> mm(1, max_mode);
    std::vector<std::array<double, 7>> modes;
    for (int i = 0; i < count; ++i)
        modes.push_back({amp(rng), double(mm(rng)), double(mm(rng)), double(mm(rng)), ph(rng), ph(rng), ph(rng)});
    return modes;
}

inline EdgeField smooth_edge_field(const Grid& g, std::mt19937_64& rng, int nmodes = 3, int max_mode = 2) {
    auto f = make_edge_field<double>(g);
    for (int c = 0; c < 3; ++c) {
        const auto modes = random_modes(rng, nmodes, max_mode);
        auto& a = f.comp[static_cast<size_t>(c)];
        const auto d = a.dims;
        for (int i = 0; i < d[0]; ++i)
            for (int j = 0; j < d[1]; ++j)
                for (int k = 0; k < d[2]; ++k)
                    a(i, j, k) = smooth_random_value(g.edge_center(c, i, j, k), g, modes);
    }
    return f;
}

inline FaceField smooth_face_field(const Grid& g, std::mt19937_64& rng, int nmodes = 3, int max_mode = 2) {
    auto f = make_face_field<double>(g);
    for (int c = 0; c < 3; ++c) {
        const auto modes = random_modes(rng, nmodes, max_mode);
        auto& a = f.comp[static_cast<size_t>(c)];
        const auto d = a.dims;
        for (int i = 0; i < d[0]; ++i)
            for (int j = 0; j < d[1]; ++j)
                for (int k = 0; k < d[2]; ++k)
                    a(i, j, k) = smooth_random_value(g.face_center(c, i, j, k), g, modes);
    }
    return f;
}

// Random state with exactly divergence-free E (interior nodes) and B:
// E = curl_B(face potential) and B = curl_E(edge potential), so the discrete
// constraints hold to machine precision at t = 0.
inline StateVector random_divfree_state(const Grid& g, uint64_t seed, bool with_rho = false,
                                        bool smooth = true, double j_amp = 1.0) {
    std::mt19937_64 rng(seed);
    StateVector s = StateVector::zero(g, with_rho);
    const auto facepot = smooth ? smooth_face_field(g, rng) : random_face_field(g, rng);
    const auto edgepot = smooth ? smooth_edge_field(g, rng) : random_edge_field(g, rng);
    curl_B_into(g, facepot, s.E);
    curl_E_into(g, edgepot, s.B);
    if (j_amp != 0.0) {
        s.J1 = smooth ? smooth_edge_field(g, rng) : random_edge_field(g, rng, j_amp);
        s.J2 = smooth ? smooth_edge_field(g, rng) : random_edge_field(g, rng, j_amp);
    }
    return s;
}

// Cavity-type mode: one E component with sine dependence in its transverse
// axes, vanishing where tangential to the box walls.
inline StateVector cavity_mode_state(const Grid& g, int component, int mb, int mc, double amp) {
    StateVector s = StateVector::zero(g);
    const int b = (component + 1) % 3, c2 = (component + 2) % 3;
    auto& a = s.E.comp[static_cast<size_t>(component)];
    const auto d = a.dims;
    for (int i = 0; i < d[0]; ++i)
        for (int j = 0; j < d[1]; ++j)
            for (int k = 0; k < d[2]; ++k) {
                const Vec3 x = g.edge_center(component, i, j, k);
                a(i, j, k) = amp * std::sin(mb * M_PI * x[b] / g.extent(b)) *
                             std::sin(mc * M_PI * x[c2] / g.extent(c2));
            }
    return s;
}

} // namespace coldplasma

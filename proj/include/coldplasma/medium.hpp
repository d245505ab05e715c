#pragma once

#include <limits>
#include <string>
#include <vector>

#include "coldplasma/grid.hpp"
#include "coldplasma/profiles.hpp"

namespace coldplasma {

// One particle species: plasma frequency and collision frequency profiles,
// plus the signed charge data entering Omega_cs = charge_sign * q/m * |B_ext|.
struct SpeciesSpec {
    std::string name = "species";
    Profile omega_p = Profile::constant(1.0);
    Profile nu = Profile::constant(1.0);
    int charge_sign = -1;          // electrons by default
    double charge_to_mass = 1.0;   // |q_s| / m_s in scenario units
};

struct MediumSpec {
    std::vector<SpeciesSpec> species; // exactly two in this model
    VectorProfile B_ext = VectorProfile::uniform({{0.0, 0.0, 1.0}});
};

struct ViolationSite {
    int species = -1; // -1 when not species specific
    int family = 0;   // edge component family
    int i = 0, j = 0, k = 0;
    std::string what;
};

struct BoundsReport {
    double nu_star = 0.0;
    double Omega_star = 0.0;
    double omega_star = 0.0;
    double nu_lower = std::numeric_limits<double>::infinity();
    double omega_lower = std::numeric_limits<double>::infinity();
    bool hyp1_ok = false;
    bool hyp2_ok = false;
    size_t violation_count = 0;
    std::vector<ViolationSite> violations; // capped sample of the sites

    static constexpr size_t kMaxRecorded = 256;

    void record(const ViolationSite& v) {
        ++violation_count;
        if (violations.size() < kMaxRecorded) violations.push_back(v);
    }
};

// Coefficients sampled where the E/J components live (one lattice per edge
// family); the anisotropy direction b is stored as a full unit vector at
// each edge sample.
struct MediumFields {
    Grid grid;
    Constants constants;

    struct SpeciesFields {
        SpeciesSpec spec;
        std::array<Array3, 3> omega_p; // [edge family]
        std::array<Array3, 3> nu;
        std::array<Array3, 3> Omega_c; // signed
    };
    std::vector<SpeciesFields> species;

    // b component arrays: b[family][component]
    std::array<std::array<Array3, 3>, 3> b;

    BoundsReport bounds;

    size_t n_species() const { return species.size(); }

    Vec3 b_at(int family, int i, int j, int k) const {
        const auto& fb = b[static_cast<size_t>(family)];
        return {{fb[0](i, j, k), fb[1](i, j, k), fb[2](i, j, k)}};
    }

    bool isotropic() const {
        for (const auto& s : species)
            for (int c = 0; c < 3; ++c)
                for (double w : s.Omega_c[static_cast<size_t>(c)].v)
                    if (w != 0.0) return false;
        return true;
    }
};

inline BoundsReport validate_hypotheses(const MediumFields& m);

inline MediumFields sample_medium(const MediumSpec& spec, const Grid& grid,
                                  const Constants& constants = {}) {
    MediumFields m;
    m.grid = grid;
    m.constants = constants;
    if (grid.nx < 1 || grid.ny < 1 || grid.nz < 1)
        throw ShapeMismatch("sample_medium: empty grid");

    for (int c = 0; c < 3; ++c)
        for (int comp = 0; comp < 3; ++comp)
            m.b[static_cast<size_t>(c)][static_cast<size_t>(comp)].resize(grid.edge_dims(c));

    m.species.reserve(spec.species.size());
    for (const auto& sp : spec.species) {
        MediumFields::SpeciesFields f;
        f.spec = sp;
        for (int c = 0; c < 3; ++c) {
            f.omega_p[static_cast<size_t>(c)].resize(grid.edge_dims(c));
            f.nu[static_cast<size_t>(c)].resize(grid.edge_dims(c));
            f.Omega_c[static_cast<size_t>(c)].resize(grid.edge_dims(c));
        }
        m.species.push_back(std::move(f));
    }

    for (int c = 0; c < 3; ++c) {
        const auto d = grid.edge_dims(c);
        for (int i = 0; i < d[0]; ++i)
            for (int j = 0; j < d[1]; ++j)
                for (int k = 0; k < d[2]; ++k) {
                    const Vec3 x = grid.edge_center(c, i, j, k);
                    const Vec3 Bext = spec.B_ext(x);
                    const double Bmag = norm(Bext);
                    if (Bmag < 1e-30)
                        throw ZeroExternalField(
                            "sample_medium: |B_ext| = 0 at a sample point; anisotropy direction undefined");
                    const Vec3 bunit = Bext * (1.0 / Bmag);
                    for (int comp = 0; comp < 3; ++comp)
                        m.b[static_cast<size_t>(c)][static_cast<size_t>(comp)](i, j, k) = bunit[comp];
                    for (auto& f : m.species) {
                        f.omega_p[static_cast<size_t>(c)](i, j, k) = f.spec.omega_p(x);
                        f.nu[static_cast<size_t>(c)](i, j, k) = f.spec.nu(x);
                        f.Omega_c[static_cast<size_t>(c)](i, j, k) =
                            f.spec.charge_sign * f.spec.charge_to_mass * Bmag;
                    }
                }
    }

    m.bounds = validate_hypotheses(m);
    return m;
}

// Exact sample-wise extrema and pass/fail flags for the standing hypotheses:
// 0 <= nu <= nu*, |Omega_c| <= Omega*, 0 < omega_p <= omega*  (hyp1)
// nu >= nu_* > 0 and omega_p >= omega_* > 0                    (hyp2)
inline BoundsReport validate_hypotheses(const MediumFields& m) {
    BoundsReport r;
    r.nu_star = -std::numeric_limits<double>::infinity();
    r.Omega_star = 0.0;
    r.omega_star = -std::numeric_limits<double>::infinity();
    bool hyp1 = true;

    for (size_t s = 0; s < m.species.size(); ++s) {
        const auto& f = m.species[s];
        for (int c = 0; c < 3; ++c) {
            const auto& nu = f.nu[static_cast<size_t>(c)];
            const auto& wp = f.omega_p[static_cast<size_t>(c)];
            const auto& oc = f.Omega_c[static_cast<size_t>(c)];
            const auto d = nu.dims;
            for (int i = 0; i < d[0]; ++i)
                for (int j = 0; j < d[1]; ++j)
                    for (int k = 0; k < d[2]; ++k) {
                        const double nv = nu(i, j, k);
                        const double wv = wp(i, j, k);
                        const double ov = std::abs(oc(i, j, k));
                        r.nu_star = std::max(r.nu_star, nv);
                        r.nu_lower = std::min(r.nu_lower, nv);
                        r.omega_star = std::max(r.omega_star, wv);
                        r.omega_lower = std::min(r.omega_lower, wv);
                        r.Omega_star = std::max(r.Omega_star, ov);
                        if (nv < 0.0)
                            r.record({static_cast<int>(s), c, i, j, k, "nu < 0"});
                        if (wv <= 0.0)
                            r.record({static_cast<int>(s), c, i, j, k, "omega_p <= 0"});
                        if (nv < 0.0 || wv <= 0.0) hyp1 = false;
                        if (!std::isfinite(nv) || !std::isfinite(wv) || !std::isfinite(ov)) {
                            hyp1 = false;
                            r.record({static_cast<int>(s), c, i, j, k, "non-finite coefficient"});
                        }
                    }
        }
    }

    r.hyp1_ok = hyp1;
    r.hyp2_ok = hyp1 && r.nu_lower > 0.0 && r.omega_lower > 0.0;
    return r;
}

} // namespace coldplasma

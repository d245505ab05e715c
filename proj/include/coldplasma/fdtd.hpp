#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <memory>

#include "coldplasma/fields.hpp"
#include "coldplasma/stix.hpp"

namespace coldplasma {

// ---------------------------------------------------------------------------
// Discrete curls on the staggered grid.
// ---------------------------------------------------------------------------

template <class T>
void curl_E_into(const Grid& g, const StaggeredField<T>& E, StaggeredField<T>& out) {
    for (int a = 0; a < 3; ++a) {
        const int b = (a + 1) % 3, c = (a + 2) % 3;
        auto& oa = out.comp[static_cast<size_t>(a)];
        if (oa.dims != g.face_dims(a)) throw ShapeMismatch("curl_E: output face dims");
        const auto& Eb = E.comp[static_cast<size_t>(b)];
        const auto& Ec = E.comp[static_cast<size_t>(c)];
        const double hb = g.spacing(b), hc = g.spacing(c);
        const auto d = oa.dims;
        std::array<int, 3> eb{0, 0, 0}, ec{0, 0, 0};
        eb[static_cast<size_t>(b)] = 1;
        ec[static_cast<size_t>(c)] = 1;
        for (int i = 0; i < d[0]; ++i)
            for (int j = 0; j < d[1]; ++j)
                for (int k = 0; k < d[2]; ++k)
                    oa(i, j, k) = (Ec(i + eb[0], j + eb[1], k + eb[2]) - Ec(i, j, k)) * (1.0 / hb) -
                                  (Eb(i + ec[0], j + ec[1], k + ec[2]) - Eb(i, j, k)) * (1.0 / hc);
    }
}

template <class T>
StaggeredField<T> curl_E_field(const Grid& g, const StaggeredField<T>& E) {
    auto out = make_face_field<T>(g);
    curl_E_into(g, E, out);
    return out;
}

// Circulation of B around interior edges; boundary-tangential entries are
// left at zero (those E samples are governed by the boundary conditions).
template <class T>
void curl_B_into(const Grid& g, const StaggeredField<T>& B, StaggeredField<T>& out) {
    for (int a = 0; a < 3; ++a) {
        const int b = (a + 1) % 3, c = (a + 2) % 3;
        auto& oa = out.comp[static_cast<size_t>(a)];
        if (oa.dims != g.edge_dims(a)) throw ShapeMismatch("curl_B: output edge dims");
        oa.fill(T{});
        const auto& Bb = B.comp[static_cast<size_t>(b)];
        const auto& Bc = B.comp[static_cast<size_t>(c)];
        const double hb = g.spacing(b), hc = g.spacing(c);
        const auto d = oa.dims;
        // interior in the b and c directions
        std::array<int, 3> lo{0, 0, 0}, hi{d[0], d[1], d[2]};
        lo[static_cast<size_t>(b)] = 1;
        hi[static_cast<size_t>(b)] = d[static_cast<size_t>(b)] - 1;
        lo[static_cast<size_t>(c)] = 1;
        hi[static_cast<size_t>(c)] = d[static_cast<size_t>(c)] - 1;
        std::array<int, 3> eb{0, 0, 0}, ec{0, 0, 0};
        eb[static_cast<size_t>(b)] = 1;
        ec[static_cast<size_t>(c)] = 1;
        for (int i = lo[0]; i < hi[0]; ++i)
            for (int j = lo[1]; j < hi[1]; ++j)
                for (int k = lo[2]; k < hi[2]; ++k)
                    oa(i, j, k) = (Bc(i, j, k) - Bc(i - eb[0], j - eb[1], k - eb[2])) * (1.0 / hb) -
                                  (Bb(i, j, k) - Bb(i - ec[0], j - ec[1], k - ec[2])) * (1.0 / hc);
    }
}

template <class T>
StaggeredField<T> curl_B_field(const Grid& g, const StaggeredField<T>& B) {
    auto out = make_edge_field<T>(g);
    curl_B_into(g, B, out);
    return out;
}

// Node-located divergence of an edge field (interior nodes only).
template <class T>
Arr3<T> divergence_edges(const Grid& g, const StaggeredField<T>& F) {
    Arr3<T> out(g.node_dims());
    for (int i = 1; i < g.nx; ++i)
        for (int j = 1; j < g.ny; ++j)
            for (int k = 1; k < g.nz; ++k)
                out(i, j, k) = (F.comp[0](i, j, k) - F.comp[0](i - 1, j, k)) * (1.0 / g.dx()) +
                               (F.comp[1](i, j, k) - F.comp[1](i, j - 1, k)) * (1.0 / g.dy()) +
                               (F.comp[2](i, j, k) - F.comp[2](i, j, k - 1)) * (1.0 / g.dz());
    return out;
}

// Cell-located divergence of a face field.
template <class T>
Arr3<T> divergence_faces(const Grid& g, const StaggeredField<T>& F) {
    Arr3<T> out(g.cell_dims());
    for (int i = 0; i < g.nx; ++i)
        for (int j = 0; j < g.ny; ++j)
            for (int k = 0; k < g.nz; ++k)
                out(i, j, k) = (F.comp[0](i + 1, j, k) - F.comp[0](i, j, k)) * (1.0 / g.dx()) +
                               (F.comp[1](i, j + 1, k) - F.comp[1](i, j, k)) * (1.0 / g.dy()) +
                               (F.comp[2](i, j, k + 1) - F.comp[2](i, j, k)) * (1.0 / g.dz());
    return out;
}

// Node gradient, useful to build curl-free edge fields in tests.
inline EdgeField gradient_nodes(const Grid& g, const Array3& phi) {
    auto out = make_edge_field<double>(g);
    for (int a = 0; a < 3; ++a) {
        auto& oa = out.comp[static_cast<size_t>(a)];
        const auto d = oa.dims;
        std::array<int, 3> ea{0, 0, 0};
        ea[static_cast<size_t>(a)] = 1;
        for (int i = 0; i < d[0]; ++i)
            for (int j = 0; j < d[1]; ++j)
                for (int k = 0; k < d[2]; ++k)
                    oa(i, j, k) =
                        (phi(i + ea[0], j + ea[1], k + ea[2]) - phi(i, j, k)) / g.spacing(a);
    }
    return out;
}

inline double cfl_max_dt(const Grid& g, double c) {
    const double s = 1.0 / (g.dx() * g.dx()) + 1.0 / (g.dy() * g.dy()) + 1.0 / (g.dz() * g.dz());
    return 1.0 / (c * std::sqrt(s));
}

// ---------------------------------------------------------------------------
// Boundary conditions.
// ---------------------------------------------------------------------------

// Zero the tangential E samples lying in PEC faces (in place).
template <class T>
void pec_zero_tangential(const Grid& g, const BoundarySpec& bc, StaggeredField<T>& E) {
    for (int axis = 0; axis < 3; ++axis)
        for (int side = 0; side < 2; ++side) {
            if (bc.at(axis, side).kind != FaceKind::PEC) continue;
            const int plane = side == 0 ? 0 : g.cells(axis);
            for (int f = 0; f < 3; ++f) {
                if (f == axis) continue;
                auto& a = E.comp[static_cast<size_t>(f)];
                const auto d = a.dims;
                std::array<int, 3> lo{0, 0, 0}, hi{d[0], d[1], d[2]};
                lo[static_cast<size_t>(axis)] = plane;
                hi[static_cast<size_t>(axis)] = plane + 1;
                for (int i = lo[0]; i < hi[0]; ++i)
                    for (int j = lo[1]; j < hi[1]; ++j)
                        for (int k = lo[2]; k < hi[2]; ++k) a(i, j, k) = T{};
            }
        }
}

// First-order impedance closure: set the tangential E samples of every
// Silver-Muller face so that E x n + c B_top = g at face centers, with B
// collocated one half cell inward. gfn(axis, side, family, i, j, k) supplies
// the tangential forcing component; pass a lambda returning T{} for the
// homogeneous condition. PEC faces are zeroed afterwards, so a PEC tag wins
// on shared box edges.
template <class T, class GFn>
void apply_boundary_closure(const Grid& g, const BoundarySpec& bc, const StaggeredField<T>& B,
                            double c, StaggeredField<T>& E, GFn&& gfn) {
    for (int axis = 0; axis < 3; ++axis)
        for (int side = 0; side < 2; ++side) {
            if (bc.at(axis, side).kind != FaceKind::SilverMuller) continue;
            const int b = (axis + 1) % 3, c2 = (axis + 2) % 3;
            const int eplane = side == 0 ? 0 : g.cells(axis);
            const int bplane = side == 0 ? 0 : g.cells(axis) - 1;
            const double sgn = side == 0 ? -1.0 : 1.0;

            // E_{c2} edges on the face pair with B_b faces:
            //   +a face: E_c2 = g_b - c B_b ;  -a face: E_c2 = c B_b - g_b
            {
                auto& Ec = E.comp[static_cast<size_t>(c2)];
                const auto& Bb = B.comp[static_cast<size_t>(b)];
                const auto d = Ec.dims;
                std::array<int, 3> lo{0, 0, 0}, hi{d[0], d[1], d[2]};
                lo[static_cast<size_t>(axis)] = eplane;
                hi[static_cast<size_t>(axis)] = eplane + 1;
                for (int i = lo[0]; i < hi[0]; ++i)
                    for (int j = lo[1]; j < hi[1]; ++j)
                        for (int k = lo[2]; k < hi[2]; ++k) {
                            std::array<int, 3> bi{i, j, k};
                            bi[static_cast<size_t>(axis)] = bplane;
                            const T gb = gfn(axis, side, b, i, j, k);
                            Ec(i, j, k) = sgn * (gb - c * Bb(bi[0], bi[1], bi[2]));
                        }
            }
            // E_b edges pair with B_{c2} faces:
            //   +a face: E_b = c B_c2 - g_c2 ;  -a face: E_b = g_c2 - c B_c2
            {
                auto& Eb = E.comp[static_cast<size_t>(b)];
                const auto& Bc = B.comp[static_cast<size_t>(c2)];
                const auto d = Eb.dims;
                std::array<int, 3> lo{0, 0, 0}, hi{d[0], d[1], d[2]};
                lo[static_cast<size_t>(axis)] = eplane;
                hi[static_cast<size_t>(axis)] = eplane + 1;
                for (int i = lo[0]; i < hi[0]; ++i)
                    for (int j = lo[1]; j < hi[1]; ++j)
                        for (int k = lo[2]; k < hi[2]; ++k) {
                            std::array<int, 3> bi{i, j, k};
                            bi[static_cast<size_t>(axis)] = bplane;
                            const T gc = gfn(axis, side, c2, i, j, k);
                            Eb(i, j, k) = sgn * (c * Bc(bi[0], bi[1], bi[2]) - gc);
                        }
            }
        }
    pec_zero_tangential(g, bc, E);
}

// Spec-facing projections on a state.
inline void apply_pec(StateVector& s, const BoundarySpec& bc) {
    pec_zero_tangential(s.grid, bc, s.E);
    pec_zero_tangential(s.grid, bc, s.J1);
    pec_zero_tangential(s.grid, bc, s.J2);
}

inline void apply_silver_muller(StateVector& s, const BoundarySpec& bc, double c, double t) {
    apply_boundary_closure(s.grid, bc, s.B, c, s.E,
                           [&](int axis, int side, int family, int i, int j, int k) {
                               const Vec3 x = s.grid.edge_center(family, i, j, k);
                               return bc.at(axis, side).forcing(x, t)[family];
                           });
}

// ---------------------------------------------------------------------------
// Gyro-rotation as an exactly antisymmetric pair operator on J_s/omega_ps.
// ---------------------------------------------------------------------------

struct EdgeLayout {
    std::array<std::array<int, 3>, 3> dims;
    std::array<size_t, 3> offset{};
    size_t total = 0;

    explicit EdgeLayout(const Grid& g) {
        for (int c = 0; c < 3; ++c) {
            dims[static_cast<size_t>(c)] = g.edge_dims(c);
            offset[static_cast<size_t>(c)] = total;
            total += static_cast<size_t>(dims[static_cast<size_t>(c)][0]) *
                     dims[static_cast<size_t>(c)][1] * dims[static_cast<size_t>(c)][2];
        }
    }
    size_t flat(int c, int i, int j, int k) const {
        const auto& d = dims[static_cast<size_t>(c)];
        return offset[static_cast<size_t>(c)] +
               (static_cast<size_t>(i) * d[1] + j) * static_cast<size_t>(d[2]) + k;
    }
};


// Antisymmetric pair assembly of the gyro term Omega_c (b x .) acting on
// J_s/omega_ps across the staggered component lattices. Each coupled pair of
// edge samples gets +/- the averaged coefficient, so R^T = -R exactly, for
// any coefficient fields and any boundary.
inline Eigen::SparseMatrix<double> build_rotation_matrix(const Grid& g, const MediumFields& m,
                                                         int species, const EdgeLayout& layout) {
    const auto& sp = m.species[static_cast<size_t>(species)];
    std::vector<Eigen::Triplet<double>> trips;
    for (int a = 0; a < 3; ++a) {
        const int b = (a + 1) % 3, c2 = (a + 2) % 3;
        const auto da = g.edge_dims(a);
        const int nc2 = g.cells(c2);
        const auto& Wa_omega = sp.Omega_c[static_cast<size_t>(a)];
        const auto& Wa_b = m.b[static_cast<size_t>(a)][static_cast<size_t>(b)];
        const auto& Wc_omega = sp.Omega_c[static_cast<size_t>(c2)];
        const auto& Wc_b = m.b[static_cast<size_t>(c2)][static_cast<size_t>(b)];
        for (int i = 0; i < da[0]; ++i)
            for (int j = 0; j < da[1]; ++j)
                for (int k = 0; k < da[2]; ++k) {
                    std::array<int, 3> idx{i, j, k};
                    const int ia = idx[static_cast<size_t>(a)];
                    const int ic = idx[static_cast<size_t>(c2)];
                    const double wa = Wa_omega(i, j, k) * Wa_b(i, j, k);
                    const size_t row = layout.flat(a, i, j, k);
                    for (int pa = 0; pa < 2; ++pa)
                        for (int pc = -1; pc < 1; ++pc) {
                            const int ja = ia + pa;
                            const int jc = ic + pc;
                            if (jc < 0 || jc >= nc2) continue;
                            std::array<int, 3> nidx = idx;
                            nidx[static_cast<size_t>(a)] = ja;
                            nidx[static_cast<size_t>(c2)] = jc;
                            const double wc =
                                Wc_omega(nidx[0], nidx[1], nidx[2]) * Wc_b(nidx[0], nidx[1], nidx[2]);
                            const double kappa = 0.25 * 0.5 * (wa + wc);
                            if (kappa == 0.0) continue;
                            const size_t col = layout.flat(c2, nidx[0], nidx[1], nidx[2]);
                            trips.emplace_back(static_cast<int>(row), static_cast<int>(col), kappa);
                            trips.emplace_back(static_cast<int>(col), static_cast<int>(row), -kappa);
                        }
                }
    }
    Eigen::SparseMatrix<double> R(static_cast<int>(layout.total), static_cast<int>(layout.total));
    R.setFromTriplets(trips.begin(), trips.end());
    return R;
}

// Builds R with R^T = -R coupling staggered components pairwise. R represents
// Omega_c (b x .) on J_s/omega_ps (the rotation part of M_s), so the current
// evolves by dJ/dt = -R J and a half step is the Cayley map
// (I + h R)^{-1}(I - h R), exactly orthogonal: the rotation cannot create
// energy regardless of Omega_c or dt.
class GyroRotation {
public:
    GyroRotation() = default;

    GyroRotation(const Grid& g, const MediumFields& m, int species, double dt)
        : layout_(std::make_unique<EdgeLayout>(g)) {
        const auto& sp = m.species[static_cast<size_t>(species)];
        double max_w = 0.0;
        for (int c = 0; c < 3; ++c)
            for (double x : sp.Omega_c[static_cast<size_t>(c)].v) max_w = std::max(max_w, std::abs(x));
        if (max_w == 0.0) return;
        active_ = true;
        R_ = build_rotation_matrix(g, m, species, *layout_);

        const int n = static_cast<int>(layout_->total);
        R_.resize(n, n);
        R_.setFromTriplets(trips.begin(), trips.end());

        const double theta = dt / 4.0; // Cayley over a half step dt/2
        Eigen::SparseMatrix<double> M(n, n);
        M.setIdentity();
        M += theta * R_;
        lu_ = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
        lu_->compute(M);
        if (lu_->info() != Eigen::Success) throw IterativeSolveFailure("GyroRotation: LU failed");
        theta_ = theta;
    }

    bool active() const { return active_; }
    const Eigen::SparseMatrix<double>& matrix() const { return R_; }
    const EdgeLayout& layout() const { return *layout_; }

    // One Cayley half-step on the physical current J (scaled internally).
    void half_step(const std::array<const Array3*, 3>& omega_p, StaggeredField<double>& J) const {
        if (!active_) return;
        Eigen::VectorXd jh(static_cast<long>(layout_->total));
        for (int c = 0; c < 3; ++c) {
            const auto& a = J.comp[static_cast<size_t>(c)];
            const auto& w = *omega_p[static_cast<size_t>(c)];
            const size_t off = layout_->offset[static_cast<size_t>(c)];
            for (size_t i = 0; i < a.v.size(); ++i) jh(static_cast<long>(off + i)) = a.v[i] / w.v[i];
        }
        Eigen::VectorXd y = jh - theta_ * (R_ * jh);
        Eigen::VectorXd out = lu_->solve(y);
        for (int c = 0; c < 3; ++c) {
            auto& a = J.comp[static_cast<size_t>(c)];
            const auto& w = *omega_p[static_cast<size_t>(c)];
            const size_t off = layout_->offset[static_cast<size_t>(c)];
            for (size_t i = 0; i < a.v.size(); ++i) a.v[i] = out(static_cast<long>(off + i)) * w.v[i];
        }
    }

private:
    bool active_ = false;
    std::unique_ptr<EdgeLayout> layout_;
    Eigen::SparseMatrix<double> R_;
    std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
    double theta_ = 0.0;
};

// ---------------------------------------------------------------------------
// Time stepper: leapfrog B, pointwise Crank-Nicolson for the E/J exchange and
// collisional damping, Cayley half-rotations for the gyro term.
// ---------------------------------------------------------------------------

struct LedgerRow {
    double t = 0.0;
    double E_J1 = 0.0, E_J2 = 0.0, E_E = 0.0, E_B = 0.0;
    double dissipation_vol = 0.0, dissipation_bdry = 0.0;
    double divB_max = 0.0, gauss_max = 0.0;
    double total() const { return E_J1 + E_J2 + E_E + E_B; }
};

class Stepper {
public:
    Stepper(const MediumFields& medium, BoundarySpec bc, double dt, bool track_rho = false)
        : med_(&medium), bc_(std::move(bc)), dt_(dt), mask_(DofMask::make(medium.grid)) {
        const Grid& g = medium.grid;
        const Constants k = medium.constants;
        const double dtmax = cfl_max_dt(g, k.c);
        if (dt > dtmax * (1.0 + 1e-12))
            throw CFLViolation("Stepper: dt exceeds the vacuum Courant bound");
        const double lam = dt / 2.0;
        for (int c = 0; c < 3; ++c) {
            denomE_[static_cast<size_t>(c)].resize(g.edge_dims(c));
            auto& den = denomE_[static_cast<size_t>(c)];
            den.fill(1.0);
            for (size_t s = 0; s < medium.species.size(); ++s) {
                auto& inv = inv1p_[s][static_cast<size_t>(c)];
                inv.resize(g.edge_dims(c));
                const auto& nu = medium.species[s].nu[static_cast<size_t>(c)];
                const auto& wp = medium.species[s].omega_p[static_cast<size_t>(c)];
                for (size_t i = 0; i < inv.v.size(); ++i) {
                    inv.v[i] = 1.0 / (1.0 + lam * nu.v[i]);
                    den.v[i] += (dt * dt / 4.0) * wp.v[i] * wp.v[i] * inv.v[i];
                }
            }
        }
        for (size_t s = 0; s < medium.species.size(); ++s)
            rot_[s] = GyroRotation(g, medium, static_cast<int>(s), dt);
        track_rho_ = track_rho;

        // Closure feedback coefficients: each Silver-Muller face adds
        // c*dt/h_a to the tangential B samples one half cell inward. The
        // B update treats this term trapezoidally, which keeps the closure
        // unconditionally stable.
        sigmaB_ = make_face_field<double>(g);
        for (int axis = 0; axis < 3; ++axis)
            for (int side = 0; side < 2; ++side) {
                if (bc_.at(axis, side).kind != FaceKind::SilverMuller) continue;
                const int b = (axis + 1) % 3, c2 = (axis + 2) % 3;
                const int bplane = side == 0 ? 0 : g.cells(axis) - 1;
                for (int f : {b, c2}) {
                    auto& sf = sigmaB_.comp[static_cast<size_t>(f)];
                    const auto d = sf.dims;
                    std::array<int, 3> lo{0, 0, 0}, hi{d[0], d[1], d[2]};
                    lo[static_cast<size_t>(axis)] = bplane;
                    hi[static_cast<size_t>(axis)] = bplane + 1;
                    for (int i = lo[0]; i < hi[0]; ++i)
                        for (int j = lo[1]; j < hi[1]; ++j)
                            for (int k2 = lo[2]; k2 < hi[2]; ++k2)
                                sf(i, j, k2) += medium.constants.c * dt / g.spacing(axis);
                }
            }
    }

    void init(const StateVector& s0) {
        state_ = s0;
        if (track_rho_ && !state_.has_rho) {
            state_.has_rho = true;
            state_.rho1.resize(state_.grid.node_dims());
            state_.rho2.resize(state_.grid.node_dims());
        }
        // B^{-1/2} so that the first leapfrog update lands on B^{1/2}. The
        // priming curl sees the closure trace of the initial data.
        EdgeField E0 = state_.E;
        apply_boundary_closure(state_.grid, bc_, state_.B, med_->constants.c, E0,
                               [&](int axis, int side, int family, int i, int j, int k) {
                                   const Vec3 x = state_.grid.edge_center(family, i, j, k);
                                   return bc_.at(axis, side).forcing(x, state_.t)[family];
                               });
        auto curlE = curl_E_field(state_.grid, E0);
        Bprev_ = state_.B;
        for (int c = 0; c < 3; ++c)
            for (size_t i = 0; i < Bprev_.comp[static_cast<size_t>(c)].v.size(); ++i)
                Bprev_.comp[static_cast<size_t>(c)].v[i] +=
                    0.5 * dt_ * curlE.comp[static_cast<size_t>(c)].v[i];
        // the trace itself is derived, never an unknown
        for (int c = 0; c < 3; ++c) {
            const auto& freec = mask_.free_edge[static_cast<size_t>(c)];
            auto& e = state_.E.comp[static_cast<size_t>(c)];
            for (size_t i = 0; i < e.v.size(); ++i)
                if (!freec.v[i]) e.v[i] = 0.0;
        }
        primed_ = true;
    }

    double time() const { return state_.t; }
    double dt() const { return dt_; }
    const DofMask& mask() const { return mask_; }

    // Advance one step; the returned row describes the pre-step time level.
    LedgerRow step() {
        const Grid& g = state_.grid;
        const Constants k = med_->constants;
        const double lam = dt_ / 2.0;

        // rotation half-step
        for (size_t s = 0; s < med_->species.size(); ++s)
            rotate_half(static_cast<int>(s), state_.J(static_cast<int>(s)));

        // leapfrog B; boundary-tangential E is zero in the stored state, the
        // Silver-Muller trace enters through the trapezoidal closure below
        auto curlE = curl_E_field(g, state_.E);
        FaceField Bnext = Bprev_;
        for (int c = 0; c < 3; ++c)
            for (size_t i = 0; i < Bnext.comp[static_cast<size_t>(c)].v.size(); ++i)
                Bnext.comp[static_cast<size_t>(c)].v[i] -=
                    dt_ * curlE.comp[static_cast<size_t>(c)].v[i];
        close_B_update(Bnext, state_.t);

        LedgerRow row = ledger_row(Bprev_, Bnext);

        // CN exchange: local scalar solve for Ebar on free edges
        auto curlB = curl_B_field(g, Bnext);
        EdgeField Ebar = make_edge_field<double>(g);
        for (int c = 0; c < 3; ++c) {
            const auto& freec = mask_.free_edge[static_cast<size_t>(c)];
            auto& eb = Ebar.comp[static_cast<size_t>(c)];
            const auto& e0 = state_.E.comp[static_cast<size_t>(c)];
            const auto& cb = curlB.comp[static_cast<size_t>(c)];
            const auto& den = denomE_[static_cast<size_t>(c)];
            for (size_t i = 0; i < eb.v.size(); ++i) {
                if (!freec.v[i]) continue;
                double rhs = e0.v[i] + lam * k.c * k.c * cb.v[i];
                for (size_t s = 0; s < med_->species.size(); ++s)
                    rhs -= (lam / k.eps0) * state_.J(static_cast<int>(s)).comp[static_cast<size_t>(c)].v[i] *
                           inv1p_[s][static_cast<size_t>(c)].v[i];
                eb.v[i] = rhs / den.v[i];
            }
        }
        // boundary trace of Ebar at t^{n+1/2}
        const double tmid = state_.t + 0.5 * dt_;
        apply_boundary_closure(g, bc_, Bnext, k.c, Ebar,
                               [&](int axis, int side, int family, int i, int j, int k2) {
                                   const Vec3 x = g.edge_center(family, i, j, k2);
                                   return bc_.at(axis, side).forcing(x, tmid)[family];
                               });

        // currents (CN with time-centred E), fields to n+1
        for (size_t s = 0; s < med_->species.size(); ++s) {
            EdgeField& J = state_.J(static_cast<int>(s));
            EdgeField Jbar = make_edge_field<double>(g);
            for (int c = 0; c < 3; ++c) {
                const auto& wp = med_->species[s].omega_p[static_cast<size_t>(c)];
                const auto& inv = inv1p_[s][static_cast<size_t>(c)];
                auto& jb = Jbar.comp[static_cast<size_t>(c)];
                auto& jc = J.comp[static_cast<size_t>(c)];
                const auto& eb = Ebar.comp[static_cast<size_t>(c)];
                for (size_t i = 0; i < jc.v.size(); ++i) {
                    jb.v[i] = (jc.v[i] + lam * k.eps0 * wp.v[i] * wp.v[i] * eb.v[i]) * inv.v[i];
                    jc.v[i] = 2.0 * jb.v[i] - jc.v[i];
                }
            }
            if (track_rho_) {
                auto divJ = divergence_edges(g, Jbar);
                Array3& rho = s == 0 ? state_.rho1 : state_.rho2;
                for (size_t i = 0; i < rho.v.size(); ++i) rho.v[i] -= dt_ * divJ.v[i];
            }
        }
        for (int c = 0; c < 3; ++c) {
            const auto& freec = mask_.free_edge[static_cast<size_t>(c)];
            auto& e = state_.E.comp[static_cast<size_t>(c)];
            const auto& eb = Ebar.comp[static_cast<size_t>(c)];
            for (size_t i = 0; i < e.v.size(); ++i)
                if (freec.v[i]) e.v[i] = 2.0 * eb.v[i] - e.v[i];
        }

        for (size_t s = 0; s < med_->species.size(); ++s)
            rotate_half(static_cast<int>(s), state_.J(static_cast<int>(s)));

        Bprev_ = std::move(Bnext);
        state_.t += dt_;
        return row;
    }

    // Ledger for the current time level without advancing.
    LedgerRow ledger_now() const {
        FaceField Bnext = virtual_advance();
        return ledger_row(Bprev_, Bnext);
    }

    // Integer-time view of the state (B averaged across the step); the
    // boundary trace of E is filled in from the closure for inspection.
    StateVector snapshot() const {
        StateVector out = state_;
        const FaceField Bnext = virtual_advance();
        for (int c = 0; c < 3; ++c)
            for (size_t i = 0; i < out.B.comp[static_cast<size_t>(c)].v.size(); ++i)
                out.B.comp[static_cast<size_t>(c)].v[i] =
                    0.5 * (Bprev_.comp[static_cast<size_t>(c)].v[i] +
                           Bnext.comp[static_cast<size_t>(c)].v[i]);
        apply_boundary_closure(out.grid, bc_, out.B, med_->constants.c, out.E,
                               [&](int axis, int side, int family, int i, int j, int k) {
                                   const Vec3 x = out.grid.edge_center(family, i, j, k);
                                   return bc_.at(axis, side).forcing(x, out.t)[family];
                               });
        return out;
    }

    const StateVector& raw_state() const { return state_; }
    const FaceField& B_half_behind() const { return Bprev_; }

private:
    FaceField virtual_advance() const {
        auto curlE = curl_E_field(state_.grid, state_.E);
        FaceField Bnext = Bprev_;
        for (int c = 0; c < 3; ++c)
            for (size_t i = 0; i < Bnext.comp[static_cast<size_t>(c)].v.size(); ++i)
                Bnext.comp[static_cast<size_t>(c)].v[i] -=
                    dt_ * curlE.comp[static_cast<size_t>(c)].v[i];
        close_B_update(Bnext, state_.t);
        return Bnext;
    }

    // b+ (1 + sigma/2) = b (1 - sigma/2) - dt curlE_0 + (dt/h_a) g_f, i.e.
    // b+ = (b_raw - (sigma/2) b_prev + g terms) / (1 + sigma/2).
    void close_B_update(FaceField& Bnext, double t) const {
        const Grid& g = state_.grid;
        for (int f = 0; f < 3; ++f) {
            const auto& sf = sigmaB_.comp[static_cast<size_t>(f)];
            auto& bn = Bnext.comp[static_cast<size_t>(f)];
            const auto& bp = Bprev_.comp[static_cast<size_t>(f)];
            for (size_t i = 0; i < sf.v.size(); ++i) {
                const double sig = sf.v[i];
                if (sig == 0.0) continue;
                bn.v[i] = (bn.v[i] - 0.5 * sig * bp.v[i]) / (1.0 + 0.5 * sig);
            }
        }
        // forcing contributions
        for (int axis = 0; axis < 3; ++axis)
            for (int side = 0; side < 2; ++side) {
                const auto& face = bc_.at(axis, side);
                if (face.kind != FaceKind::SilverMuller ||
                    face.forcing.kind == ForcingSpec::Kind::None)
                    continue;
                const int b = (axis + 1) % 3, c2 = (axis + 2) % 3;
                const int bplane = side == 0 ? 0 : g.cells(axis) - 1;
                for (int f : {b, c2}) {
                    auto& bn = Bnext.comp[static_cast<size_t>(f)];
                    const auto& sf = sigmaB_.comp[static_cast<size_t>(f)];
                    const auto d = bn.dims;
                    std::array<int, 3> lo{0, 0, 0}, hi{d[0], d[1], d[2]};
                    lo[static_cast<size_t>(axis)] = bplane;
                    hi[static_cast<size_t>(axis)] = bplane + 1;
                    for (int i = lo[0]; i < hi[0]; ++i)
                        for (int j = lo[1]; j < hi[1]; ++j)
                            for (int k2 = lo[2]; k2 < hi[2]; ++k2) {
                                Vec3 x = g.face_center(f, i, j, k2);
                                x[axis] = side == 0 ? 0.0 : g.extent(axis);
                                const double gv = face.forcing(x, t)[f];
                                bn(i, j, k2) += dt_ / g.spacing(axis) * gv /
                                                (1.0 + 0.5 * sf(i, j, k2));
                            }
                }
            }
    }

    void rotate_half(int s, EdgeField& J) {
        if (!rot_[static_cast<size_t>(s)].active()) return;
        std::array<const Array3*, 3> w{};
        for (int c = 0; c < 3; ++c)
            w[static_cast<size_t>(c)] = &med_->species[static_cast<size_t>(s)].omega_p[static_cast<size_t>(c)];
        rot_[static_cast<size_t>(s)].half_step(w, J);
    }

    LedgerRow ledger_row(const FaceField& Bm, const FaceField& Bp) const {
        const Grid& g = state_.grid;
        const Constants k = med_->constants;
        const double vol = g.cell_volume();
        LedgerRow row;
        row.t = state_.t;
        row.E_J1 = 0.5 / k.eps0 * dot_current_weighted(state_.J1, state_.J1, *med_, 0) * vol;
        row.E_J2 = 0.5 / k.eps0 * dot_current_weighted(state_.J2, state_.J2, *med_, 1) * vol;
        row.E_E = 0.5 * k.eps0 * dot_edges_masked(state_.E, state_.E, mask_) * vol;
        row.E_B = 0.5 * k.c * k.c * k.eps0 * dot_faces(Bm, Bp) * vol;

        for (size_t s = 0; s < med_->species.size(); ++s) {
            const auto& sp = med_->species[s];
            const EdgeField& J = state_.J(static_cast<int>(s));
            double d = 0.0;
            for (int c = 0; c < 3; ++c) {
                const auto& nu = sp.nu[static_cast<size_t>(c)];
                const auto& wp = sp.omega_p[static_cast<size_t>(c)];
                const auto& jc = J.comp[static_cast<size_t>(c)];
                for (size_t i = 0; i < jc.v.size(); ++i)
                    d += nu.v[i] * jc.v[i] * jc.v[i] / (wp.v[i] * wp.v[i]);
            }
            row.dissipation_vol += d / k.eps0 * vol;
        }

        // boundary term: eps0 c^2 sum (c |B_top|^2 - g . B_top), collocated
        row.dissipation_bdry = boundary_dissipation(Bm, Bp);

        auto divB = divergence_faces(g, Bp);
        for (double x : divB.v) row.divB_max = std::max(row.divB_max, std::abs(x));

        auto divE = divergence_edges(g, state_.E);
        for (int i = 1; i < g.nx; ++i)
            for (int j = 1; j < g.ny; ++j)
                for (int k2 = 1; k2 < g.nz; ++k2) {
                    double res = divE(i, j, k2);
                    if (state_.has_rho)
                        res -= (state_.rho1(i, j, k2) + state_.rho2(i, j, k2)) / k.eps0;
                    row.gauss_max = std::max(row.gauss_max, std::abs(res));
                }
        return row;
    }

    double boundary_dissipation(const FaceField& Bm, const FaceField& Bp) const {
        const Grid& g = state_.grid;
        const Constants k = med_->constants;
        double acc = 0.0;
        for (int axis = 0; axis < 3; ++axis)
            for (int side = 0; side < 2; ++side) {
                if (bc_.at(axis, side).kind != FaceKind::SilverMuller) continue;
                const int b = (axis + 1) % 3, c2 = (axis + 2) % 3;
                const double area = g.spacing(b) * g.spacing(c2);
                const int bplane = side == 0 ? 0 : g.cells(axis) - 1;
                for (int f : {b, c2}) {
                    const auto& Bmc = Bm.comp[static_cast<size_t>(f)];
                    const auto& Bpc = Bp.comp[static_cast<size_t>(f)];
                    const auto d = Bmc.dims;
                    std::array<int, 3> lo{0, 0, 0}, hi{d[0], d[1], d[2]};
                    lo[static_cast<size_t>(axis)] = bplane;
                    hi[static_cast<size_t>(axis)] = bplane + 1;
                    for (int i = lo[0]; i < hi[0]; ++i)
                        for (int j = lo[1]; j < hi[1]; ++j)
                            for (int k2 = lo[2]; k2 < hi[2]; ++k2) {
                                const double bt = 0.5 * (Bmc(i, j, k2) + Bpc(i, j, k2));
                                Vec3 x = g.face_center(f, i, j, k2);
                                // project to the boundary plane for g
                                x[axis] = side == 0 ? 0.0 : g.extent(axis);
                                const double gv =
                                    bc_.at(axis, side).forcing(x, state_.t)[f];
                                acc += (k.c * bt * bt - gv * bt) * area;
                            }
                }
            }
        return k.eps0 * k.c * k.c * acc;
    }

    const MediumFields* med_;
    BoundarySpec bc_;
    double dt_;
    DofMask mask_;
    bool track_rho_ = false;
    bool primed_ = false;
    StateVector state_;
    FaceField Bprev_;
    std::array<Array3, 3> denomE_;
    std::array<std::array<Array3, 3>, 2> inv1p_;
    std::array<GyroRotation, 2> rot_;
    FaceField sigmaB_;
};

} // namespace coldplasma

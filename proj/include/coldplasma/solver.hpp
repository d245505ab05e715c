#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <functional>

#include "coldplasma/fields.hpp"
#include "coldplasma/fdtd.hpp"
#include "coldplasma/slab.hpp"

namespace coldplasma {

// ---------------------------------------------------------------------------
// Generic state quadruple over a scalar type (double for the lambda system,
// complex for the i*alpha / harmonic systems).
// ---------------------------------------------------------------------------

template <class T>
struct FieldsT {
    StaggeredField<T> J1, J2, E, B;

    static FieldsT zero(const Grid& g) {
        FieldsT f;
        f.J1 = make_edge_field<T>(g);
        f.J2 = make_edge_field<T>(g);
        f.E = make_edge_field<T>(g);
        f.B = make_face_field<T>(g);
        return f;
    }
    StaggeredField<T>& J(int s) { return s == 0 ? J1 : J2; }
    const StaggeredField<T>& J(int s) const { return s == 0 ? J1 : J2; }
};

template <class T>
double fields_norm_X(const FieldsT<T>& u, const MediumFields& m, const DofMask& mask) {
    const double vol = m.grid.cell_volume();
    const double eps0 = m.constants.eps0, c = m.constants.c;
    double acc = 0.0;
    for (int cc = 0; cc < 3; ++cc) {
        for (int s = 0; s < 2; ++s) {
            const auto& wp = m.species[static_cast<size_t>(s)].omega_p[static_cast<size_t>(cc)];
            const auto& a = u.J(s).comp[static_cast<size_t>(cc)];
            for (size_t i = 0; i < a.v.size(); ++i)
                acc += std::norm(Complex(a.v[i])) / (wp.v[i] * wp.v[i]) / eps0;
        }
        const auto& e = u.E.comp[static_cast<size_t>(cc)];
        const auto& fm = mask.free_edge[static_cast<size_t>(cc)];
        for (size_t i = 0; i < e.v.size(); ++i)
            if (fm.v[i]) acc += eps0 * std::norm(Complex(e.v[i]));
        const auto& b = u.B.comp[static_cast<size_t>(cc)];
        for (size_t i = 0; i < b.v.size(); ++i) acc += c * c * eps0 * std::norm(Complex(b.v[i]));
    }
    return std::sqrt(acc * vol);
}

inline FieldsT<double> to_fields(const StateVector& s) {
    FieldsT<double> f;
    f.J1 = s.J1;
    f.J2 = s.J2;
    f.E = s.E;
    f.B = s.B;
    return f;
}
inline StateVector to_state(const FieldsT<double>& f, const Grid& g, double t = 0.0) {
    StateVector s = StateVector::zero(g);
    s.t = t;
    s.J1 = f.J1;
    s.J2 = f.J2;
    s.E = f.E;
    s.B = f.B;
    return s;
}

// ---------------------------------------------------------------------------
// Shifted per-species current blocks: x = (zeta I + M_s)^{-1} y, where M_s is
// the collision + rotation block on the staggered currents (rotation assembled
// pairwise on J/omega_p). zeta = 1/lambda rescaled versions are handled by the
// callers.
// ---------------------------------------------------------------------------

template <class T>
class CurrentBlockSolver {
public:
    // Solves (I + lambda M_s) x = y (real lambda) or (i alpha I + M_s) x = y.
    CurrentBlockSolver(const Grid& g, const MediumFields& m, int species, T shift_scale,
                       T shift_offset, const EdgeLayout& layout)
        : g_(&g), m_(&m), species_(species), layout_(&layout) {
        // system: (shift_offset I + shift_scale * M_s) on \hat{J}
        isotropic_ = true;
        const auto& sp = m.species[static_cast<size_t>(species)];
        for (int c = 0; c < 3 && isotropic_; ++c)
            for (double x : sp.Omega_c[static_cast<size_t>(c)].v)
                if (x != 0.0) {
                    isotropic_ = false;
                    break;
                }
        diag_.resize(layout.total);
        for (int c = 0; c < 3; ++c) {
            const auto& nu = sp.nu[static_cast<size_t>(c)];
            const size_t off = layout.offset[static_cast<size_t>(c)];
            for (size_t i = 0; i < nu.v.size(); ++i)
                diag_[off + i] = shift_offset + shift_scale * nu.v[i];
        }
        if (!isotropic_) {
            Eigen::SparseMatrix<double> R = build_rotation_matrix(g, m, species, layout);
            Eigen::SparseMatrix<T> sys = R.template cast<T>() * shift_scale;
            for (int i = 0; i < sys.rows(); ++i) sys.coeffRef(i, i) += diag_[static_cast<size_t>(i)];
            sys.makeCompressed();
            lu_ = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<T>>>();
            lu_->compute(sys);
            if (lu_->info() != Eigen::Success)
                throw SingularShift("CurrentBlockSolver: sparse factorization failed");
        } else {
            for (const auto& d : diag_)
                if (std::abs(d) <= 1e-14)
                    throw SingularShift("CurrentBlockSolver: singular diagonal block");
        }
    }

    // y and x are physical currents (scaling by omega_p handled internally).
    void solve(const StaggeredField<T>& y, StaggeredField<T>& x) const {
        const auto& sp = m_->species[static_cast<size_t>(species_)];
        if (isotropic_) {
            for (int c = 0; c < 3; ++c) {
                const size_t off = layout_->offset[static_cast<size_t>(c)];
                const auto& yc = y.comp[static_cast<size_t>(c)];
                auto& xc = x.comp[static_cast<size_t>(c)];
                for (size_t i = 0; i < yc.v.size(); ++i) xc.v[i] = yc.v[i] / diag_[off + i];
            }
            return;
        }
        Eigen::Matrix<T, Eigen::Dynamic, 1> rhs(static_cast<long>(layout_->total));
        for (int c = 0; c < 3; ++c) {
            const auto& wp = sp.omega_p[static_cast<size_t>(c)];
            const auto& yc = y.comp[static_cast<size_t>(c)];
            const size_t off = layout_->offset[static_cast<size_t>(c)];
            for (size_t i = 0; i < yc.v.size(); ++i)
                rhs(static_cast<long>(off + i)) = yc.v[i] / wp.v[i];
        }
        Eigen::Matrix<T, Eigen::Dynamic, 1> sol = lu_->solve(rhs);
        for (int c = 0; c < 3; ++c) {
            const auto& wp = sp.omega_p[static_cast<size_t>(c)];
            auto& xc = x.comp[static_cast<size_t>(c)];
            const size_t off = layout_->offset[static_cast<size_t>(c)];
            for (size_t i = 0; i < xc.v.size(); ++i)
                xc.v[i] = sol(static_cast<long>(off + i)) * wp.v[i];
        }
    }

private:
    const Grid* g_;
    const MediumFields* m_;
    int species_;
    const EdgeLayout* layout_;
    bool isotropic_ = true;
    std::vector<T> diag_;
    std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<T>>> lu_;
};

// Apply M_s (collision + rotation) to a current field.
template <class T>
void apply_M_block(const Grid& g, const MediumFields& m, int species, const EdgeLayout& layout,
                   const Eigen::SparseMatrix<double>& R, const StaggeredField<T>& J,
                   StaggeredField<T>& out) {
    const auto& sp = m.species[static_cast<size_t>(species)];
    std::vector<T> jhat(layout.total);
    for (int c = 0; c < 3; ++c) {
        const auto& wp = sp.omega_p[static_cast<size_t>(c)];
        const auto& jc = J.comp[static_cast<size_t>(c)];
        const size_t off = layout.offset[static_cast<size_t>(c)];
        for (size_t i = 0; i < jc.v.size(); ++i) jhat[off + i] = jc.v[i] / wp.v[i];
    }
    std::vector<T> rj(layout.total, T{});
    for (int k = 0; k < R.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(R, k); it; ++it)
            rj[static_cast<size_t>(it.row())] += it.value() * jhat[static_cast<size_t>(it.col())];
    for (int c = 0; c < 3; ++c) {
        const auto& wp = sp.omega_p[static_cast<size_t>(c)];
        const auto& nu = sp.nu[static_cast<size_t>(c)];
        const auto& jc = J.comp[static_cast<size_t>(c)];
        auto& oc = out.comp[static_cast<size_t>(c)];
        const size_t off = layout.offset[static_cast<size_t>(c)];
        for (size_t i = 0; i < jc.v.size(); ++i)
            oc.v[i] = nu.v[i] * jc.v[i] + rj[off + i] * wp.v[i];
    }
}

// ---------------------------------------------------------------------------
// The discrete generator: out = A_h U (homogeneous boundary data). The
// boundary trace of E is derived from U.B by the closure.
// ---------------------------------------------------------------------------

template <class T>
class GeneratorApplier;

template <class T>
void apply_generator(const MediumFields& m, const BoundarySpec& bc, const FieldsT<T>& U,
                     FieldsT<T>& out) {
    GeneratorApplier<T>(m, bc).apply(U, out);
}

// Cached form for repeated applications.
template <class T>
class GeneratorApplier {
public:
    GeneratorApplier(const MediumFields& m, const BoundarySpec& bc)
        : m_(&m), bc_(bc), layout_(m.grid), mask_(DofMask::make(m.grid)) {
        for (int s = 0; s < 2; ++s) R_[static_cast<size_t>(s)] = build_rotation_matrix(m.grid, m, s, layout_);
    }

    void apply(const FieldsT<T>& U, FieldsT<T>& out) const {
        const Grid& g = m_->grid;
        const double eps0 = m_->constants.eps0, c = m_->constants.c;
        StaggeredField<T> Efull = U.E;
        apply_boundary_closure(g, bc_, U.B, c, Efull,
                               [](int, int, int, int, int, int) { return T{}; });
        for (int s = 0; s < 2; ++s) {
            apply_M_block(g, *m_, s, layout_, R_[static_cast<size_t>(s)], U.J(s), out.J(s));
            const auto& sp = m_->species[static_cast<size_t>(s)];
            for (int cc = 0; cc < 3; ++cc) {
                const auto& wp = sp.omega_p[static_cast<size_t>(cc)];
                auto& oc = out.J(s).comp[static_cast<size_t>(cc)];
                const auto& ec = Efull.comp[static_cast<size_t>(cc)];
                for (size_t i = 0; i < oc.v.size(); ++i)
                    oc.v[i] -= eps0 * wp.v[i] * wp.v[i] * ec.v[i];
            }
        }
        curl_B_into(g, U.B, out.E);
        for (int cc = 0; cc < 3; ++cc) {
            auto& oe = out.E.comp[static_cast<size_t>(cc)];
            const auto& fm = mask_.free_edge[static_cast<size_t>(cc)];
            const auto& j1 = U.J1.comp[static_cast<size_t>(cc)];
            const auto& j2 = U.J2.comp[static_cast<size_t>(cc)];
            for (size_t i = 0; i < oe.v.size(); ++i)
                oe.v[i] = fm.v[i] ? ((j1.v[i] + j2.v[i]) * (1.0 / eps0) - c * c * oe.v[i]) : T{};
        }
        curl_E_into(g, Efull, out.B);
    }

    const DofMask& mask() const { return mask_; }

private:
    const MediumFields* m_;
    BoundarySpec bc_;
    EdgeLayout layout_;
    DofMask mask_;
    std::array<Eigen::SparseMatrix<double>, 2> R_;
};

// ---------------------------------------------------------------------------
// BiCGStab on edge fields (matrix-free).
// ---------------------------------------------------------------------------

struct KrylovStats {
    int iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
};

template <class T, class Op, class Precond>
KrylovStats bicgstab(const Op& A, const Eigen::Matrix<T, Eigen::Dynamic, 1>& b,
                     Eigen::Matrix<T, Eigen::Dynamic, 1>& x, const Precond& Minv, double tol,
                     int maxit) {
    using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
    KrylovStats st;
    const double bnorm = b.norm();
    if (bnorm == 0.0) {
        x.setZero();
        st.converged = true;
        return st;
    }
    Vec r = b - A(x);
    Vec rhat = r;
    T rho = T(1), alpha = T(1), omega = T(1);
    Vec v = Vec::Zero(b.size()), p = Vec::Zero(b.size());
    for (int it = 0; it < maxit; ++it) {
        st.iterations = it + 1;
        const T rho1 = rhat.dot(r);
        if (std::abs(rho1) < 1e-300) break; // breakdown
        if (it == 0) {
            p = r;
        } else {
            const T beta = (rho1 / rho) * (alpha / omega);
            p = r + beta * (p - omega * v);
        }
        const Vec phat = Minv(p);
        v = A(phat);
        const T denom = rhat.dot(v);
        if (std::abs(denom) < 1e-300) break;
        alpha = rho1 / denom;
        const Vec s = r - alpha * v;
        if (s.norm() <= tol * bnorm) {
            x += alpha * phat;
            st.relative_residual = s.norm() / bnorm;
            st.converged = true;
            return st;
        }
        const Vec shat = Minv(s);
        const Vec t = A(shat);
        const T tt = t.dot(t);
        if (std::abs(tt) < 1e-300) break;
        omega = t.dot(s) / tt;
        x += alpha * phat + omega * shat;
        r = s - omega * t;
        st.relative_residual = r.norm() / bnorm;
        if (st.relative_residual <= tol) {
            st.converged = true;
            return st;
        }
        rho = rho1;
    }
    st.relative_residual = (b - A(x)).norm() / bnorm;
    st.converged = st.relative_residual <= tol;
    return st;
}

// ---------------------------------------------------------------------------
// Free-edge packing.
// ---------------------------------------------------------------------------

struct EdgePack {
    const Grid* g;
    DofMask mask;
    std::array<std::vector<long>, 3> index; // flat component index -> packed or -1
    long count = 0;

    explicit EdgePack(const Grid& grid) : g(&grid), mask(DofMask::make(grid)) {
        for (int c = 0; c < 3; ++c) {
            const auto& fm = mask.free_edge[static_cast<size_t>(c)];
            index[static_cast<size_t>(c)].assign(fm.v.size(), -1);
            for (size_t i = 0; i < fm.v.size(); ++i)
                if (fm.v[i]) index[static_cast<size_t>(c)][i] = count++;
        }
    }
    template <class T>
    Eigen::Matrix<T, Eigen::Dynamic, 1> pack(const StaggeredField<T>& f) const {
        Eigen::Matrix<T, Eigen::Dynamic, 1> v(count);
        for (int c = 0; c < 3; ++c)
            for (size_t i = 0; i < index[static_cast<size_t>(c)].size(); ++i)
                if (index[static_cast<size_t>(c)][i] >= 0)
                    v(index[static_cast<size_t>(c)][i]) = f.comp[static_cast<size_t>(c)].v[i];
        return v;
    }
    template <class T>
    void unpack(const Eigen::Matrix<T, Eigen::Dynamic, 1>& v, StaggeredField<T>& f) const {
        for (int c = 0; c < 3; ++c)
            for (size_t i = 0; i < index[static_cast<size_t>(c)].size(); ++i)
                f.comp[static_cast<size_t>(c)].v[i] =
                    index[static_cast<size_t>(c)][i] >= 0 ? v(index[static_cast<size_t>(c)][i]) : T{};
    }
};

// ---------------------------------------------------------------------------
// Shifted solves via the curl-curl elimination.
// ---------------------------------------------------------------------------

struct SolveReport {
    KrylovStats krylov;
    double residual_X = 0.0; // ||(shift I + A_h) U - F||_X / ||F||_X
};

namespace solver_detail {

// sum over adjacent Silver-Muller faces of c/h_a, per face sample
inline FaceField closure_sigma(const Grid& g, const BoundarySpec& bc, double c) {
    auto sig = make_face_field<double>(g);
    for (int axis = 0; axis < 3; ++axis)
        for (int side = 0; side < 2; ++side) {
            if (bc.at(axis, side).kind != FaceKind::SilverMuller) continue;
            const int b = (axis + 1) % 3, c2 = (axis + 2) % 3;
            const int bplane = side == 0 ? 0 : g.cells(axis) - 1;
            for (int f : {b, c2}) {
                auto& sf = sig.comp[static_cast<size_t>(f)];
                const auto d = sf.dims;
                std::array<int, 3> lo{0, 0, 0}, hi{d[0], d[1], d[2]};
                lo[static_cast<size_t>(axis)] = bplane;
                hi[static_cast<size_t>(axis)] = bplane + 1;
                for (int i = lo[0]; i < hi[0]; ++i)
                    for (int j = lo[1]; j < hi[1]; ++j)
                        for (int k = lo[2]; k < hi[2]; ++k)
                            sf(i, j, k) += c / g.spacing(axis);
            }
        }
    return sig;
}

// diagonal of curl_B curl_E per edge sample
inline double curlcurl_diag(const Grid& g, int c) {
    double d = 0.0;
    for (int a = 0; a < 3; ++a)
        if (a != c) d += 2.0 / (g.spacing(a) * g.spacing(a));
    return d;
}

} // namespace solver_detail

// Solve (I + lambda A_h) U = F by eliminating to the E-block curl-curl system
// and back-substituting, mirroring the continuous maximality construction.
inline StateVector resolvent_step(const StateVector& F, double lambda, const BoundarySpec& bc,
                                  const MediumFields& m, SolveReport* report = nullptr,
                                  double tol = 1e-12, int maxit_factor = 10) {
    const Grid& g = m.grid;
    const double eps0 = m.constants.eps0, c = m.constants.c;
    if (!(lambda > 0.0) || lambda * (m.bounds.nu_star + m.bounds.Omega_star) >= 1.0)
        throw NonAdmissibleLambda("resolvent_step: lambda outside the contraction regime");

    const EdgeLayout layout(g);
    const EdgePack pack(g);
    const FaceField sigma = solver_detail::closure_sigma(g, bc, c);

    CurrentBlockSolver<double> inv1(g, m, 0, lambda, 1.0, layout);
    CurrentBlockSolver<double> inv2(g, m, 1, lambda, 1.0, layout);
    const std::array<const CurrentBlockSolver<double>*, 2> inv{&inv1, &inv2};

    auto Wface = [&](const StaggeredField<double>& in, StaggeredField<double>& out) {
        for (int cc = 0; cc < 3; ++cc)
            for (size_t i = 0; i < in.comp[static_cast<size_t>(cc)].v.size(); ++i)
                out.comp[static_cast<size_t>(cc)].v[i] =
                    in.comp[static_cast<size_t>(cc)].v[i] /
                    (1.0 + lambda * sigma.comp[static_cast<size_t>(cc)].v[i]);
    };

    // E-block affine map: G(v) = v + lambda^2 sum inv_s[w^2 Efull(v)] +
    // lambda^2 c^2 curl_B(W curl_E v) with Efull = v extended by the closure
    // of U4(v) = W(F4 - lambda curl_E v).
    auto u4_of = [&](const StaggeredField<double>& v, const StaggeredField<double>* F4) {
        auto curle = curl_E_field(g, v);
        StaggeredField<double> u4 = make_face_field<double>(g);
        for (int cc = 0; cc < 3; ++cc)
            for (size_t i = 0; i < u4.comp[static_cast<size_t>(cc)].v.size(); ++i) {
                double x = -lambda * curle.comp[static_cast<size_t>(cc)].v[i];
                if (F4) x += F4->comp[static_cast<size_t>(cc)].v[i];
                u4.comp[static_cast<size_t>(cc)].v[i] = x;
            }
        StaggeredField<double> out = make_face_field<double>(g);
        Wface(u4, out);
        return out;
    };

    auto e_row = [&](const StaggeredField<double>& v, const FieldsT<double>* Fin) {
        // returns the E-row value: v + lambda[(1/eps0) sum U_s - c^2 curl_B U4]
        const StaggeredField<double> u4 =
            u4_of(v, Fin ? &Fin->B : nullptr);
        StaggeredField<double> efull = v;
        apply_boundary_closure(g, bc, u4, c, efull,
                               [](int, int, int, int, int, int) { return 0.0; });
        StaggeredField<double> acc = make_edge_field<double>(g);
        StaggeredField<double> tmp = make_edge_field<double>(g);
        StaggeredField<double> rhs_s = make_edge_field<double>(g);
        for (int s = 0; s < 2; ++s) {
            const auto& sp = m.species[static_cast<size_t>(s)];
            for (int cc = 0; cc < 3; ++cc) {
                const auto& wp = sp.omega_p[static_cast<size_t>(cc)];
                const auto& ec = efull.comp[static_cast<size_t>(cc)];
                auto& rc = rhs_s.comp[static_cast<size_t>(cc)];
                for (size_t i = 0; i < rc.v.size(); ++i) {
                    rc.v[i] = lambda * eps0 * wp.v[i] * wp.v[i] * ec.v[i];
                    if (Fin) rc.v[i] += Fin->J(s).comp[static_cast<size_t>(cc)].v[i];
                }
            }
            inv[static_cast<size_t>(s)]->solve(rhs_s, tmp);
            for (int cc = 0; cc < 3; ++cc)
                for (size_t i = 0; i < acc.comp[static_cast<size_t>(cc)].v.size(); ++i)
                    acc.comp[static_cast<size_t>(cc)].v[i] += tmp.comp[static_cast<size_t>(cc)].v[i];
        }
        auto curlb = curl_B_field(g, u4);
        StaggeredField<double> out = make_edge_field<double>(g);
        for (int cc = 0; cc < 3; ++cc) {
            const auto& fm = pack.mask.free_edge[static_cast<size_t>(cc)];
            for (size_t i = 0; i < out.comp[static_cast<size_t>(cc)].v.size(); ++i) {
                if (!fm.v[i]) continue;
                double x = v.comp[static_cast<size_t>(cc)].v[i] +
                           lambda / eps0 * acc.comp[static_cast<size_t>(cc)].v[i] -
                           lambda * c * c * curlb.comp[static_cast<size_t>(cc)].v[i];
                out.comp[static_cast<size_t>(cc)].v[i] = x;
            }
        }
        return out;
    };

    // affine split: L v = rhs
    StaggeredField<double> zero_e = make_edge_field<double>(g);
    const FieldsT<double> Ff = to_fields(F);
    const StaggeredField<double> g0 = e_row(zero_e, &Ff);
    Eigen::VectorXd rhs = pack.pack(F.E) - pack.pack(g0);

    auto Lop = [&](const Eigen::VectorXd& x) {
        StaggeredField<double> v = make_edge_field<double>(g);
        pack.unpack(x, v);
        const StaggeredField<double> lv = e_row(v, nullptr);
        return Eigen::VectorXd(pack.pack(lv));
    };

    // pointwise preconditioner
    Eigen::VectorXd pdiag(pack.count);
    for (int cc = 0; cc < 3; ++cc) {
        const double ccd = solver_detail::curlcurl_diag(g, cc);
        const auto& fm = pack.mask.free_edge[static_cast<size_t>(cc)];
        for (size_t i = 0; i < fm.v.size(); ++i) {
            if (!fm.v[i]) continue;
            double dsc = 1.0 + lambda * lambda * c * c * ccd;
            for (int s = 0; s < 2; ++s) {
                const auto& sp = m.species[static_cast<size_t>(s)];
                const double w = sp.omega_p[static_cast<size_t>(cc)].v[i];
                const double nu = sp.nu[static_cast<size_t>(cc)].v[i];
                dsc += lambda * lambda * w * w / (1.0 + lambda * nu);
            }
            pdiag(pack.index[static_cast<size_t>(cc)][i]) = 1.0 / dsc;
        }
    }
    auto Minv = [&](const Eigen::VectorXd& x) { return Eigen::VectorXd(pdiag.asDiagonal() * x); };

    Eigen::VectorXd x = Eigen::VectorXd::Zero(pack.count);
    const int maxit = maxit_factor * static_cast<int>(pack.count);
    KrylovStats st = bicgstab<double>(Lop, rhs, x, Minv, tol, maxit);
    if (!st.converged)
        throw IterativeSolveFailure("resolvent_step: Krylov stagnated, residual " +
                                    std::to_string(st.relative_residual));

    // reconstruction
    StaggeredField<double> U3 = make_edge_field<double>(g);
    pack.unpack(x, U3);
    auto curle = curl_E_field(g, U3);
    StateVector U = StateVector::zero(g);
    for (int cc = 0; cc < 3; ++cc)
        for (size_t i = 0; i < U.B.comp[static_cast<size_t>(cc)].v.size(); ++i)
            U.B.comp[static_cast<size_t>(cc)].v[i] =
                (F.B.comp[static_cast<size_t>(cc)].v[i] -
                 lambda * curle.comp[static_cast<size_t>(cc)].v[i]) /
                (1.0 + lambda * sigma.comp[static_cast<size_t>(cc)].v[i]);
    U.E = U3;
    apply_boundary_closure(g, bc, U.B, c, U.E, [](int, int, int, int, int, int) { return 0.0; });
    StaggeredField<double> rhs_s = make_edge_field<double>(g);
    for (int s = 0; s < 2; ++s) {
        const auto& sp = m.species[static_cast<size_t>(s)];
        for (int cc = 0; cc < 3; ++cc) {
            const auto& wp = sp.omega_p[static_cast<size_t>(cc)];
            const auto& ec = U.E.comp[static_cast<size_t>(cc)];
            auto& rc = rhs_s.comp[static_cast<size_t>(cc)];
            const auto& fc = (s == 0 ? F.J1 : F.J2).comp[static_cast<size_t>(cc)];
            for (size_t i = 0; i < rc.v.size(); ++i)
                rc.v[i] = fc.v[i] + lambda * eps0 * wp.v[i] * wp.v[i] * ec.v[i];
        }
        inv[static_cast<size_t>(s)]->solve(rhs_s, U.J(s));
    }
    U.t = F.t;

    // residual contract
    FieldsT<double> Uf = to_fields(U), AU = FieldsT<double>::zero(g);
    apply_generator(m, bc, Uf, AU);
    FieldsT<double> R = FieldsT<double>::zero(g);
    for (int cc = 0; cc < 3; ++cc) {
        for (int s = 0; s < 2; ++s)
            for (size_t i = 0; i < R.J(s).comp[static_cast<size_t>(cc)].v.size(); ++i)
                R.J(s).comp[static_cast<size_t>(cc)].v[i] =
                    Uf.J(s).comp[static_cast<size_t>(cc)].v[i] +
                    lambda * AU.J(s).comp[static_cast<size_t>(cc)].v[i] -
                    (s == 0 ? F.J1 : F.J2).comp[static_cast<size_t>(cc)].v[i];
        for (size_t i = 0; i < R.E.comp[static_cast<size_t>(cc)].v.size(); ++i)
            R.E.comp[static_cast<size_t>(cc)].v[i] = Uf.E.comp[static_cast<size_t>(cc)].v[i] +
                                                     lambda * AU.E.comp[static_cast<size_t>(cc)].v[i] -
                                                     F.E.comp[static_cast<size_t>(cc)].v[i];
        for (size_t i = 0; i < R.B.comp[static_cast<size_t>(cc)].v.size(); ++i)
            R.B.comp[static_cast<size_t>(cc)].v[i] = Uf.B.comp[static_cast<size_t>(cc)].v[i] +
                                                     lambda * AU.B.comp[static_cast<size_t>(cc)].v[i] -
                                                     F.B.comp[static_cast<size_t>(cc)].v[i];
    }
    const DofMask mask = pack.mask;
    const double fn = fields_norm_X(Ff, m, mask);
    const double rn = fields_norm_X(R, m, mask);
    if (report) {
        report->krylov = st;
        report->residual_X = fn > 0 ? rn / fn : rn;
    }
    if (fn > 0 && rn > 1e-10 * fn)
        throw IterativeSolveFailure("resolvent_step: residual " + std::to_string(rn / fn) +
                                    " exceeds 1e-10");
    return U;
}

// Implicit-Euler step of the fdtd semantics, by definition.
inline StateVector implicit_euler_step(const StateVector& s, double dt, const BoundarySpec& bc,
                                       const MediumFields& m) {
    StateVector out = resolvent_step(s, dt, bc, m);
    out.t = s.t + dt;
    return out;
}

// Solve (i alpha I + A_h) U = F (complex), mirroring the stability-section
// elimination with the B_alpha-weighted curl-curl operator.
inline FieldsT<Complex> shifted_solve(double alpha, const FieldsT<Complex>& F,
                                      const BoundarySpec& bc, const MediumFields& m,
                                      SolveReport* report = nullptr, double tol = 1e-12,
                                      int maxit_factor = 10,
                                      const FieldsT<Complex>* initial_guess = nullptr) {
    const Grid& g = m.grid;
    const double eps0 = m.constants.eps0, c = m.constants.c;
    const Complex ia(0.0, alpha);

    const EdgeLayout layout(g);
    const EdgePack pack(g);
    const FaceField sigma = solver_detail::closure_sigma(g, bc, c);

    // guard: on a pure PEC box, alpha = 0 sits on the kernel of A_1
    if (alpha == 0.0 && !bc.any_silver_muller())
        throw NearSingularShift("shifted_solve: alpha = 0 is an eigenvalue under PEC");

    CurrentBlockSolver<Complex> inv1(g, m, 0, Complex(1.0), ia, layout);
    CurrentBlockSolver<Complex> inv2(g, m, 1, Complex(1.0), ia, layout);
    const std::array<const CurrentBlockSolver<Complex>*, 2> inv{&inv1, &inv2};

    auto Wface = [&](StaggeredField<Complex>& io) {
        for (int cc = 0; cc < 3; ++cc)
            for (size_t i = 0; i < io.comp[static_cast<size_t>(cc)].v.size(); ++i) {
                const Complex den = ia + sigma.comp[static_cast<size_t>(cc)].v[i];
                if (std::abs(den) < 1e-14)
                    throw NearSingularShift("shifted_solve: singular B elimination at alpha");
                io.comp[static_cast<size_t>(cc)].v[i] /= den;
            }
    };

    auto e_row = [&](const StaggeredField<Complex>& v, const FieldsT<Complex>* Fin) {
        auto curle = curl_E_field(g, v);
        StaggeredField<Complex> u4 = make_face_field<Complex>(g);
        for (int cc = 0; cc < 3; ++cc)
            for (size_t i = 0; i < u4.comp[static_cast<size_t>(cc)].v.size(); ++i) {
                Complex x = -curle.comp[static_cast<size_t>(cc)].v[i];
                if (Fin) x += Fin->B.comp[static_cast<size_t>(cc)].v[i];
                u4.comp[static_cast<size_t>(cc)].v[i] = x;
            }
        Wface(u4);
        StaggeredField<Complex> efull = v;
        apply_boundary_closure(g, bc, u4, c, efull,
                               [](int, int, int, int, int, int) { return Complex{}; });
        StaggeredField<Complex> acc = make_edge_field<Complex>(g);
        StaggeredField<Complex> tmp = make_edge_field<Complex>(g);
        StaggeredField<Complex> rhs_s = make_edge_field<Complex>(g);
        for (int s = 0; s < 2; ++s) {
            const auto& sp = m.species[static_cast<size_t>(s)];
            for (int cc = 0; cc < 3; ++cc) {
                const auto& wp = sp.omega_p[static_cast<size_t>(cc)];
                const auto& ec = efull.comp[static_cast<size_t>(cc)];
                auto& rc = rhs_s.comp[static_cast<size_t>(cc)];
                for (size_t i = 0; i < rc.v.size(); ++i) {
                    rc.v[i] = eps0 * wp.v[i] * wp.v[i] * ec.v[i];
                    if (Fin) rc.v[i] += Fin->J(s).comp[static_cast<size_t>(cc)].v[i];
                }
            }
            inv[static_cast<size_t>(s)]->solve(rhs_s, tmp);
            for (int cc = 0; cc < 3; ++cc)
                for (size_t i = 0; i < acc.comp[static_cast<size_t>(cc)].v.size(); ++i)
                    acc.comp[static_cast<size_t>(cc)].v[i] += tmp.comp[static_cast<size_t>(cc)].v[i];
        }
        auto curlb = curl_B_field(g, u4);
        StaggeredField<Complex> out = make_edge_field<Complex>(g);
        for (int cc = 0; cc < 3; ++cc) {
            const auto& fm = pack.mask.free_edge[static_cast<size_t>(cc)];
            for (size_t i = 0; i < out.comp[static_cast<size_t>(cc)].v.size(); ++i) {
                if (!fm.v[i]) continue;
                out.comp[static_cast<size_t>(cc)].v[i] =
                    ia * v.comp[static_cast<size_t>(cc)].v[i] +
                    acc.comp[static_cast<size_t>(cc)].v[i] / eps0 -
                    c * c * curlb.comp[static_cast<size_t>(cc)].v[i];
            }
        }
        return out;
    };

    StaggeredField<Complex> zero_e = make_edge_field<Complex>(g);
    const StaggeredField<Complex> g0 = e_row(zero_e, &F);
    Eigen::VectorXcd rhs = pack.pack(F.E) - pack.pack(g0);

    auto Lop = [&](const Eigen::VectorXcd& x) {
        StaggeredField<Complex> v = make_edge_field<Complex>(g);
        pack.unpack(x, v);
        const StaggeredField<Complex> lv = e_row(v, nullptr);
        return Eigen::VectorXcd(pack.pack(lv));
    };

    Eigen::VectorXcd pdiag(pack.count);
    for (int cc = 0; cc < 3; ++cc) {
        const double ccd = solver_detail::curlcurl_diag(g, cc);
        const auto& fm = pack.mask.free_edge[static_cast<size_t>(cc)];
        for (size_t i = 0; i < fm.v.size(); ++i) {
            if (!fm.v[i]) continue;
            Complex dsc = ia;
            for (int s = 0; s < 2; ++s) {
                const auto& sp = m.species[static_cast<size_t>(s)];
                const double w = sp.omega_p[static_cast<size_t>(cc)].v[i];
                const double nu = sp.nu[static_cast<size_t>(cc)].v[i];
                dsc += w * w / (ia + nu);
            }
            dsc += c * c * ccd / (std::abs(alpha) > 1e-8 ? ia : Complex(1.0));
            pdiag(pack.index[static_cast<size_t>(cc)][i]) = 1.0 / dsc;
        }
    }
    auto Minv = [&](const Eigen::VectorXcd& x) { return Eigen::VectorXcd(pdiag.asDiagonal() * x); };

    Eigen::VectorXcd x = Eigen::VectorXcd::Zero(pack.count);
    if (initial_guess) x = pack.pack(initial_guess->E);
    const int maxit = maxit_factor * static_cast<int>(pack.count);
    KrylovStats st = bicgstab<Complex>(Lop, rhs, x, Minv, tol, maxit);
    if (!st.converged)
        throw NearSingularShift("shifted_solve: Krylov stagnated, residual " +
                                std::to_string(st.relative_residual));

    // reconstruction
    FieldsT<Complex> U = FieldsT<Complex>::zero(g);
    pack.unpack(x, U.E);
    auto curle = curl_E_field(g, U.E);
    for (int cc = 0; cc < 3; ++cc)
        for (size_t i = 0; i < U.B.comp[static_cast<size_t>(cc)].v.size(); ++i)
            U.B.comp[static_cast<size_t>(cc)].v[i] =
                (F.B.comp[static_cast<size_t>(cc)].v[i] - curle.comp[static_cast<size_t>(cc)].v[i]) /
                (ia + sigma.comp[static_cast<size_t>(cc)].v[i]);
    apply_boundary_closure(g, bc, U.B, c, U.E,
                           [](int, int, int, int, int, int) { return Complex{}; });
    StaggeredField<Complex> rhs_s = make_edge_field<Complex>(g);
    for (int s = 0; s < 2; ++s) {
        const auto& sp = m.species[static_cast<size_t>(s)];
        for (int cc = 0; cc < 3; ++cc) {
            const auto& wp = sp.omega_p[static_cast<size_t>(cc)];
            const auto& ec = U.E.comp[static_cast<size_t>(cc)];
            auto& rc = rhs_s.comp[static_cast<size_t>(cc)];
            const auto& fc = F.J(s).comp[static_cast<size_t>(cc)];
            for (size_t i = 0; i < rc.v.size(); ++i)
                rc.v[i] = fc.v[i] + eps0 * wp.v[i] * wp.v[i] * ec.v[i];
        }
        inv[static_cast<size_t>(s)]->solve(rhs_s, U.J(s));
    }

    // residual contract (1e-9)
    FieldsT<Complex> AU = FieldsT<Complex>::zero(g);
    apply_generator(m, bc, U, AU);
    FieldsT<Complex> R = FieldsT<Complex>::zero(g);
    auto combine = [&](const StaggeredField<Complex>& u, const StaggeredField<Complex>& au,
                       const StaggeredField<Complex>& f, StaggeredField<Complex>& r) {
        for (int cc = 0; cc < 3; ++cc)
            for (size_t i = 0; i < r.comp[static_cast<size_t>(cc)].v.size(); ++i)
                r.comp[static_cast<size_t>(cc)].v[i] = ia * u.comp[static_cast<size_t>(cc)].v[i] +
                                                       au.comp[static_cast<size_t>(cc)].v[i] -
                                                       f.comp[static_cast<size_t>(cc)].v[i];
    };
    combine(U.J1, AU.J1, F.J1, R.J1);
    combine(U.J2, AU.J2, F.J2, R.J2);
    combine(U.E, AU.E, F.E, R.E);
    // E residual only at free edges
    for (int cc = 0; cc < 3; ++cc) {
        const auto& fm = pack.mask.free_edge[static_cast<size_t>(cc)];
        for (size_t i = 0; i < R.E.comp[static_cast<size_t>(cc)].v.size(); ++i)
            if (!fm.v[i]) R.E.comp[static_cast<size_t>(cc)].v[i] = Complex{};
    }
    combine(U.B, AU.B, F.B, R.B);

    const double fn = fields_norm_X(F, m, pack.mask);
    const double rn = fields_norm_X(R, m, pack.mask);
    if (report) {
        report->krylov = st;
        report->residual_X = fn > 0 ? rn / fn : rn;
    }
    if (fn > 0 && rn > 1e-9 * fn)
        throw NearSingularShift("shifted_solve: residual " + std::to_string(rn / fn) +
                                " exceeds 1e-9 (near-singular shift?)");
    return U;
}

// ---------------------------------------------------------------------------
// Monolithic assembly (small grids) for the elimination-consistency checks.
// ---------------------------------------------------------------------------

struct StatePack {
    EdgePack epack;
    size_t j_total, b_total;
    long dim;

    explicit StatePack(const Grid& g) : epack(g) {
        j_total = make_edge_field<double>(g).total_size();
        b_total = make_face_field<double>(g).total_size();
        dim = static_cast<long>(2 * j_total) + epack.count + static_cast<long>(b_total);
    }

    template <class T>
    Eigen::Matrix<T, Eigen::Dynamic, 1> pack(const FieldsT<T>& f) const {
        Eigen::Matrix<T, Eigen::Dynamic, 1> v(dim);
        long p = 0;
        for (const auto* field : {&f.J1, &f.J2})
            for (int c = 0; c < 3; ++c)
                for (const auto& x : field->comp[static_cast<size_t>(c)].v) v(p++) = x;
        Eigen::Matrix<T, Eigen::Dynamic, 1> e = epack.pack(f.E);
        v.segment(p, e.size()) = e;
        p += e.size();
        for (int c = 0; c < 3; ++c)
            for (const auto& x : f.B.comp[static_cast<size_t>(c)].v) v(p++) = x;
        return v;
    }
    template <class T>
    void unpack(const Eigen::Matrix<T, Eigen::Dynamic, 1>& v, FieldsT<T>& f) const {
        long p = 0;
        for (auto* field : {&f.J1, &f.J2})
            for (int c = 0; c < 3; ++c)
                for (auto& x : field->comp[static_cast<size_t>(c)].v) x = v(p++);
        Eigen::Matrix<T, Eigen::Dynamic, 1> e = v.segment(p, epack.count);
        epack.unpack(e, f.E);
        p += epack.count;
        for (int c = 0; c < 3; ++c)
            for (auto& x : f.B.comp[static_cast<size_t>(c)].v) x = v(p++);
    }
};

// Assemble shift*I + scale*A_h as a sparse matrix on the packed state by
// applying the matrix-free generator to unit vectors. Test-scale only.
template <class T>
Eigen::SparseMatrix<T> assemble_shifted_operator(const MediumFields& m, const BoundarySpec& bc,
                                                 const StatePack& sp, T shift, T scale) {
    if (sp.dim > 20000) throw ShapeMismatch("assemble_shifted_operator: system too large");
    const Grid& g = m.grid;
    GeneratorApplier<T> ap(m, bc);
    std::vector<Eigen::Triplet<T>> trips;
    FieldsT<T> e_j = FieldsT<T>::zero(g), out = FieldsT<T>::zero(g);
    Eigen::Matrix<T, Eigen::Dynamic, 1> unit = Eigen::Matrix<T, Eigen::Dynamic, 1>::Zero(sp.dim);
    for (long col = 0; col < sp.dim; ++col) {
        unit.setZero();
        unit(col) = T(1);
        sp.unpack(unit, e_j);
        ap.apply(e_j, out);
        Eigen::Matrix<T, Eigen::Dynamic, 1> column = sp.pack(out);
        for (long r = 0; r < sp.dim; ++r) {
            T val = scale * column(r);
            if (r == col) val += shift;
            if (val != T{}) trips.emplace_back(static_cast<int>(r), static_cast<int>(col), val);
        }
    }
    Eigen::SparseMatrix<T> A(sp.dim, sp.dim);
    A.setFromTriplets(trips.begin(), trips.end());
    return A;
}

// ---------------------------------------------------------------------------
// Dense direct route for slab-sized shifted systems.
// ---------------------------------------------------------------------------

inline Eigen::VectorXcd slab_shifted_solve(const SlabOperator& op, double alpha,
                                           const Eigen::VectorXcd& f, double* sigma_min_est = nullptr) {
    const int n = op.dim();
    Eigen::MatrixXcd M = op.A.cast<Complex>();
    for (int i = 0; i < n; ++i) M(i, i) += Complex(0.0, alpha);
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(M);
    // cheap near-singularity estimate from the U factor
    double dmin = 1e300, dmax = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = std::abs(lu.matrixLU()(i, i));
        dmin = std::min(dmin, d);
        dmax = std::max(dmax, d);
    }
    if (sigma_min_est) *sigma_min_est = dmin;
    if (dmax == 0.0 || dmin <= 1e-12 * dmax)
        throw NearSingularShift("slab_shifted_solve: i*alpha is numerically an eigenvalue");
    Eigen::VectorXcd u = lu.solve(f);
    const double rel = (M * u - f).norm() / std::max(f.norm(), 1e-300);
    if (rel > 1e-9)
        throw NearSingularShift("slab_shifted_solve: residual " + std::to_string(rel));
    return u;
}

} // namespace coldplasma

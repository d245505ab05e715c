#pragma once

#include <cstddef>
#include <vector>

#include "coldplasma/common.hpp"

namespace coldplasma {

// Axis-aligned box with Yee staggering: E and J components on edges,
// B components on faces, charge densities on nodes.
struct Grid {
    double Lx = 1.0, Ly = 1.0, Lz = 1.0;
    int nx = 1, ny = 1, nz = 1;

    double dx() const { return Lx / nx; }
    double dy() const { return Ly / ny; }
    double dz() const { return Lz / nz; }
    double spacing(int axis) const { return axis == 0 ? dx() : (axis == 1 ? dy() : dz()); }
    double extent(int axis) const { return axis == 0 ? Lx : (axis == 1 ? Ly : Lz); }
    int cells(int axis) const { return axis == 0 ? nx : (axis == 1 ? ny : nz); }
    double cell_volume() const { return dx() * dy() * dz(); }

    // Dimensions of the sample lattice for edge component c: along the
    // component axis there are n values, along the others n+1.
    std::array<int, 3> edge_dims(int c) const {
        std::array<int, 3> d{nx + 1, ny + 1, nz + 1};
        d[static_cast<size_t>(c)] = cells(c);
        return d;
    }
    // Face component c: n+1 along the component axis, n along the others.
    std::array<int, 3> face_dims(int c) const {
        std::array<int, 3> d{nx, ny, nz};
        d[static_cast<size_t>(c)] = cells(c) + 1;
        return d;
    }
    std::array<int, 3> node_dims() const { return {nx + 1, ny + 1, nz + 1}; }
    std::array<int, 3> cell_dims() const { return {nx, ny, nz}; }

    Vec3 edge_center(int c, int i, int j, int k) const {
        Vec3 x{{i * dx(), j * dy(), k * dz()}};
        x[c] += 0.5 * spacing(c);
        return x;
    }
    Vec3 face_center(int c, int i, int j, int k) const {
        Vec3 x{{(i + 0.5) * dx(), (j + 0.5) * dy(), (k + 0.5) * dz()}};
        x[c] -= 0.5 * spacing(c);
        return x;
    }
    Vec3 node(int i, int j, int k) const { return {{i * dx(), j * dy(), k * dz()}}; }
};

template <class T>
struct Arr3 {
    std::array<int, 3> dims{0, 0, 0};
    std::vector<T> v;

    Arr3() = default;
    explicit Arr3(std::array<int, 3> d) { resize(d); }

    void resize(std::array<int, 3> d) {
        dims = d;
        v.assign(static_cast<size_t>(d[0]) * d[1] * d[2], T{});
    }
    size_t size() const { return v.size(); }
    size_t idx(int i, int j, int k) const {
        return (static_cast<size_t>(i) * dims[1] + j) * static_cast<size_t>(dims[2]) + k;
    }
    T& operator()(int i, int j, int k) { return v[idx(i, j, k)]; }
    const T& operator()(int i, int j, int k) const { return v[idx(i, j, k)]; }
    void fill(T x) { std::fill(v.begin(), v.end(), x); }
};

using Array3 = Arr3<double>;

// One staggered vector field: three component lattices.
template <class T>
struct StaggeredField {
    std::array<Arr3<T>, 3> comp;

    size_t total_size() const { return comp[0].size() + comp[1].size() + comp[2].size(); }
    void fill(T x) {
        for (auto& a : comp) a.fill(x);
    }
};

template <class T>
StaggeredField<T> make_edge_field(const Grid& g) {
    StaggeredField<T> f;
    for (int c = 0; c < 3; ++c) f.comp[static_cast<size_t>(c)].resize(g.edge_dims(c));
    return f;
}
template <class T>
StaggeredField<T> make_face_field(const Grid& g) {
    StaggeredField<T> f;
    for (int c = 0; c < 3; ++c) f.comp[static_cast<size_t>(c)].resize(g.face_dims(c));
    return f;
}

using EdgeField = StaggeredField<double>;
using FaceField = StaggeredField<double>;

// Is edge sample (c,i,j,k) tangential to (i.e. lying in) the boundary plane
// of the given face of the box? axis in {0,1,2}, side 0 = low, 1 = high.
inline bool edge_on_boundary_plane(const Grid& g, int c, int i, int j, int k, int axis, int side) {
    if (c == axis) return false; // component along the normal is never tangential to this face
    const int idx_along = axis == 0 ? i : (axis == 1 ? j : k);
    return idx_along == (side == 0 ? 0 : g.cells(axis));
}

// True if the edge sample lies in any boundary plane it is tangential to.
inline bool edge_on_any_boundary(const Grid& g, int c, int i, int j, int k) {
    for (int axis = 0; axis < 3; ++axis) {
        if (axis == c) continue;
        for (int side = 0; side < 2; ++side)
            if (edge_on_boundary_plane(g, c, i, j, k, axis, side)) return true;
    }
    return false;
}

} // namespace coldplasma

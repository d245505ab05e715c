#pragma once

#include <memory>
#include <vector>

#include "coldplasma/common.hpp"

namespace coldplasma {

// Closed-form coefficient profiles: constant, affine ramp along an axis,
// Gaussian bump, and products of these. Deterministic to sample anywhere,
// which keeps the coefficient tests oracle-friendly.
struct Profile {
    enum class Kind { Constant, Ramp, Gaussian, Product };

    Kind kind = Kind::Constant;
    double value = 0.0;                  // Constant
    int axis = 0;                        // Ramp: coordinate index
    double from = 0.0, to = 0.0;         // Ramp: value at x_axis=0 and x_axis=extent
    double extent = 1.0;                 // Ramp: domain length along axis
    Vec3 center{};                       // Gaussian
    double sigma = 1.0;                  // Gaussian
    double amplitude = 1.0;              // Gaussian
    double floor_value = 0.0;            // Gaussian baseline
    std::vector<Profile> factors;        // Product

    static Profile constant(double v) {
        Profile p;
        p.kind = Kind::Constant;
        p.value = v;
        return p;
    }
    static Profile ramp(int axis, double from, double to, double extent) {
        Profile p;
        p.kind = Kind::Ramp;
        p.axis = axis;
        p.from = from;
        p.to = to;
        p.extent = extent;
        return p;
    }
    static Profile gaussian(Vec3 center, double sigma, double amplitude, double floor_value = 0.0) {
        Profile p;
        p.kind = Kind::Gaussian;
        p.center = center;
        p.sigma = sigma;
        p.amplitude = amplitude;
        p.floor_value = floor_value;
        return p;
    }
    static Profile product(std::vector<Profile> fs) {
        Profile p;
        p.kind = Kind::Product;
        p.factors = std::move(fs);
        return p;
    }

    double operator()(const Vec3& x) const {
        switch (kind) {
        case Kind::Constant:
            return value;
        case Kind::Ramp:
            return from + (to - from) * (x[axis] / extent);
        case Kind::Gaussian: {
            const Vec3 d = x - center;
            return floor_value + amplitude * std::exp(-dot(d, d) / (2.0 * sigma * sigma));
        }
        case Kind::Product: {
            double v = 1.0;
            for (const auto& f : factors) v *= f(x);
            return v;
        }
        }
        return 0.0;
    }
};

struct VectorProfile {
    std::array<Profile, 3> comp{Profile::constant(0), Profile::constant(0), Profile::constant(0)};

    static VectorProfile uniform(const Vec3& v) {
        VectorProfile p;
        for (int c = 0; c < 3; ++c) p.comp[static_cast<size_t>(c)] = Profile::constant(v[c]);
        return p;
    }

    Vec3 operator()(const Vec3& x) const {
        return {{comp[0](x), comp[1](x), comp[2](x)}};
    }
};

} // namespace coldplasma

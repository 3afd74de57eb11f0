#include "xrgen/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "xrgen/rng.hpp"

namespace xrgen::phantom {

namespace {

struct BodyShape {
    double radius;      // base radius, mm
    double ex, ey;      // ellipse eccentricities
    double taper;       // linear narrowing toward -z
    double bulge;       // knee-level widening
    double bulge_width; // mm
    double bow;         // lateral axis drift, mm
    double knee_z;      // mm

    double profile(double z, double half_z) const {
        const double lin = 1.0 + taper * (z / (2.0 * half_z));
        const double dk = (z - knee_z) / bulge_width;
        return lin + bulge * std::exp(-dk * dk);
    }
    double semi_x(double z, double half_z) const { return radius * ex * profile(z, half_z); }
    double semi_y(double z, double half_z) const { return radius * ey * profile(z, half_z); }
    double center_x(double z, double half_z) const { return bow * (z / half_z) * (z / half_z); }
};

struct TubularBone {
    double z_lo, z_hi;        // axial extent, mm
    double ax, ay;            // axis position at the knee, mm
    double tilt_x, tilt_y;    // axis slope per mm of z
    double radius;            // shaft radius, mm
    double end_bulge;         // relative widening at the joint end
    double end_z;             // where the bulge peaks
    double end_width;         // mm
    double cortical_frac;     // shell starts at this radial fraction

    double radius_at(double z) const {
        const double d = (z - end_z) / end_width;
        return radius * (1.0 + end_bulge * std::exp(-d * d));
    }
    // radial fraction (<=1 inside); >1 when outside or beyond the axial range
    double rho(double x, double y, double z, double knee_z) const {
        if (z < z_lo || z > z_hi) return 2.0;
        const double cx = ax + tilt_x * (z - knee_z);
        const double cy = ay + tilt_y * (z - knee_z);
        const double r = radius_at(z);
        const double dx = x - cx, dy = y - cy;
        return std::sqrt(dx * dx + dy * dy) / r;
    }
};

struct Patella {
    bool present = false;
    double cx, cy, cz;
    double sx, sy, sz;        // semi-axes, mm
    double cortical_frac;

    double rho(double x, double y, double z) const {
        const double dx = (x - cx) / sx, dy = (y - cy) / sy, dz = (z - cz) / sz;
        return std::sqrt(dx * dx + dy * dy + dz * dz);
    }
};

struct Scene {
    BodyShape body;
    TubularBone femur, tibia;
    Patella patella;
    double half_z;
    double mu_soft, mu_cortical, mu_marrow;
};

enum Material : int { kOutside = 0, kSoft, kMarrow, kCortical };

inline Material material_at(const Scene& s, double x, double y, double z) {
    const double axs = s.body.semi_x(z, s.half_z);
    const double ays = s.body.semi_y(z, s.half_z);
    const double bx = (x - s.body.center_x(z, s.half_z)) / axs;
    const double by = y / ays;
    if (bx * bx + by * by > 1.0) return kOutside;

    double rho = s.femur.rho(x, y, z, s.body.knee_z);
    double cf = s.femur.cortical_frac;
    const double rho_t = s.tibia.rho(x, y, z, s.body.knee_z);
    if (rho_t < rho) {
        rho = rho_t;
        cf = s.tibia.cortical_frac;
    }
    if (s.patella.present) {
        const double rho_p = s.patella.rho(x, y, z);
        if (rho_p < rho) {
            rho = rho_p;
            cf = s.patella.cortical_frac;
        }
    }
    if (rho <= 1.0) return rho >= cf ? kCortical : kMarrow;
    return kSoft;
}

}  // namespace

void PhantomParams::validate() const {
    auto positive_range = [](double lo, double hi) { return lo > 0.0 && lo <= hi; };
    if (!positive_range(leg_radius_min, leg_radius_max) ||
        !positive_range(bone_radius_min, bone_radius_max) ||
        !(bone_offset_min >= 0.0 && bone_offset_min <= bone_offset_max))
        throw std::invalid_argument("PhantomParams: ranges must be non-empty and positive");
    if (!(bone_mu > soft_tissue_mu && soft_tissue_mu > 0.0))
        throw std::invalid_argument("PhantomParams: requires bone_mu > soft_tissue_mu > 0");
    if (n_bones < 2 || n_bones > 3)
        throw std::invalid_argument("PhantomParams: n_bones must be 2 or 3");
    if (grid < 8) throw std::invalid_argument("PhantomParams: grid too small");
    if (!(spacing_mm > 0.0)) throw std::invalid_argument("PhantomParams: spacing must be positive");
}

VolumeGrid build_phantom(const PhantomParams& p, ExecMode mode) {
    p.validate();

    const double half = 0.5 * p.grid * p.spacing_mm;
    Rng rng(p.seed);

    Scene s;
    s.half_z = half;
    s.mu_soft = p.soft_tissue_mu;
    s.mu_cortical = p.bone_mu;

    s.body.radius = rng.uniform(p.leg_radius_min, p.leg_radius_max);
    s.body.ex = rng.uniform(0.88, 1.0);
    s.body.ey = s.body.ex * rng.uniform(0.80, 0.95);
    s.body.taper = rng.uniform(0.06, 0.14);
    s.body.bulge = rng.uniform(0.04, 0.12);
    s.body.bulge_width = rng.uniform(20.0, 34.0);
    s.body.bow = rng.uniform(-6.0, 6.0);
    s.body.knee_z = rng.uniform(-0.1, 0.1) * half;
    s.mu_marrow = p.soft_tissue_mu + rng.uniform(0.30, 0.45) * (p.bone_mu - p.soft_tissue_mu);

    const double gap = rng.uniform(3.0, 6.0);
    const double kneeZ = s.body.knee_z;

    // The narrowest body cross-section limits how far off-axis a bone may sit.
    const double min_semi = p.leg_radius_min * 0.80 * 0.80 * (1.0 - s.body.taper * 0.5);
    const double max_bone_r = p.bone_radius_max * 1.5;
    if (max_bone_r >= min_semi * 0.92)
        throw std::invalid_argument(
            "PhantomParams: infeasible geometry, bones cannot fit inside the body");

    auto make_bone = [&](bool upper, double r_shaft) {
        TubularBone b;
        b.radius = r_shaft;
        b.end_bulge = rng.uniform(0.25, 0.50);
        b.end_width = rng.uniform(8.0, 15.0);
        b.cortical_frac = rng.uniform(0.55, 0.68);
        if (upper) {
            b.z_lo = kneeZ + 0.5 * gap;
            b.z_hi = half + 1.0;
            b.end_z = b.z_lo;
        } else {
            b.z_lo = -half - 1.0;
            b.z_hi = kneeZ - 0.5 * gap;
            b.end_z = b.z_hi;
        }
        const double theta = rng.uniform(0.0, 2.0 * M_PI);
        double off = rng.uniform(p.bone_offset_min, p.bone_offset_max);
        const double room = min_semi * 0.92 - b.radius * (1.0 + b.end_bulge);
        off = std::min(off, std::max(0.0, room));
        b.ax = off * std::cos(theta);
        b.ay = off * std::sin(theta);
        b.tilt_x = rng.uniform(-0.04, 0.04);
        b.tilt_y = rng.uniform(-0.04, 0.04);
        return b;
    };

    const double rf = rng.uniform(p.bone_radius_min, p.bone_radius_max);
    s.femur = make_bone(true, rf);
    s.tibia = make_bone(false, rf * rng.uniform(0.78, 0.95));

    if (p.n_bones == 3) {
        Patella pa;
        pa.present = true;
        const double pr = rf * rng.uniform(0.50, 0.65);
        pa.sx = pr * 0.9;
        pa.sy = pr * 0.55;
        pa.sz = pr * 1.2;
        pa.cz = kneeZ + rng.uniform(-2.0, 6.0);
        pa.cx = s.femur.ax * 0.5;
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        double py = std::abs(s.femur.ay) + s.femur.radius * (1.0 + s.femur.end_bulge) + 2.0 + pa.sy;
        py = std::min(py, min_semi * 0.92 - pa.sy);
        pa.cy = sign * py;
        pa.cortical_frac = rng.uniform(0.45, 0.60);
        s.patella = pa;
    }

    VolumeGrid vol;
    vol.nx = vol.ny = vol.nz = p.grid;
    vol.spacing = p.spacing_mm;
    vol.attenuation.assign(static_cast<std::size_t>(p.grid) * p.grid * p.grid, 0.0);
    vol.bone_mask.assign(vol.attenuation.size(), 0);

    const int n = p.grid;
    const double c = 0.5 * (n - 1);
    // 3x3x3 supersampling per voxel keeps boundaries smooth at coarse grids.
    static const double sub[3] = {-1.0 / 3.0, 0.0, 1.0 / 3.0};

#pragma omp parallel for schedule(static) if (mode == ExecMode::Parallel)
    for (int iz = 0; iz < n; ++iz) {
        for (int iy = 0; iy < n; ++iy) {
            for (int ix = 0; ix < n; ++ix) {
                int counts[4] = {0, 0, 0, 0};
                for (int a = 0; a < 3; ++a)
                    for (int b = 0; b < 3; ++b)
                        for (int d = 0; d < 3; ++d) {
                            const double x = (ix - c + sub[a]) * p.spacing_mm;
                            const double y = (iy - c + sub[b]) * p.spacing_mm;
                            const double z = (iz - c + sub[d]) * p.spacing_mm;
                            ++counts[material_at(s, x, y, z)];
                        }
                const double att = (counts[kSoft] * s.mu_soft + counts[kMarrow] * s.mu_marrow +
                                    counts[kCortical] * s.mu_cortical) /
                                   27.0;
                const std::size_t idx = vol.index(ix, iy, iz);
                vol.attenuation[idx] = att;
                const double xc = (ix - c) * p.spacing_mm;
                const double yc = (iy - c) * p.spacing_mm;
                const double zc = (iz - c) * p.spacing_mm;
                const Material center = material_at(s, xc, yc, zc);
                vol.bone_mask[idx] = (center == kMarrow || center == kCortical) ? 1 : 0;
            }
        }
    }
    return vol;
}

}  // namespace xrgen::phantom

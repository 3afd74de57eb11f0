#include "xrgen/projector.hpp"

#include <cmath>
#include <stdexcept>

namespace xrgen::proj {

void ProjectionGeometry::validate() const {
    if (n_views <= 0 || detector_h <= 0 || detector_w <= 0 || detector_pixel_size <= 0.0)
        throw std::invalid_argument("ProjectionGeometry: dimensions must be positive");
    if (std::fabs(n_views * angular_increment_deg - 360.0) > 1e-9)
        throw std::invalid_argument("ProjectionGeometry: n_views * angular_increment must be 360");
}

namespace {

ImageTensor project_impl(const phantom::VolumeGrid& vol, const ProjectionGeometry& geom,
                         int view_index, bool bone_only, ExecMode mode) {
    geom.validate();
    if (view_index < 0 || view_index >= geom.n_views)
        throw std::invalid_argument("forward_project: view_index out of range");
    if (vol.attenuation.size() !=
        static_cast<std::size_t>(vol.nx) * vol.ny * vol.nz)
        throw std::invalid_argument("forward_project: volume buffer does not match its dimensions");

    const double theta = view_index * geom.angular_increment_deg * M_PI / 180.0;
    const double dx = std::cos(theta), dy = std::sin(theta);
    const double ux = -std::sin(theta), uy = std::cos(theta);

    const int nx = vol.nx, ny = vol.ny, nz = vol.nz;
    const double sp = vol.spacing;
    const double cxv = 0.5 * (nx - 1), cyv = 0.5 * (ny - 1), czv = 0.5 * (nz - 1);
    const bool drive_x = std::fabs(dx) >= std::fabs(dy);
    const double step_len = sp / (drive_x ? std::fabs(dx) : std::fabs(dy));

    ImageTensor out(geom.detector_h, geom.detector_w, 1);

    auto tap = [&](int ix, int iy, int iz) -> double {
        const std::size_t idx = vol.index(ix, iy, iz);
        const double a = vol.attenuation[idx];
        if (!bone_only) return a;
        return vol.bone_mask[idx] ? a : 0.0;
    };

#pragma omp parallel for schedule(static) if (mode == ExecMode::Parallel)
    for (int row = 0; row < geom.detector_h; ++row) {
        const double z = (0.5 * (geom.detector_h - 1) - row) * geom.detector_pixel_size;
        const double fz = z / sp + czv;
        if (fz < 0.0 || fz > nz - 1) continue;  // ray misses the volume vertically
        int iz0 = static_cast<int>(fz);
        if (iz0 > nz - 2) iz0 = nz - 2;
        const double wz = fz - iz0;

        double* orow = out.values.data() + static_cast<std::size_t>(row) * geom.detector_w;
        for (int col = 0; col < geom.detector_w; ++col) {
            const double u = (col - 0.5 * (geom.detector_w - 1)) * geom.detector_pixel_size;
            const double px = u * ux, py = u * uy;
            double acc = 0.0;
            if (drive_x) {
                for (int ix = 0; ix < nx; ++ix) {
                    const double x = (ix - cxv) * sp;
                    const double s = (x - px) / dx;
                    const double fy = (py + s * dy) / sp + cyv;
                    if (fy < 0.0 || fy > ny - 1) continue;
                    int iy0 = static_cast<int>(fy);
                    if (iy0 > ny - 2) iy0 = ny - 2;
                    const double wy = fy - iy0;
                    acc += (1 - wy) * ((1 - wz) * tap(ix, iy0, iz0) + wz * tap(ix, iy0, iz0 + 1)) +
                           wy * ((1 - wz) * tap(ix, iy0 + 1, iz0) + wz * tap(ix, iy0 + 1, iz0 + 1));
                }
            } else {
                for (int iy = 0; iy < ny; ++iy) {
                    const double y = (iy - cyv) * sp;
                    const double s = (y - py) / dy;
                    const double fx = (px + s * dx) / sp + cxv;
                    if (fx < 0.0 || fx > nx - 1) continue;
                    int ix0 = static_cast<int>(fx);
                    if (ix0 > nx - 2) ix0 = nx - 2;
                    const double wx = fx - ix0;
                    acc += (1 - wx) * ((1 - wz) * tap(ix0, iy, iz0) + wz * tap(ix0, iy, iz0 + 1)) +
                           wx * ((1 - wz) * tap(ix0 + 1, iy, iz0) + wz * tap(ix0 + 1, iy, iz0 + 1));
                }
            }
            orow[col] = acc * step_len;
        }
    }
    return out;
}

}  // namespace

ImageTensor forward_project(const phantom::VolumeGrid& vol, const ProjectionGeometry& geom,
                            int view_index, ExecMode mode) {
    return project_impl(vol, geom, view_index, false, mode);
}

ImageTensor forward_project_bone(const phantom::VolumeGrid& vol, const ProjectionGeometry& geom,
                                 int view_index, ExecMode mode) {
    return project_impl(vol, geom, view_index, true, mode);
}

}  // namespace xrgen::proj

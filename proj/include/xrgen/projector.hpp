#pragma once

#include "xrgen/parallel.hpp"
#include "xrgen/phantom.hpp"
#include "xrgen/tensor.hpp"

namespace xrgen::proj {

// Parallel-beam sweep: n_views * angular_increment_deg must equal 360.
// The detector is centered on the volume; rows map to the volume z axis
// (row 0 at +z), columns to the transverse axis of the rotating frame.
struct ProjectionGeometry {
    int n_views = 60;
    double angular_increment_deg = 6.0;
    int detector_h = 64;
    int detector_w = 64;
    double detector_pixel_size = 2.5;  // mm

    void validate() const;  // throws std::invalid_argument
};

// Line integral of attenuation along parallel rays (Joseph's method: unit steps
// along the dominant in-plane axis with linear interpolation). Units: the
// integral of 1/mm over mm, i.e. dimensionless path attenuation.
ImageTensor forward_project(const phantom::VolumeGrid& vol, const ProjectionGeometry& geom,
                            int view_index, ExecMode mode = exec_mode());

// Same, but integrating attenuation restricted to the bone mask.
ImageTensor forward_project_bone(const phantom::VolumeGrid& vol, const ProjectionGeometry& geom,
                                 int view_index, ExecMode mode = exec_mode());

}  // namespace xrgen::proj

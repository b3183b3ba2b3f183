#pragma once

#include <vector>

#include "stacktrack/encoding.hpp"
#include "stacktrack/geometry.hpp"
#include "stacktrack/model.hpp"
#include "stacktrack/tensor.hpp"

namespace stacktrack {

struct LossConfig {
    double gamma = 4.0;                 // focal exponent
    double w1 = 1.0, w2 = 1.0, w3 = 1.0;
    double center_weight_alpha = 0.0;   // pixel weights W_i = 1 + alpha * P_i
    double sigma_floor = 1.0;           // floor of the gaussian stddev, in cells

    void validate() const;
};

// One annotated object in normalized image coordinates.
struct ObjectAnnotation {
    int id = 0;
    BBox box;
};

// Ground-truth grids for one frame. dims_t/disp_t are zero off-mask.
struct TargetMaps {
    Tensor heat;          // [1,R,R], gaussian peaks, exactly 1 at center cells
    Tensor pixel_weights; // [1,R,R]
    Tensor dims_t;        // [2,R,R]
    Tensor disp_t;        // [2,R,R], normalized displacement at center cells
    Tensor mask;          // [1,R,R] in {0,1}
    int mask_cells = 0;
    int skipped = 0;      // objects whose center fell outside the image
};

// Rasterize annotations onto an R x R grid: per object, a gaussian
// exp(-r^2 / 2 sigma^2) splatted at its center cell and composited with max,
// sigma = max(floor, diag_in_cells / 6). Displacement targets come from the
// matching previous-frame annotation (same id); objects with no previous
// match are treated as stationary.
TargetMaps render_targets(const std::vector<ObjectAnnotation>& current,
                          const std::vector<ObjectAnnotation>& previous, int grid_size,
                          const DisplacementNorm& norm, const LossConfig& cfg);

// Weighted binary cross entropy over all cells, mean over the grid.
Tensor center_loss(Graph& g, const Tensor& pred, const Tensor& target, const Tensor& weights);

// -(1/N) * sum (1-p)^gamma * t * log p.
Tensor focal_loss(Graph& g, const Tensor& pred, const Tensor& target, double gamma);

// Mean absolute error over masked cells, across all channels; 0 when the mask
// is empty. mask is [1,R,R] and broadcasts over the prediction's channels.
Tensor grid_loss(Graph& g, const Tensor& pred, const Tensor& target, const Tensor& mask,
                 int mask_cells);

// Weighted mean of (center+focal), dims grid loss, and displacement grid loss.
// Terms with zero weight are skipped entirely, which leaves the value unchanged.
Tensor combined_loss(Graph& g, const ModelOutput& out, const TargetMaps& targets,
                     const LossConfig& cfg);

} // namespace stacktrack

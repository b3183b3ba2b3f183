#include "stacktrack/losses.hpp"

#include <cmath>

namespace stacktrack {

namespace {
constexpr double kLogEps = 1e-7; // clamp for log arguments
}

void LossConfig::validate() const {
    if (gamma < 0.0) {
        throw ConfigError("gamma must be >= 0");
    }
    if (w1 < 0.0 || w2 < 0.0 || w3 < 0.0) {
        throw ConfigError("loss weights must be >= 0");
    }
    if (w1 + w2 + w3 <= 0.0) {
        throw ConfigError("at least one loss weight must be positive");
    }
    if (sigma_floor <= 0.0) {
        throw ConfigError("sigma_floor must be positive");
    }
}

TargetMaps render_targets(const std::vector<ObjectAnnotation>& current,
                          const std::vector<ObjectAnnotation>& previous, int grid_size,
                          const DisplacementNorm& norm, const LossConfig& cfg) {
    cfg.validate();
    const int R = grid_size;
    TargetMaps t;
    t.heat = Tensor::zeros({1, R, R});
    t.pixel_weights = Tensor::full({1, R, R}, 1.0);
    t.dims_t = Tensor::zeros({2, R, R});
    t.disp_t = Tensor::zeros({2, R, R});
    t.mask = Tensor::zeros({1, R, R});

    for (const ObjectAnnotation& obj : current) {
        const int col = static_cast<int>(std::floor(obj.box.cx * R));
        const int row = static_cast<int>(std::floor(obj.box.cy * R));
        if (col < 0 || col >= R || row < 0 || row >= R) {
            ++t.skipped;
            continue;
        }
        const double diag_cells = std::hypot(obj.box.w * R, obj.box.h * R);
        const double sigma = std::max(cfg.sigma_floor, diag_cells / 6.0);
        const int radius = static_cast<int>(std::ceil(3.0 * sigma));
        for (int i = std::max(0, row - radius); i <= std::min(R - 1, row + radius); ++i) {
            for (int j = std::max(0, col - radius); j <= std::min(R - 1, col + radius); ++j) {
                const double r2 = static_cast<double>((i - row) * (i - row) + (j - col) * (j - col));
                const double v = std::exp(-r2 / (2.0 * sigma * sigma));
                double& cell = t.heat.at({0, i, j});
                cell = std::max(cell, v);
            }
        }
        if (t.mask.at({0, row, col}) == 0.0) {
            t.mask.at({0, row, col}) = 1.0;
            ++t.mask_cells;
        }
        t.dims_t.at({0, row, col}) = obj.box.w;
        t.dims_t.at({1, row, col}) = obj.box.h;

        double dx = 0.0, dy = 0.0;
        for (const ObjectAnnotation& prev : previous) {
            if (prev.id == obj.id) {
                dx = obj.box.cx - prev.box.cx;
                dy = obj.box.cy - prev.box.cy;
                break;
            }
        }
        const auto [u, v] = normalize_displacement({dx, dy}, norm);
        t.disp_t.at({0, row, col}) = u;
        t.disp_t.at({1, row, col}) = v;
    }

    if (cfg.center_weight_alpha != 0.0) {
        for (std::size_t i = 0; i < t.pixel_weights.numel(); ++i) {
            t.pixel_weights[i] = 1.0 + cfg.center_weight_alpha * t.heat[i];
        }
    }
    return t;
}

Tensor center_loss(Graph& g, const Tensor& pred, const Tensor& target, const Tensor& weights) {
    if (pred.shape() != target.shape() || pred.shape() != weights.shape()) {
        throw ShapeError("center_loss shapes differ");
    }
    const double n = static_cast<double>(pred.numel());
    Tensor p = g.clamp(pred, kLogEps, 1.0 - kLogEps);
    Tensor one = Tensor::full(pred.shape(), 1.0);
    Tensor pos = g.mul(target, g.log(p));
    Tensor neg = g.mul(g.sub(one, target), g.log(g.sub(one, p)));
    Tensor weighted = g.mul(g.add(pos, neg), weights);
    return g.scale(g.sum(weighted), -1.0 / n);
}

Tensor focal_loss(Graph& g, const Tensor& pred, const Tensor& target, double gamma) {
    if (pred.shape() != target.shape()) {
        throw ShapeError("focal_loss shapes differ");
    }
    const double n = static_cast<double>(pred.numel());
    Tensor p = g.clamp(pred, kLogEps, 1.0 - kLogEps);
    Tensor one = Tensor::full(pred.shape(), 1.0);
    Tensor focus = g.pow_const(g.sub(one, p), gamma);
    Tensor term = g.mul(focus, g.mul(target, g.log(p)));
    return g.scale(g.sum(term), -1.0 / n);
}

Tensor grid_loss(Graph& g, const Tensor& pred, const Tensor& target, const Tensor& mask,
                 int mask_cells) {
    if (pred.shape() != target.shape()) {
        throw ShapeError("grid_loss shapes differ");
    }
    if (mask.ndim() != 3 || mask.dim(0) != 1 || mask.dim(1) != pred.dim(1) ||
        mask.dim(2) != pred.dim(2)) {
        throw ShapeError("grid_loss mask must be [1,H,W] matching the prediction plane");
    }
    const int channels = pred.dim(0);
    const int elements = mask_cells * channels;
    if (elements == 0) {
        return Tensor::scalar(0.0);
    }
    // broadcast the mask over channels
    Tensor mask_full = Tensor::zeros(pred.shape());
    const std::size_t plane = mask.numel();
    for (int c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
            mask_full[static_cast<std::size_t>(c) * plane + i] = mask[i];
        }
    }
    Tensor diff = g.abs(g.sub(pred, target));
    Tensor masked = g.mul(diff, mask_full);
    return g.scale(g.sum(masked), 1.0 / static_cast<double>(elements));
}

Tensor combined_loss(Graph& g, const ModelOutput& out, const TargetMaps& targets,
                     const LossConfig& cfg) {
    cfg.validate();
    const double wsum = cfg.w1 + cfg.w2 + cfg.w3;
    Tensor total = Tensor::scalar(0.0);
    if (cfg.w1 > 0.0) {
        Tensor heat = g.add(center_loss(g, out.heatmap, targets.heat, targets.pixel_weights),
                            focal_loss(g, out.heatmap, targets.heat, cfg.gamma));
        total = g.add(total, g.scale(heat, cfg.w1 / wsum));
    }
    if (cfg.w2 > 0.0) {
        Tensor dims = grid_loss(g, out.dims, targets.dims_t, targets.mask, targets.mask_cells);
        total = g.add(total, g.scale(dims, cfg.w2 / wsum));
    }
    if (cfg.w3 > 0.0) {
        Tensor disp = grid_loss(g, out.disp, targets.disp_t, targets.mask, targets.mask_cells);
        total = g.add(total, g.scale(disp, cfg.w3 / wsum));
    }
    return total;
}

} // namespace stacktrack

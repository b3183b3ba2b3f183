#include "stacktrack/encoding.hpp"

#include <cmath>
#include <cstring>

namespace stacktrack {

std::string to_string(EmbeddingMode m) {
    return m == EmbeddingMode::channel_wise ? "channel_wise" : "positional";
}

std::string to_string(TokenMode m) {
    return m == TokenMode::stacked ? "stacked" : "streamed";
}

EmbeddingMode embedding_mode_from(const std::string& s) {
    if (s == "channel_wise") {
        return EmbeddingMode::channel_wise;
    }
    if (s == "positional") {
        return EmbeddingMode::positional;
    }
    throw ConfigError("unknown embedding mode '" + s + "' (channel_wise|positional)");
}

TokenMode token_mode_from(const std::string& s) {
    if (s == "stacked") {
        return TokenMode::stacked;
    }
    if (s == "streamed") {
        return TokenMode::streamed;
    }
    throw ConfigError("unknown token mode '" + s + "' (stacked|streamed)");
}

void PipelineConfig::validate() const {
    if (image_size <= 0 || patch_size <= 0) {
        throw ConfigError("image_size and patch_size must be positive");
    }
    if (image_size % patch_size != 0) {
        throw ConfigError("image_size " + std::to_string(image_size) +
                          " not divisible by patch_size " + std::to_string(patch_size));
    }
    if (window < 1) {
        throw ConfigError("window must be >= 1");
    }
    if (embed_dim < 1) {
        throw ConfigError("embed_dim must be >= 1");
    }
}

void FrameWindow::validate(const PipelineConfig& cfg) const {
    if (static_cast<int>(frames.size()) != cfg.window) {
        throw ConfigError("window holds " + std::to_string(frames.size()) + " frames, expected " +
                          std::to_string(cfg.window));
    }
    const Shape want = {3, cfg.image_size, cfg.image_size};
    for (const Tensor& f : frames) {
        if (f.shape() != want) {
            throw ConfigError("frame shape " + shape_str(f.shape()) + ", expected " +
                              shape_str(want));
        }
    }
}

void DisplacementNorm::validate() const {
    if (!(min_x < max_x) || !(min_y < max_y)) {
        throw ConfigError("displacement bounds require min < max per axis");
    }
}

Tensor stack_window(const FrameWindow& w) {
    if (w.frames.empty()) {
        throw ConfigError("cannot stack an empty window");
    }
    const int S = w.frames[0].dim(1);
    const int W = static_cast<int>(w.frames.size());
    Tensor out = Tensor::zeros({3 * W, S, S});
    const std::size_t per_frame = w.frames[0].numel();
    for (int i = 0; i < W; ++i) {
        std::memcpy(out.data() + static_cast<std::size_t>(i) * per_frame, w.frames[i].data(),
                    sizeof(double) * per_frame);
    }
    return out;
}

Tensor frame_slice(const Tensor& stacked, int w) {
    if (stacked.ndim() != 3 || stacked.dim(0) % 3 != 0) {
        throw ShapeError("frame_slice expects [3W,S,S]");
    }
    const int W = stacked.dim(0) / 3;
    if (w < 0 || w >= W) {
        throw ShapeError("frame index out of range");
    }
    const int S = stacked.dim(1);
    Tensor out = Tensor::zeros({3, S, stacked.dim(2)});
    const std::size_t per_frame = out.numel();
    std::memcpy(out.data(), stacked.data() + static_cast<std::size_t>(w) * per_frame,
                sizeof(double) * per_frame);
    return out;
}

Tensor patchify_project(Graph& g, const Tensor& image, const Tensor& proj_kernel,
                        const Tensor& proj_bias, int patch_size) {
    if (image.ndim() != 3) {
        throw ShapeError("patchify_project expects an image [C,S,S]");
    }
    if (image.dim(1) % patch_size != 0 || image.dim(2) % patch_size != 0) {
        throw ConfigError("image size " + std::to_string(image.dim(1)) +
                          " not divisible by patch size " + std::to_string(patch_size));
    }
    const int n_d = proj_kernel.dim(0);
    // [n_d, S/P, S/P] -> [n_d, N_p] -> [N_p, n_d]
    Tensor grid = g.conv2d(image, proj_kernel, patch_size);
    const int side = grid.dim(1);
    Tensor tokens = g.transpose(g.reshape(grid, {n_d, side * side}));
    return g.add_row_bias(tokens, proj_bias);
}

Tensor apply_embedding(Graph& g, const Tensor& tokens, const PipelineConfig& cfg,
                       const EmbeddingParams& emb) {
    const int np = cfg.tokens_per_frame();
    if (tokens.ndim() != 2 || tokens.dim(1) != cfg.embed_dim) {
        throw ConfigError("tokens must be [N," + std::to_string(cfg.embed_dim) + "], got " +
                          shape_str(tokens.shape()));
    }
    if (tokens.dim(0) != cfg.token_count()) {
        throw ConfigError("token count " + std::to_string(tokens.dim(0)) + " does not match mode (" +
                          std::to_string(cfg.token_count()) + ")");
    }
    if (cfg.embedding_mode == EmbeddingMode::channel_wise) {
        if (emb.temporal.shape() != Shape{cfg.window, cfg.embed_dim}) {
            throw ConfigError("temporal embedding must be [" + std::to_string(cfg.window) + "," +
                              std::to_string(cfg.embed_dim) + "], got " +
                              shape_str(emb.temporal.shape()));
        }
    }
    const bool needs_spatial =
        cfg.embedding_mode == EmbeddingMode::positional || cfg.token_mode == TokenMode::streamed;
    if (needs_spatial && emb.spatial.shape() != Shape{np, cfg.embed_dim}) {
        throw ConfigError("spatial embedding must be [" + std::to_string(np) + "," +
                          std::to_string(cfg.embed_dim) + "], got " + shape_str(emb.spatial.shape()));
    }

    if (cfg.token_mode == TokenMode::stacked) {
        if (cfg.embedding_mode == EmbeddingMode::channel_wise) {
            // Sum of the W temporal vectors as one row bias.
            Tensor ones = Tensor::full({1, cfg.window}, 1.0);
            Tensor bias = g.reshape(g.matmul(ones, emb.temporal), {cfg.embed_dim});
            return g.add_row_bias(tokens, bias);
        }
        return g.add(tokens, emb.spatial);
    }

    // streamed: one block of N_p tokens per frame
    std::vector<Tensor> blocks;
    blocks.reserve(static_cast<std::size_t>(cfg.window));
    Tensor ones = Tensor::full({np, 1}, 1.0);
    for (int w = 0; w < cfg.window; ++w) {
        Tensor block = emb.spatial;
        if (cfg.embedding_mode == EmbeddingMode::channel_wise) {
            Tensor ew = g.slice_rows(emb.temporal, w, w + 1); // [1, n_d]
            block = g.add(emb.spatial, g.matmul(ones, ew));
        }
        blocks.push_back(block);
    }
    Tensor table = g.concat_rows(blocks); // [W*N_p, n_d]
    return g.add(tokens, table);
}

std::pair<double, double> normalize_displacement(std::pair<double, double> d,
                                                 const DisplacementNorm& n,
                                                 ClampCounter* counter) {
    n.validate();
    auto one_axis = [&](double v, double lo, double hi) {
        double u = 2.0 * (v - lo) / (hi - lo) - 1.0;
        if (u < -1.0 || u > 1.0) {
            if (counter) {
                ++counter->clamped;
            }
            u = std::min(1.0, std::max(-1.0, u));
        }
        return u;
    };
    return {one_axis(d.first, n.min_x, n.max_x), one_axis(d.second, n.min_y, n.max_y)};
}

std::pair<double, double> denormalize_displacement(double u, double v,
                                                   const DisplacementNorm& n) {
    n.validate();
    if (u < -1.0 || u > 1.0 || v < -1.0 || v > 1.0) {
        throw ContractError("denormalize_displacement input outside [-1,1]");
    }
    const double dx = n.min_x + (u + 1.0) * 0.5 * (n.max_x - n.min_x);
    const double dy = n.min_y + (v + 1.0) * 0.5 * (n.max_y - n.min_y);
    return {dx, dy};
}

} // namespace stacktrack

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stacktrack/tensor.hpp"

namespace stacktrack {

enum class EmbeddingMode { channel_wise, positional };
enum class TokenMode { stacked, streamed };

std::string to_string(EmbeddingMode m);
std::string to_string(TokenMode m);
EmbeddingMode embedding_mode_from(const std::string& s);
TokenMode token_mode_from(const std::string& s);

// Geometry and token layout of the input stage.
struct PipelineConfig {
    int image_size = 64; // S, square
    int patch_size = 8;  // P
    int window = 5;      // W frames per inference
    int embed_dim = 64;  // n_d
    EmbeddingMode embedding_mode = EmbeddingMode::channel_wise;
    TokenMode token_mode = TokenMode::stacked;

    int grid_side() const { return image_size / patch_size; }
    int tokens_per_frame() const { return grid_side() * grid_side(); } // N_p
    // Encoder sequence length. Stacked mode keeps N_p tokens for every W;
    // streamed mode feeds one token stream per frame.
    int token_count() const {
        return token_mode == TokenMode::stacked ? tokens_per_frame()
                                                : window * tokens_per_frame();
    }
    void validate() const;
};

// W consecutive frames, each [3,S,S] with values in [0,1], oldest first.
struct FrameWindow {
    std::vector<Tensor> frames;
    std::pair<int, int> source_size = {0, 0}; // (height, width) px of the original
    int frame_index = 0;                      // index of the newest frame

    void validate(const PipelineConfig& cfg) const;
};

// Per-frame-step displacement bounds, as fractions of image extent.
// Defaults hold the bounds measured on the reference pedestrian dataset.
struct DisplacementNorm {
    double min_x = -0.0174;
    double max_x = 0.0057;
    double min_y = -0.0157;
    double max_y = 0.0166;

    void validate() const;
};

// Trainable embedding tables. `temporal` is [W, n_d], one vector per frame of
// the window; `spatial` is [N_p, n_d], one vector per patch position.
struct EmbeddingParams {
    Tensor temporal;
    Tensor spatial;
};

// Concatenate the window's frames along the channel axis, oldest first.
Tensor stack_window(const FrameWindow& w);

// Channels [3w, 3w+3) of a stacked tensor, i.e. frame w. Inverse of stacking.
Tensor frame_slice(const Tensor& stacked, int w);

// Split an image into non-overlapping P x P patches and project each one,
// realized as a convolution with kernel == stride == P. Returns [N_p, n_d]
// tokens in row-major patch order.
Tensor patchify_project(Graph& g, const Tensor& image, const Tensor& proj_kernel,
                        const Tensor& proj_bias, int patch_size);

// Add the configured embedding to a token sequence.
//  - stacked + channel_wise: every token carries all W frames, so the W
//    temporal vectors enter as one summed additive bias.
//  - streamed + channel_wise: tokens of frame w get temporal[w] plus the
//    spatial position vector of their patch.
//  - positional: spatial position vectors only.
Tensor apply_embedding(Graph& g, const Tensor& tokens, const PipelineConfig& cfg,
                       const EmbeddingParams& emb);

struct ClampCounter {
    std::int64_t clamped = 0;
};

// Affine map of a displacement onto [-1,1] per axis; out-of-range results are
// clamped and counted.
std::pair<double, double> normalize_displacement(std::pair<double, double> d,
                                                 const DisplacementNorm& n,
                                                 ClampCounter* counter = nullptr);

// Exact inverse of normalize_displacement on [-1,1]; throws outside it.
std::pair<double, double> denormalize_displacement(double u, double v,
                                                   const DisplacementNorm& n);

} // namespace stacktrack

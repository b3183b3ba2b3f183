#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "stacktrack/checkpoint.hpp"
#include "stacktrack/encoding.hpp"
#include "stacktrack/tensor.hpp"

namespace stacktrack {

struct ModelConfig {
    PipelineConfig pipeline;
    int layers = 2;     // encoder blocks
    int heads = 4;      // attention heads
    int mlp_ratio = 4;  // MLP hidden = mlp_ratio * embed_dim
    int grid_size = 16; // R, side of the output grids
    int head_hidden = 16;

    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

// Current-frame output grids. Codomains are fixed by the final activations:
// heatmap and dims through sigmoid, displacement through tanh.
struct ModelOutput {
    Tensor heatmap; // [1,R,R] in (0,1)
    Tensor dims;    // [2,R,R] in (0,1), (w,h) as image fractions
    Tensor disp;    // [2,R,R] in (-1,1), normalized (dx,dy)
};

enum class HeadKind { heatmap, dims, disp };
std::string to_string(HeadKind k);

struct Parameter {
    std::string name;
    Tensor value;
};

// Encoder-only transformer over patch tokens, a two-stage map projection, and
// three structurally identical output heads with separate weights.
class TrackModel {
public:
    TrackModel(ModelConfig cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }

    ModelOutput forward(Graph& g, const FrameWindow& w) const;

    // Stages, exposed separately for tests and cost accounting.
    Tensor tokens_for(Graph& g, const FrameWindow& w) const;
    Tensor encode(Graph& g, const Tensor& tokens) const;
    Tensor project_maps(Graph& g, const Tensor& features) const;
    Tensor run_head(Graph& g, HeadKind kind, const Tensor& maps) const;

    std::vector<Parameter>& parameters() { return params_; }
    const std::vector<Parameter>& parameters() const { return params_; }
    Tensor param(const std::string& name) const;
    // Swap a parameter's storage (same shape); used by gradient checks.
    void replace_param(const std::string& name, Tensor t);

    std::size_t parameter_count() const;
    // Closed-form count from the configuration alone.
    static std::size_t expected_parameter_count(const ModelConfig& cfg);

    Checkpoint to_checkpoint() const;
    static TrackModel from_checkpoint(const Checkpoint& ckpt);
    void load_weights(const Checkpoint& ckpt);

private:
    ModelConfig cfg_;
    std::vector<Parameter> params_;
    std::unordered_map<std::string, std::size_t> index_;

    void add_param(const std::string& name, Tensor t);
    Tensor p(const std::string& name) const;
    Tensor head_stack(Graph& g, const std::string& prefix, const Tensor& maps,
                      PointwiseOp final_act) const;
};

} // namespace stacktrack

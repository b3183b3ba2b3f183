#include "stacktrack/model.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace stacktrack {

using nlohmann::json;

void ModelConfig::validate() const {
    pipeline.validate();
    if (layers < 0) {
        throw ConfigError("layers must be >= 0");
    }
    if (heads < 1 || pipeline.embed_dim % heads != 0) {
        throw ConfigError("embed_dim " + std::to_string(pipeline.embed_dim) +
                          " must be divisible by heads " + std::to_string(heads));
    }
    if (mlp_ratio < 1) {
        throw ConfigError("mlp_ratio must be >= 1");
    }
    if (grid_size < 2) {
        throw ConfigError("grid_size must be >= 2");
    }
    if (head_hidden < 1) {
        throw ConfigError("head_hidden must be >= 1");
    }
}

std::string ModelConfig::to_json() const {
    json j;
    j["image_size"] = pipeline.image_size;
    j["patch_size"] = pipeline.patch_size;
    j["window"] = pipeline.window;
    j["embed_dim"] = pipeline.embed_dim;
    j["embedding_mode"] = to_string(pipeline.embedding_mode);
    j["token_mode"] = to_string(pipeline.token_mode);
    j["layers"] = layers;
    j["heads"] = heads;
    j["mlp_ratio"] = mlp_ratio;
    j["grid_size"] = grid_size;
    j["head_hidden"] = head_hidden;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad model config json: ") + e.what());
    }
    ModelConfig cfg;
    try {
        cfg.pipeline.image_size = j.at("image_size").get<int>();
        cfg.pipeline.patch_size = j.at("patch_size").get<int>();
        cfg.pipeline.window = j.at("window").get<int>();
        cfg.pipeline.embed_dim = j.at("embed_dim").get<int>();
        cfg.pipeline.embedding_mode = embedding_mode_from(j.at("embedding_mode").get<std::string>());
        cfg.pipeline.token_mode = token_mode_from(j.at("token_mode").get<std::string>());
        cfg.layers = j.at("layers").get<int>();
        cfg.heads = j.at("heads").get<int>();
        cfg.mlp_ratio = j.at("mlp_ratio").get<int>();
        cfg.grid_size = j.at("grid_size").get<int>();
        cfg.head_hidden = j.at("head_hidden").get<int>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("model config missing field: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string to_string(HeadKind k) {
    switch (k) {
    case HeadKind::heatmap:
        return "heatmap";
    case HeadKind::dims:
        return "dims";
    case HeadKind::disp:
        return "disp";
    }
    return "?";
}

namespace {
constexpr double kInitStd = 0.02;
}

void TrackModel::add_param(const std::string& name, Tensor t) {
    t.set_requires_grad(true);
    index_[name] = params_.size();
    params_.push_back(Parameter{name, std::move(t)});
}

Tensor TrackModel::p(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw ContractError("no parameter named '" + name + "'");
    }
    return params_[it->second].value;
}

Tensor TrackModel::param(const std::string& name) const { return p(name); }

void TrackModel::replace_param(const std::string& name, Tensor t) {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw ContractError("no parameter named '" + name + "'");
    }
    if (t.shape() != params_[it->second].value.shape()) {
        throw ShapeError("replacement for '" + name + "' has shape " + shape_str(t.shape()) +
                         ", expected " + shape_str(params_[it->second].value.shape()));
    }
    t.set_requires_grad(true);
    params_[it->second].value = std::move(t);
}

TrackModel::TrackModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    const PipelineConfig& pc = cfg_.pipeline;
    const int n_d = pc.embed_dim;
    const int P = pc.patch_size;
    const int np = pc.tokens_per_frame();
    const int R = cfg_.grid_size;
    const int W = pc.window;
    const int hid = cfg_.head_hidden;
    const int mlp = cfg_.mlp_ratio * n_d;

    const int in_ch = pc.token_mode == TokenMode::stacked ? 3 * W : 3;
    add_param("patch.kernel", Tensor::trunc_normal({n_d, in_ch, P, P}, rng, kInitStd));
    add_param("patch.bias", Tensor::zeros({n_d}));

    if (pc.embedding_mode == EmbeddingMode::channel_wise) {
        add_param("embed.temporal", Tensor::trunc_normal({W, n_d}, rng, kInitStd));
    }
    if (pc.embedding_mode == EmbeddingMode::positional || pc.token_mode == TokenMode::streamed) {
        add_param("embed.spatial", Tensor::trunc_normal({np, n_d}, rng, kInitStd));
    }

    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string pre = "enc." + std::to_string(l) + ".";
        add_param(pre + "ln1.gain", Tensor::full({n_d}, 1.0));
        add_param(pre + "ln1.bias", Tensor::zeros({n_d}));
        for (const char* w : {"wq", "wk", "wv", "wo"}) {
            add_param(pre + "attn." + w, Tensor::trunc_normal({n_d, n_d}, rng, kInitStd));
        }
        for (const char* b : {"bq", "bk", "bv", "bo"}) {
            add_param(pre + "attn." + b, Tensor::zeros({n_d}));
        }
        add_param(pre + "ln2.gain", Tensor::full({n_d}, 1.0));
        add_param(pre + "ln2.bias", Tensor::zeros({n_d}));
        add_param(pre + "mlp.w1", Tensor::trunc_normal({n_d, mlp}, rng, kInitStd));
        add_param(pre + "mlp.b1", Tensor::zeros({mlp}));
        add_param(pre + "mlp.w2", Tensor::trunc_normal({mlp, n_d}, rng, kInitStd));
        add_param(pre + "mlp.b2", Tensor::zeros({n_d}));
    }

    const int n_tokens = pc.token_count();
    add_param("proj.feat.w", Tensor::trunc_normal({n_d, R}, rng, kInitStd));
    add_param("proj.feat.b", Tensor::zeros({R}));
    add_param("proj.token.w", Tensor::trunc_normal({n_tokens, W * R}, rng, kInitStd));
    add_param("proj.token.b", Tensor::zeros({W * R}));

    for (HeadKind kind : {HeadKind::heatmap, HeadKind::dims, HeadKind::disp}) {
        const std::string pre = "head." + to_string(kind) + ".";
        const int out = kind == HeadKind::heatmap ? 1 : 2;
        add_param(pre + "fc1.w", Tensor::trunc_normal({W, hid}, rng, kInitStd));
        add_param(pre + "fc1.b", Tensor::zeros({hid}));
        add_param(pre + "fc2.w", Tensor::trunc_normal({hid, hid}, rng, kInitStd));
        add_param(pre + "fc2.b", Tensor::zeros({hid}));
        add_param(pre + "conv1.k", Tensor::trunc_normal({hid, hid, 3, 3}, rng, kInitStd));
        add_param(pre + "conv1.b", Tensor::zeros({hid}));
        // zero final layer: heads start from the neutral 0.5 / 0.0 outputs
        add_param(pre + "conv2.k", Tensor::zeros({out, hid, 3, 3}));
        add_param(pre + "conv2.b", Tensor::zeros({out}));
    }
}

Tensor TrackModel::tokens_for(Graph& g, const FrameWindow& w) const {
    const PipelineConfig& pc = cfg_.pipeline;
    w.validate(pc);
    EmbeddingParams emb;
    if (pc.embedding_mode == EmbeddingMode::channel_wise) {
        emb.temporal = p("embed.temporal");
    }
    if (pc.embedding_mode == EmbeddingMode::positional || pc.token_mode == TokenMode::streamed) {
        emb.spatial = p("embed.spatial");
    }
    Tensor tokens;
    if (pc.token_mode == TokenMode::stacked) {
        tokens = patchify_project(g, stack_window(w), p("patch.kernel"), p("patch.bias"),
                                  pc.patch_size);
    } else {
        std::vector<Tensor> streams;
        streams.reserve(w.frames.size());
        for (const Tensor& frame : w.frames) {
            streams.push_back(
                patchify_project(g, frame, p("patch.kernel"), p("patch.bias"), pc.patch_size));
        }
        tokens = g.concat_rows(streams);
    }
    return apply_embedding(g, tokens, pc, emb);
}

Tensor TrackModel::encode(Graph& g, const Tensor& tokens) const {
    const int n_d = cfg_.pipeline.embed_dim;
    if (tokens.ndim() != 2 || tokens.dim(1) != n_d) {
        throw ShapeError("encode expects [N," + std::to_string(n_d) + "] tokens");
    }
    const int dh = n_d / cfg_.heads;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor x = tokens;
    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string pre = "enc." + std::to_string(l) + ".";
        Tensor h = g.layer_norm(x, p(pre + "ln1.gain"), p(pre + "ln1.bias"));
        Tensor q = g.add_row_bias(g.matmul(h, p(pre + "attn.wq")), p(pre + "attn.bq"));
        Tensor k = g.add_row_bias(g.matmul(h, p(pre + "attn.wk")), p(pre + "attn.bk"));
        Tensor v = g.add_row_bias(g.matmul(h, p(pre + "attn.wv")), p(pre + "attn.bv"));
        std::vector<Tensor> head_outs;
        head_outs.reserve(static_cast<std::size_t>(cfg_.heads));
        for (int i = 0; i < cfg_.heads; ++i) {
            Tensor qi = g.slice_cols(q, i * dh, (i + 1) * dh);
            Tensor ki = g.slice_cols(k, i * dh, (i + 1) * dh);
            Tensor vi = g.slice_cols(v, i * dh, (i + 1) * dh);
            Tensor att = g.softmax_lastdim(g.scale(g.matmul(qi, g.transpose(ki)), att_scale));
            head_outs.push_back(g.matmul(att, vi));
        }
        Tensor attn_out = g.add_row_bias(g.matmul(g.concat_cols(head_outs), p(pre + "attn.wo")),
                                         p(pre + "attn.bo"));
        x = g.add(x, attn_out);
        Tensor h2 = g.layer_norm(x, p(pre + "ln2.gain"), p(pre + "ln2.bias"));
        Tensor m = g.relu(g.add_row_bias(g.matmul(h2, p(pre + "mlp.w1")), p(pre + "mlp.b1")));
        Tensor mlp_out = g.add_row_bias(g.matmul(m, p(pre + "mlp.w2")), p(pre + "mlp.b2"));
        x = g.add(x, mlp_out);
    }
    return x;
}

Tensor TrackModel::project_maps(Graph& g, const Tensor& features) const {
    const PipelineConfig& pc = cfg_.pipeline;
    const int n_tokens = pc.token_count();
    const int R = cfg_.grid_size;
    const int W = pc.window;
    if (features.ndim() != 2 || features.dim(0) != n_tokens || features.dim(1) != pc.embed_dim) {
        throw ConfigError("project_maps expects features [" + std::to_string(n_tokens) + "," +
                          std::to_string(pc.embed_dim) + "], got " + shape_str(features.shape()));
    }
    // [N,n_d] -> [N,R] -> [R,N] -> [R,W*R] -> [W*R,R] -> [W,R,R]
    Tensor y = g.add_row_bias(g.matmul(features, p("proj.feat.w")), p("proj.feat.b"));
    Tensor z = g.add_row_bias(g.matmul(g.transpose(y), p("proj.token.w")), p("proj.token.b"));
    return g.reshape(g.transpose(z), {W, R, R});
}

Tensor TrackModel::head_stack(Graph& g, const std::string& prefix, const Tensor& maps,
                              PointwiseOp final_act) const {
    const int W = cfg_.pipeline.window;
    const int R = cfg_.grid_size;
    const int hid = cfg_.head_hidden;
    // two per-cell fully connected layers over the W map channels
    Tensor cells = g.transpose(g.reshape(maps, {W, R * R})); // [R*R, W]
    Tensor f1 = g.relu(g.add_row_bias(g.matmul(cells, p(prefix + "fc1.w")), p(prefix + "fc1.b")));
    Tensor f2 = g.relu(g.add_row_bias(g.matmul(f1, p(prefix + "fc2.w")), p(prefix + "fc2.b")));
    Tensor planes = g.reshape(g.transpose(f2), {hid, R, R});
    // two 3x3 same convolutions
    Tensor c1 = g.relu(g.add_channel_bias(g.conv2d(g.pad2d(planes, 1), p(prefix + "conv1.k"), 1),
                                          p(prefix + "conv1.b")));
    Tensor c2 = g.add_channel_bias(g.conv2d(g.pad2d(c1, 1), p(prefix + "conv2.k"), 1),
                                   p(prefix + "conv2.b"));
    return g.pointwise(final_act, c2);
}

Tensor TrackModel::run_head(Graph& g, HeadKind kind, const Tensor& maps) const {
    if (maps.ndim() != 3 || maps.dim(0) != cfg_.pipeline.window || maps.dim(1) != cfg_.grid_size ||
        maps.dim(2) != cfg_.grid_size) {
        throw ShapeError("run_head expects maps [W,R,R], got " + shape_str(maps.shape()));
    }
    const std::string pre = "head." + to_string(kind) + ".";
    switch (kind) {
    case HeadKind::heatmap:
        return head_stack(g, pre, maps, PointwiseOp::sigmoid);
    case HeadKind::dims:
        return head_stack(g, pre, maps, PointwiseOp::sigmoid);
    case HeadKind::disp:
        return head_stack(g, pre, maps, PointwiseOp::tanh);
    }
    throw ContractError("bad head kind");
}

ModelOutput TrackModel::forward(Graph& g, const FrameWindow& w) const {
    Tensor tokens = tokens_for(g, w);
    Tensor features = encode(g, tokens);
    Tensor maps = project_maps(g, features);
    ModelOutput out;
    out.heatmap = run_head(g, HeadKind::heatmap, maps);
    out.dims = run_head(g, HeadKind::dims, maps);
    out.disp = run_head(g, HeadKind::disp, maps);
    return out;
}

std::size_t TrackModel::parameter_count() const {
    std::size_t n = 0;
    for (const Parameter& pr : params_) {
        n += pr.value.numel();
    }
    return n;
}

std::size_t TrackModel::expected_parameter_count(const ModelConfig& cfg) {
    const PipelineConfig& pc = cfg.pipeline;
    const std::size_t n_d = static_cast<std::size_t>(pc.embed_dim);
    const std::size_t P = static_cast<std::size_t>(pc.patch_size);
    const std::size_t W = static_cast<std::size_t>(pc.window);
    const std::size_t np = static_cast<std::size_t>(pc.tokens_per_frame());
    const std::size_t R = static_cast<std::size_t>(cfg.grid_size);
    const std::size_t hid = static_cast<std::size_t>(cfg.head_hidden);
    const std::size_t mlp = static_cast<std::size_t>(cfg.mlp_ratio) * n_d;
    const std::size_t n_tokens = static_cast<std::size_t>(pc.token_count());

    const std::size_t in_ch = pc.token_mode == TokenMode::stacked ? 3 * W : 3;
    std::size_t total = n_d * in_ch * P * P + n_d; // patch projection
    if (pc.embedding_mode == EmbeddingMode::channel_wise) {
        total += W * n_d;
    }
    if (pc.embedding_mode == EmbeddingMode::positional || pc.token_mode == TokenMode::streamed) {
        total += np * n_d;
    }
    const std::size_t per_layer = 4 * n_d            // two layer norms
                                  + 4 * (n_d * n_d)  // q,k,v,o weights
                                  + 4 * n_d          // q,k,v,o biases
                                  + n_d * mlp + mlp + mlp * n_d + n_d;
    total += static_cast<std::size_t>(cfg.layers) * per_layer;
    total += n_d * R + R + n_tokens * W * R + W * R; // map projection
    for (int out : {1, 2, 2}) {
        total += W * hid + hid + hid * hid + hid + hid * hid * 9 + hid +
                 static_cast<std::size_t>(out) * hid * 9 + static_cast<std::size_t>(out);
    }
    return total;
}

Checkpoint TrackModel::to_checkpoint() const {
    Checkpoint c;
    c.meta = cfg_.to_json();
    for (const Parameter& pr : params_) {
        c.arrays.emplace_back(pr.name, pr.value);
    }
    return c;
}

TrackModel TrackModel::from_checkpoint(const Checkpoint& ckpt) {
    TrackModel model(ModelConfig::from_json(ckpt.meta), 0);
    model.load_weights(ckpt);
    return model;
}

void TrackModel::load_weights(const Checkpoint& ckpt) {
    for (Parameter& pr : params_) {
        const Tensor* src = ckpt.find(pr.name);
        if (!src) {
            throw ParseError("checkpoint is missing array '" + pr.name + "'");
        }
        if (src->shape() != pr.value.shape()) {
            throw ShapeError("checkpoint array '" + pr.name + "' has shape " +
                             shape_str(src->shape()) + ", model expects " +
                             shape_str(pr.value.shape()));
        }
        Tensor t = src->clone();
        t.set_requires_grad(true);
        pr.value = std::move(t);
    }
}

} // namespace stacktrack

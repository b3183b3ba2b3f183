#include "stacktrack/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace stacktrack {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(std::string("bad value for '") + key + "'");
        }
    }
}

void parse_pipeline(const json& j, PipelineConfig& p) {
    reject_unknown(j, {"image_size", "patch_size", "window", "embed_dim", "embedding_mode",
                       "token_mode"},
                   "pipeline");
    get_if(j, "image_size", p.image_size);
    get_if(j, "patch_size", p.patch_size);
    get_if(j, "window", p.window);
    get_if(j, "embed_dim", p.embed_dim);
    if (j.contains("embedding_mode")) {
        p.embedding_mode = embedding_mode_from(j.at("embedding_mode").get<std::string>());
    }
    if (j.contains("token_mode")) {
        p.token_mode = token_mode_from(j.at("token_mode").get<std::string>());
    }
}

void parse_model(const json& j, ModelConfig& m) {
    reject_unknown(j, {"layers", "heads", "mlp_ratio", "grid_size", "head_hidden"}, "model");
    get_if(j, "layers", m.layers);
    get_if(j, "heads", m.heads);
    get_if(j, "mlp_ratio", m.mlp_ratio);
    get_if(j, "grid_size", m.grid_size);
    get_if(j, "head_hidden", m.head_hidden);
}

void parse_loss(const json& j, LossConfig& l) {
    reject_unknown(j, {"gamma", "w1", "w2", "w3", "center_weight_alpha", "sigma_floor"}, "loss");
    get_if(j, "gamma", l.gamma);
    get_if(j, "w1", l.w1);
    get_if(j, "w2", l.w2);
    get_if(j, "w3", l.w3);
    get_if(j, "center_weight_alpha", l.center_weight_alpha);
    get_if(j, "sigma_floor", l.sigma_floor);
}

void parse_schedule(const json& j, TrainSchedule& s) {
    reject_unknown(j, {"epochs_per_phase", "patience", "learning_rate", "accumulation", "phased"},
                   "schedule");
    get_if(j, "epochs_per_phase", s.epochs_per_phase);
    get_if(j, "patience", s.patience);
    get_if(j, "learning_rate", s.learning_rate);
    get_if(j, "accumulation", s.accumulation);
    get_if(j, "phased", s.phased);
}

void parse_assoc(const json& j, AssocConfig& a) {
    reject_unknown(j, {"heat_threshold", "nms_iou", "match_min_iou", "max_lost", "cost_mode"},
                   "assoc");
    get_if(j, "heat_threshold", a.heat_threshold);
    get_if(j, "nms_iou", a.nms_iou);
    get_if(j, "match_min_iou", a.match_min_iou);
    get_if(j, "max_lost", a.max_lost);
    if (j.contains("cost_mode")) {
        const std::string mode = j.at("cost_mode").get<std::string>();
        if (mode == "inverse_iou") {
            a.cost_mode = CostMode::inverse_iou;
        } else if (mode == "distance") {
            a.cost_mode = CostMode::distance;
        } else {
            throw ConfigError("unknown cost_mode '" + mode + "' (inverse_iou|distance)");
        }
    }
}

void parse_disp_norm(const json& j, DisplacementNorm& n) {
    reject_unknown(j, {"min_x", "max_x", "min_y", "max_y"}, "disp_norm");
    get_if(j, "min_x", n.min_x);
    get_if(j, "max_x", n.max_x);
    get_if(j, "min_y", n.min_y);
    get_if(j, "max_y", n.max_y);
}

void parse_synth(const json& j, SynthConfig& s) {
    reject_unknown(j,
                   {"num_sequences", "frames_per_sequence", "min_objects", "max_objects",
                    "image_size", "min_speed_x", "max_speed_x", "min_speed_y", "max_speed_y",
                    "min_size", "max_size", "jitter", "occluder_events", "occluder_duration",
                    "seed"},
                   "synth");
    get_if(j, "num_sequences", s.num_sequences);
    get_if(j, "frames_per_sequence", s.frames_per_sequence);
    get_if(j, "min_objects", s.min_objects);
    get_if(j, "max_objects", s.max_objects);
    get_if(j, "image_size", s.image_size);
    get_if(j, "min_speed_x", s.min_speed_x);
    get_if(j, "max_speed_x", s.max_speed_x);
    get_if(j, "min_speed_y", s.min_speed_y);
    get_if(j, "max_speed_y", s.max_speed_y);
    get_if(j, "min_size", s.min_size);
    get_if(j, "max_size", s.max_size);
    get_if(j, "jitter", s.jitter);
    get_if(j, "occluder_events", s.occluder_events);
    get_if(j, "occluder_duration", s.occluder_duration);
    get_if(j, "seed", s.seed);
}

void parse_paths(const json& j, RunConfig& c) {
    reject_unknown(j, {"data_dir", "out_dir", "checkpoint"}, "paths");
    get_if(j, "data_dir", c.data_dir);
    get_if(j, "out_dir", c.out_dir);
    get_if(j, "checkpoint", c.checkpoint);
}

} // namespace

void RunConfig::validate() const {
    model.validate();
    loss.validate();
    schedule.validate();
    assoc.validate();
    disp_norm.validate();
    synth.validate();
}

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid json: ") + e.what());
    }
    reject_unknown(j, {"seed", "pipeline", "model", "loss", "schedule", "assoc", "disp_norm",
                       "synth", "paths"},
                   "config root");
    RunConfig cfg;
    get_if(j, "seed", cfg.seed);
    if (j.contains("pipeline")) {
        parse_pipeline(j.at("pipeline"), cfg.model.pipeline);
    }
    if (j.contains("model")) {
        parse_model(j.at("model"), cfg.model);
    }
    if (j.contains("loss")) {
        parse_loss(j.at("loss"), cfg.loss);
    }
    if (j.contains("schedule")) {
        parse_schedule(j.at("schedule"), cfg.schedule);
    }
    if (j.contains("assoc")) {
        parse_assoc(j.at("assoc"), cfg.assoc);
    }
    if (j.contains("disp_norm")) {
        parse_disp_norm(j.at("disp_norm"), cfg.disp_norm);
    }
    if (j.contains("synth")) {
        parse_synth(j.at("synth"), cfg.synth);
    }
    if (j.contains("paths")) {
        parse_paths(j.at("paths"), cfg);
    }
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        throw ConfigError("cannot open config '" + path + "'");
    }
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_run_config(ss.str());
}

std::string RunConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["pipeline"] = {{"image_size", model.pipeline.image_size},
                     {"patch_size", model.pipeline.patch_size},
                     {"window", model.pipeline.window},
                     {"embed_dim", model.pipeline.embed_dim},
                     {"embedding_mode", to_string(model.pipeline.embedding_mode)},
                     {"token_mode", to_string(model.pipeline.token_mode)}};
    j["model"] = {{"layers", model.layers},
                  {"heads", model.heads},
                  {"mlp_ratio", model.mlp_ratio},
                  {"grid_size", model.grid_size},
                  {"head_hidden", model.head_hidden}};
    j["loss"] = {{"gamma", loss.gamma},
                 {"w1", loss.w1},
                 {"w2", loss.w2},
                 {"w3", loss.w3},
                 {"center_weight_alpha", loss.center_weight_alpha},
                 {"sigma_floor", loss.sigma_floor}};
    j["schedule"] = {{"epochs_per_phase", schedule.epochs_per_phase},
                     {"patience", schedule.patience},
                     {"learning_rate", schedule.learning_rate},
                     {"accumulation", schedule.accumulation},
                     {"phased", schedule.phased}};
    j["assoc"] = {{"heat_threshold", assoc.heat_threshold},
                  {"nms_iou", assoc.nms_iou},
                  {"match_min_iou", assoc.match_min_iou},
                  {"max_lost", assoc.max_lost},
                  {"cost_mode", assoc.cost_mode == CostMode::inverse_iou ? "inverse_iou"
                                                                         : "distance"}};
    j["disp_norm"] = {{"min_x", disp_norm.min_x},
                      {"max_x", disp_norm.max_x},
                      {"min_y", disp_norm.min_y},
                      {"max_y", disp_norm.max_y}};
    j["synth"] = {{"num_sequences", synth.num_sequences},
                  {"frames_per_sequence", synth.frames_per_sequence},
                  {"min_objects", synth.min_objects},
                  {"max_objects", synth.max_objects},
                  {"image_size", synth.image_size},
                  {"min_speed_x", synth.min_speed_x},
                  {"max_speed_x", synth.max_speed_x},
                  {"min_speed_y", synth.min_speed_y},
                  {"max_speed_y", synth.max_speed_y},
                  {"min_size", synth.min_size},
                  {"max_size", synth.max_size},
                  {"jitter", synth.jitter},
                  {"occluder_events", synth.occluder_events},
                  {"occluder_duration", synth.occluder_duration},
                  {"seed", synth.seed}};
    j["paths"] = {{"data_dir", data_dir}, {"out_dir", out_dir}, {"checkpoint", checkpoint}};
    return j.dump(2);
}

} // namespace stacktrack

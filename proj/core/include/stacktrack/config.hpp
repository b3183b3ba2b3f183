#pragma once

#include <cstdint>
#include <string>

#include "stacktrack/losses.hpp"
#include "stacktrack/model.hpp"
#include "stacktrack/synth.hpp"
#include "stacktrack/tracking.hpp"
#include "stacktrack/trainer.hpp"

namespace stacktrack {

// Every tunable of the pipeline in one JSON file. Unknown keys are rejected;
// all fields have defaults. Schema in docs/config.md.
struct RunConfig {
    std::uint64_t seed = 7;
    ModelConfig model;          // includes the pipeline section
    LossConfig loss;
    TrainSchedule schedule;
    AssocConfig assoc;
    DisplacementNorm disp_norm;
    SynthConfig synth;
    std::string data_dir = "data";
    std::string out_dir = "out";
    std::string checkpoint;

    void validate() const;
    std::string to_json() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

} // namespace stacktrack

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stacktrack/metrics.hpp"
#include "stacktrack/tensor.hpp"

namespace stacktrack {

// Seeded generator of moving-rectangle sequences with full ground truth.
// Default speed ranges stay inside the displacement-normalization bounds even
// after bounces, so normalized displacements never clamp.
struct SynthConfig {
    int num_sequences = 20;
    int frames_per_sequence = 10;
    int min_objects = 2;
    int max_objects = 4;
    int image_size = 64;
    double min_speed_x = -0.005; // fraction of image per frame
    double max_speed_x = 0.005;
    double min_speed_y = -0.014;
    double max_speed_y = 0.014;
    double min_size = 0.18; // box side, fraction of image
    double max_size = 0.34;
    double jitter = 0.0004; // uniform per-step velocity noise
    int occluder_events = 1;
    int occluder_duration = 3;
    std::uint64_t seed = 7;

    void validate() const;
};

struct SynthSequence {
    std::string name;
    int image_size = 0;
    std::vector<Tensor> frames;              // [3,S,S], quantized to 1/255 steps
    std::vector<FrameAnnotations> gt;        // frames are 1-based
    std::vector<std::vector<double>> visibility; // visibility[t][k] for gt[t].items[k]
};

std::vector<SynthSequence> synth_generate(const SynthConfig& cfg);

// MOT17-style layout: <dir>/<name>/img1/000001.ppm..., gt/gt.txt, seqinfo.ini.
void write_sequence(const std::string& dir, const SynthSequence& seq);

} // namespace stacktrack

#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "stacktrack/model.hpp"
#include "stacktrack/tracking.hpp"

namespace stacktrack {

struct TrackTiming {
    double total_seconds = 0.0; // preprocessing + inference + post-processing + association
    long frame_count = 0;
    double fps = 0.0;
};

struct SequenceResult {
    std::vector<TrackRow> rows;
    TrackTiming timing;
};

using ModelFn = std::function<ModelOutput(Graph&, const FrameWindow&)>;

// Run detection + association over a whole sequence. Frames may arrive at any
// source resolution; each is resized once on arrival. The timer covers the
// full per-frame pipeline, and fps = frames / total time.
SequenceResult track_sequence(const std::vector<Tensor>& frames,
                              std::pair<int, int> source_size, const ModelFn& model_fn,
                              const PipelineConfig& pcfg, const AssocConfig& acfg,
                              const DisplacementNorm& norm);

} // namespace stacktrack

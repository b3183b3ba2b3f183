#include "stacktrack/pipeline.hpp"

#include <chrono>

#include "stacktrack/frames.hpp"
#include "stacktrack/metrics.hpp"
#include "stacktrack/trainer.hpp"

namespace stacktrack {

SequenceResult track_sequence(const std::vector<Tensor>& frames,
                              std::pair<int, int> source_size, const ModelFn& model_fn,
                              const PipelineConfig& pcfg, const AssocConfig& acfg,
                              const DisplacementNorm& norm) {
    pcfg.validate();
    acfg.validate();
    norm.validate();
    SequenceResult result;
    Tracker tracker(acfg);
    std::vector<Tensor> resized;
    resized.reserve(frames.size());

    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t t = 0; t < frames.size(); ++t) {
        resized.push_back(resize_bilinear(frames[t], pcfg.image_size, pcfg.image_size));
        FrameWindow window = make_window(resized, static_cast<int>(t), pcfg.window, source_size);

        Graph g;
        ModelOutput out = model_fn(g, window);

        std::vector<Detection> dets =
            nms(decode(extract_peaks(out.heatmap, acfg.heat_threshold), out.dims, out.disp, norm),
                acfg.nms_iou);
        // MOT frames are 1-based
        std::vector<TrackRow> rows = tracker.step(dets, static_cast<int>(t) + 1);
        result.rows.insert(result.rows.end(), rows.begin(), rows.end());
    }
    const auto t1 = std::chrono::steady_clock::now();

    result.timing.total_seconds = std::chrono::duration<double>(t1 - t0).count();
    result.timing.frame_count = static_cast<long>(frames.size());
    result.timing.fps = result.timing.frame_count > 0 && result.timing.total_seconds > 0.0
                            ? fps_value(result.timing.total_seconds, result.timing.frame_count)
                            : 0.0;
    return result;
}

} // namespace stacktrack

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stacktrack/encoding.hpp"
#include "stacktrack/geometry.hpp"
#include "stacktrack/model.hpp"

namespace stacktrack {

struct Detection {
    BBox box;
    double score = 0.0;
    std::pair<double, double> disp = {0.0, 0.0}; // previous -> current, image fractions
};

enum class TrackState { active, lost };

struct Track {
    int id = 0;
    BBox last_box;
    TrackState state = TrackState::active;
    int lost_age = 0;
    std::vector<std::pair<int, BBox>> history; // (frame, box) of matched frames
};

enum class CostMode { inverse_iou, distance };

struct AssocConfig {
    double heat_threshold = 0.4; // tau
    double nms_iou = 0.5;        // T
    double match_min_iou = 0.1;
    int max_lost = 10;
    CostMode cost_mode = CostMode::inverse_iou;

    void validate() const;
};

// Cells >= all 8 neighbours with value >= tau, as (row, col, score).
struct Peak {
    int row = 0;
    int col = 0;
    double score = 0.0;
};
std::vector<Peak> extract_peaks(const Tensor& heatmap, double tau);

// Read box dimensions and displacement at each peak cell; the box center is
// the cell center in image fractions.
std::vector<Detection> decode(const std::vector<Peak>& peaks, const Tensor& dims_map,
                              const Tensor& disp_map, const DisplacementNorm& norm);

// Greedy suppression: keep the highest-score box, drop boxes with IoU > T
// against it, repeat. Kept boxes come back in descending score; ties keep the
// earlier input index.
std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold);

// cost[i][j] = 1 - IoU(det i back-projected by its displacement, track j's
// last box); pairs under match_min_iou are forbidden (+inf).
std::vector<std::vector<double>> build_cost(const std::vector<Detection>& dets,
                                            const std::vector<Track>& tracks,
                                            const AssocConfig& cfg);

struct TrackRow {
    int frame = 0;
    int id = 0;
    BBox box;
    double score = 0.0;
};

// Identity maintenance over a sequence. Frames must be presented in order;
// lost tracks stay matchable until they outlive max_lost.
class Tracker {
public:
    explicit Tracker(AssocConfig cfg);

    std::vector<TrackRow> step(const std::vector<Detection>& dets, int frame_index);

    const std::vector<Track>& tracks() const { return tracks_; }

private:
    AssocConfig cfg_;
    std::vector<Track> tracks_;
    int next_id_ = 1;
    int last_frame_ = -1;
};

} // namespace stacktrack

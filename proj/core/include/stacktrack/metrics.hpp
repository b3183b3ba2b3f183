#pragma once

#include <map>
#include <string>
#include <vector>

#include "stacktrack/geometry.hpp"

namespace stacktrack {

enum class Role { ground_truth, prediction };

struct IdBox {
    int id = 0;
    BBox box;
};

struct FrameAnnotations {
    int frame = 0;
    std::vector<IdBox> items;
    Role role = Role::ground_truth;
};

struct MatchedPair {
    int gt_id = 0;
    int pred_id = 0;
    double overlap = 0.0;
};

// Bipartite match of one frame: pairs with IoU >= iou_min, maximizing match
// count first and total IoU second. Pairs matched in the previous frame that
// still clear the threshold are kept before the rest is re-optimized.
std::vector<MatchedPair> match_frame(const FrameAnnotations& gt, const FrameAnnotations& pred,
                                     const std::map<int, int>& prev_matches, double iou_min);

struct FrameDiag {
    int frame = 0;
    int gt_count = 0;
    int pred_count = 0;
    int match_count = 0;
    long fn = 0;
    long fp = 0;
    long idsw = 0;
    double iou_sum = 0.0;
    std::vector<MatchedPair> matches;
};

struct EvalReport {
    double mota = 0.0;
    double motp = 0.0;      // NaN when no matches exist
    double hota = 0.0;      // per-frame overlap score, in [0,1]
    double idf1 = 0.0;
    double fps = 0.0;       // 0 when no timing was supplied
    long ids = 0;
    long fn = 0;
    long fp = 0;
    long idtp = 0;
    long gt_total = 0;
    long pred_total = 0;
    std::vector<FrameDiag> frames;

    std::string table() const;
    std::string to_json() const;
};

// Scalar metric kernels.
double mota_value(long fn, long fp, long idsw, long gt_total); // throws on gt_total == 0
double motp_value(double distance_sum, long match_count);      // NaN on no matches
double fps_value(double total_seconds, long frame_count);

// Full evaluation over a sequence. Frames are evaluated over the contiguous
// index range covered by either input; frames where ground truth, predictions
// and matches are all empty score 1 in the per-frame overlap term.
EvalReport evaluate(const std::vector<FrameAnnotations>& gt,
                    const std::vector<FrameAnnotations>& pred, double iou_min = 0.5,
                    double total_seconds = 0.0);

} // namespace stacktrack

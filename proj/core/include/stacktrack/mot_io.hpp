#pragma once

#include <string>
#include <vector>

#include "stacktrack/metrics.hpp"
#include "stacktrack/tracking.hpp"

namespace stacktrack {

// One line of the challenge text format:
// frame,id,left,top,width,height,conf,class,visibility (pixel units).
struct MotRow {
    int frame = 0;
    int id = 0;
    double left = 0.0;
    double top = 0.0;
    double width = 0.0;
    double height = 0.0;
    double conf = 1.0;
    int class_id = -1;
    double visibility = -1.0;
};

std::vector<MotRow> parse_mot_rows(const std::string& text);

// Parse and group rows by frame, converting boxes to normalized center form
// against the given source size. Ground-truth role drops rows flagged with
// conf == 0 (the "ignore" convention) and requires positive box extents.
std::vector<FrameAnnotations> parse_mot(const std::string& text, int source_w, int source_h,
                                        Role role);

// Tracker output as result rows, sorted by (frame, id); conf carries the
// detection score, class and visibility are -1.
std::string write_results(const std::vector<TrackRow>& rows, int source_w, int source_h);

} // namespace stacktrack

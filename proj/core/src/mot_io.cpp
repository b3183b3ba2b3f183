#include "stacktrack/mot_io.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "stacktrack/errors.hpp"

namespace stacktrack {

namespace {

double parse_field(const std::string& field, int line_no, const char* what) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(field, &used);
    } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" + field + "'");
    }
    while (used < field.size() && std::isspace(static_cast<unsigned char>(field[used]))) {
        ++used;
    }
    if (used != field.size()) {
        throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" + field + "'");
    }
    return v;
}

} // namespace

std::vector<MotRow> parse_mot_rows(const std::string& text) {
    std::vector<MotRow> rows;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> fields;
        std::string field;
        std::istringstream ls(line);
        while (std::getline(ls, field, ',')) {
            fields.push_back(field);
        }
        if (fields.size() < 6 || fields.size() > 10) {
            throw ParseError("line " + std::to_string(line_no) + ": expected 6-10 fields, got " +
                             std::to_string(fields.size()));
        }
        MotRow r;
        r.frame = static_cast<int>(parse_field(fields[0], line_no, "frame"));
        r.id = static_cast<int>(parse_field(fields[1], line_no, "id"));
        r.left = parse_field(fields[2], line_no, "left");
        r.top = parse_field(fields[3], line_no, "top");
        r.width = parse_field(fields[4], line_no, "width");
        r.height = parse_field(fields[5], line_no, "height");
        if (fields.size() > 6) {
            r.conf = parse_field(fields[6], line_no, "conf");
        }
        if (fields.size() > 7) {
            r.class_id = static_cast<int>(parse_field(fields[7], line_no, "class"));
        }
        if (fields.size() > 8) {
            r.visibility = parse_field(fields[8], line_no, "visibility");
        }
        if (r.frame < 1) {
            throw ParseError("line " + std::to_string(line_no) + ": frame must be >= 1");
        }
        rows.push_back(r);
    }
    return rows;
}

std::vector<FrameAnnotations> parse_mot(const std::string& text, int source_w, int source_h,
                                        Role role) {
    if (source_w <= 0 || source_h <= 0) {
        throw ContractError("parse_mot needs a positive source size");
    }
    const std::vector<MotRow> rows = parse_mot_rows(text);
    std::map<int, FrameAnnotations> by_frame;
    std::map<int, std::set<int>> seen_ids;
    for (const MotRow& r : rows) {
        if (role == Role::ground_truth && r.conf == 0.0) {
            continue; // ignore-flagged annotation
        }
        if (role == Role::ground_truth && (r.width <= 0.0 || r.height <= 0.0)) {
            throw ParseError("ground truth box with non-positive extent in frame " +
                             std::to_string(r.frame));
        }
        if (!seen_ids[r.frame].insert(r.id).second) {
            throw ParseError("duplicate id " + std::to_string(r.id) + " in frame " +
                             std::to_string(r.frame));
        }
        FrameAnnotations& fa = by_frame[r.frame];
        fa.frame = r.frame;
        fa.role = role;
        IdBox ib;
        ib.id = r.id;
        ib.box.cx = (r.left + 0.5 * r.width) / source_w;
        ib.box.cy = (r.top + 0.5 * r.height) / source_h;
        ib.box.w = r.width / source_w;
        ib.box.h = r.height / source_h;
        fa.items.push_back(ib);
    }
    std::vector<FrameAnnotations> result;
    result.reserve(by_frame.size());
    for (auto& [frame, fa] : by_frame) {
        result.push_back(std::move(fa));
    }
    return result;
}

std::string write_results(const std::vector<TrackRow>& rows, int source_w, int source_h) {
    if (source_w <= 0 || source_h <= 0) {
        throw ContractError("write_results needs a positive source size");
    }
    std::vector<TrackRow> sorted = rows;
    std::sort(sorted.begin(), sorted.end(), [](const TrackRow& a, const TrackRow& b) {
        return a.frame != b.frame ? a.frame < b.frame : a.id < b.id;
    });
    std::string out;
    char buf[256];
    for (const TrackRow& r : sorted) {
        const double left = (r.box.cx - 0.5 * r.box.w) * source_w;
        const double top = (r.box.cy - 0.5 * r.box.h) * source_h;
        const double w = r.box.w * source_w;
        const double h = r.box.h * source_h;
        std::snprintf(buf, sizeof(buf), "%d,%d,%.6f,%.6f,%.6f,%.6f,%.6f,-1,-1\n", r.frame, r.id,
                      left, top, w, h, r.score);
        out += buf;
    }
    return out;
}

} // namespace stacktrack

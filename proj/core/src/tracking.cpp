#include "stacktrack/tracking.hpp"

#include <algorithm>
#include <limits>

#include "stacktrack/hungarian.hpp"

namespace stacktrack {

void AssocConfig::validate() const {
    auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
    if (!in_unit(heat_threshold) || !in_unit(nms_iou) || !in_unit(match_min_iou)) {
        throw ConfigError("heat_threshold, nms_iou and match_min_iou must lie in (0,1)");
    }
    if (max_lost < 0) {
        throw ConfigError("max_lost must be >= 0");
    }
    if (cost_mode == CostMode::distance) {
        throw ConfigError("cost_mode 'distance' is reserved and not implemented; use inverse_iou");
    }
}

std::vector<Peak> extract_peaks(const Tensor& heatmap, double tau) {
    if (heatmap.ndim() != 3 || heatmap.dim(0) != 1) {
        throw ShapeError("extract_peaks expects a heatmap [1,R,R]");
    }
    const int rows = heatmap.dim(1);
    const int cols = heatmap.dim(2);
    std::vector<Peak> peaks;
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            const double v = heatmap.at({0, i, j});
            if (v < tau) {
                continue;
            }
            bool is_max = true;
            for (int di = -1; di <= 1 && is_max; ++di) {
                for (int dj = -1; dj <= 1; ++dj) {
                    if (di == 0 && dj == 0) {
                        continue;
                    }
                    const int ni = i + di, nj = j + dj;
                    if (ni < 0 || ni >= rows || nj < 0 || nj >= cols) {
                        continue;
                    }
                    if (heatmap.at({0, ni, nj}) > v) {
                        is_max = false;
                        break;
                    }
                }
            }
            if (is_max) {
                peaks.push_back(Peak{i, j, v});
            }
        }
    }
    return peaks;
}

std::vector<Detection> decode(const std::vector<Peak>& peaks, const Tensor& dims_map,
                              const Tensor& disp_map, const DisplacementNorm& norm) {
    if (dims_map.ndim() != 3 || dims_map.dim(0) != 2 || disp_map.shape() != dims_map.shape()) {
        throw ShapeError("decode expects dims and disp maps of shape [2,R,R]");
    }
    const int R = dims_map.dim(1);
    std::vector<Detection> dets;
    dets.reserve(peaks.size());
    for (const Peak& pk : peaks) {
        Detection d;
        d.box.cx = (pk.col + 0.5) / R;
        d.box.cy = (pk.row + 0.5) / R;
        d.box.w = dims_map.at({0, pk.row, pk.col});
        d.box.h = dims_map.at({1, pk.row, pk.col});
        d.score = pk.score;
        d.disp = denormalize_displacement(disp_map.at({0, pk.row, pk.col}),
                                          disp_map.at({1, pk.row, pk.col}), norm);
        dets.push_back(d);
    }
    return dets;
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold) {
    std::vector<std::size_t> order(dets.size());
    for (std::size_t i = 0; i < dets.size(); ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dets[a].score > dets[b].score;
    });
    std::vector<char> removed(dets.size(), 0);
    std::vector<Detection> kept;
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
        const std::size_t i = order[oi];
        if (removed[i]) {
            continue;
        }
        kept.push_back(dets[i]);
        for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
            const std::size_t j = order[oj];
            if (!removed[j] && iou(dets[i].box, dets[j].box) > iou_threshold) {
                removed[j] = 1;
            }
        }
    }
    return kept;
}

std::vector<std::vector<double>> build_cost(const std::vector<Detection>& dets,
                                            const std::vector<Track>& tracks,
                                            const AssocConfig& cfg) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> cost(dets.size(), std::vector<double>(tracks.size(), inf));
    for (std::size_t i = 0; i < dets.size(); ++i) {
        // shift back to where the box sat in the previous frame
        const BBox back = dets[i].box.shifted(-dets[i].disp.first, -dets[i].disp.second);
        for (std::size_t j = 0; j < tracks.size(); ++j) {
            const double overlap = iou(back, tracks[j].last_box);
            if (overlap >= cfg.match_min_iou) {
                cost[i][j] = 1.0 - overlap;
            }
        }
    }
    return cost;
}

Tracker::Tracker(AssocConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::vector<TrackRow> Tracker::step(const std::vector<Detection>& dets, int frame_index) {
    if (frame_index <= last_frame_) {
        throw ContractError("frames must be presented in increasing order (got " +
                            std::to_string(frame_index) + " after " + std::to_string(last_frame_) +
                            ")");
    }
    last_frame_ = frame_index;

    Assignment assignment;
    if (!dets.empty() && !tracks_.empty()) {
        assignment = hungarian(build_cost(dets, tracks_, cfg_));
    } else {
        assignment.row_to_col.assign(dets.size(), -1);
    }

    std::vector<char> track_matched(tracks_.size(), 0);
    std::vector<TrackRow> rows;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        const int j = assignment.row_to_col[i];
        if (j >= 0) {
            Track& tr = tracks_[static_cast<std::size_t>(j)];
            tr.last_box = dets[i].box;
            tr.state = TrackState::active;
            tr.lost_age = 0;
            tr.history.emplace_back(frame_index, dets[i].box);
            track_matched[static_cast<std::size_t>(j)] = 1;
            rows.push_back(TrackRow{frame_index, tr.id, dets[i].box, dets[i].score});
        }
    }
    // unmatched tracks age out
    std::vector<Track> survivors;
    survivors.reserve(tracks_.size());
    for (std::size_t j = 0; j < tracks_.size(); ++j) {
        Track& tr = tracks_[j];
        if (!track_matched[j]) {
            tr.state = TrackState::lost;
            ++tr.lost_age;
            if (tr.lost_age > cfg_.max_lost) {
                continue; // terminated
            }
        }
        survivors.push_back(std::move(tr));
    }
    tracks_ = std::move(survivors);
    // unmatched detections open new tracks
    for (std::size_t i = 0; i < dets.size(); ++i) {
        if (assignment.row_to_col[i] < 0) {
            Track tr;
            tr.id = next_id_++;
            tr.last_box = dets[i].box;
            tr.state = TrackState::active;
            tr.history.emplace_back(frame_index, dets[i].box);
            tracks_.push_back(std::move(tr));
            rows.push_back(TrackRow{frame_index, tracks_.back().id, dets[i].box, dets[i].score});
        }
    }
    std::sort(rows.begin(), rows.end(),
              [](const TrackRow& a, const TrackRow& b) { return a.id < b.id; });
    return rows;
}

} // namespace stacktrack

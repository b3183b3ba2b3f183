// Brute-force reference implementations used to cross-check the library.
// Everything here is deliberately independent of the implementation paths it
// verifies: geometry is recomputed from corners, assignments are found by
// exhaustive enumeration, and metrics are recounted directly from their
// definitions.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "stacktrack/metrics.hpp"
#include "stacktrack/tracking.hpp"

namespace oracles {

constexpr double kBig = 1e12; // stand-in for a forbidden assignment

inline double box_iou(const stacktrack::BBox& a, const stacktrack::BBox& b) {
    const double ax0 = a.cx - a.w / 2, ax1 = a.cx + a.w / 2;
    const double ay0 = a.cy - a.h / 2, ay1 = a.cy + a.h / 2;
    const double bx0 = b.cx - b.w / 2, bx1 = b.cx + b.w / 2;
    const double by0 = b.cy - b.h / 2, by1 = b.cy + b.h / 2;
    const double iw = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
    const double ih = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
    const double inter = iw * ih;
    const double uni = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

struct ExhaustiveAssignment {
    std::vector<int> row_to_col; // -1 = unassigned
    double kept_cost = 0.0;      // total over feasible assigned pairs
};

// Minimum-total-cost assignment by trying every permutation of the
// square-padded matrix; +inf entries become kBig so that using fewer
// forbidden pairs always wins. Feasible only pairs contribute to kept_cost.
inline ExhaustiveAssignment exhaustive_assignment(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    const int m = n > 0 ? static_cast<int>(cost[0].size()) : 0;
    ExhaustiveAssignment best;
    best.row_to_col.assign(static_cast<std::size_t>(n), -1);
    if (n == 0 || m == 0) {
        return best;
    }
    const int k = std::max(n, m);
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    double best_total = std::numeric_limits<double>::infinity();
    std::vector<int> best_perm;
    do {
        double total = 0.0;
        for (int i = 0; i < k; ++i) {
            const int j = perm[static_cast<std::size_t>(i)];
            if (i < n && j < m) {
                const double c = cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                total += std::isinf(c) ? kBig : c;
            }
        }
        if (total < best_total) {
            best_total = total;
            best_perm = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    for (int i = 0; i < n; ++i) {
        const int j = best_perm[static_cast<std::size_t>(i)];
        if (j < m && !std::isinf(cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)])) {
            best.row_to_col[static_cast<std::size_t>(i)] = j;
            best.kept_cost += cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
    }
    return best;
}

// Independent greedy suppression written against the textbook description:
// repeatedly take the highest-score remaining box and erase overlapping ones.
inline std::vector<stacktrack::Detection> brute_force_nms(
    std::vector<stacktrack::Detection> pool, double threshold) {
    // stable tie-break on the original index
    std::vector<std::size_t> tag(pool.size());
    std::iota(tag.begin(), tag.end(), std::size_t{0});
    std::vector<stacktrack::Detection> kept;
    while (!pool.empty()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < pool.size(); ++i) {
            if (pool[i].score > pool[best].score ||
                (pool[i].score == pool[best].score && tag[i] < tag[best])) {
                best = i;
            }
        }
        const stacktrack::Detection chosen = pool[best];
        kept.push_back(chosen);
        std::vector<stacktrack::Detection> next;
        std::vector<std::size_t> next_tag;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (i == best) {
                continue;
            }
            if (box_iou(chosen.box, pool[i].box) <= threshold) {
                next.push_back(pool[i]);
                next_tag.push_back(tag[i]);
            }
        }
        pool = std::move(next);
        tag = std::move(next_tag);
    }
    return kept;
}

// ------------------------------------------------------------------ metrics

struct OracleFrame {
    std::vector<stacktrack::IdBox> gt;
    std::vector<stacktrack::IdBox> pred;
};

struct OracleMatchState {
    int count = 0;
    double iou_sum = -1.0;
    std::vector<std::pair<int, int>> pairs; // (gt index, pred index)
};

namespace detail {

inline void match_rec(const OracleFrame& f, const std::vector<char>& pred_used, std::size_t gi,
                      std::vector<std::pair<int, int>>& current, double iou_sum, double iou_min,
                      OracleMatchState& best) {
    if (gi == f.gt.size()) {
        const int count = static_cast<int>(current.size());
        if (count > best.count || (count == best.count && iou_sum > best.iou_sum)) {
            best.count = count;
            best.iou_sum = iou_sum;
            best.pairs = current;
        }
        return;
    }
    // leave this ground truth unmatched
    match_rec(f, pred_used, gi + 1, current, iou_sum, iou_min, best);
    for (std::size_t pj = 0; pj < f.pred.size(); ++pj) {
        if (pred_used[pj]) {
            continue;
        }
        const double overlap = box_iou(f.gt[gi].box, f.pred[pj].box);
        if (overlap < iou_min) {
            continue;
        }
        std::vector<char> used = pred_used;
        used[pj] = 1;
        current.emplace_back(static_cast<int>(gi), static_cast<int>(pj));
        match_rec(f, used, gi + 1, current, iou_sum + overlap, iou_min, best);
        current.pop_back();
    }
}

} // namespace detail

// Exhaustive per-frame matching with the continuity rule: pairs matched in
// the previous frame keep their match when still above the threshold, the
// remainder maximizes match count and then total IoU.
inline std::vector<std::pair<int, int>> oracle_match_frame(const OracleFrame& f,
                                                           const std::map<int, int>& prev,
                                                           double iou_min) {
    std::vector<std::pair<int, int>> result; // (gt id, pred id)
    std::vector<char> gt_used(f.gt.size(), 0), pred_used(f.pred.size(), 0);
    for (std::size_t gi = 0; gi < f.gt.size(); ++gi) {
        auto it = prev.find(f.gt[gi].id);
        if (it == prev.end()) {
            continue;
        }
        for (std::size_t pj = 0; pj < f.pred.size(); ++pj) {
            if (pred_used[pj] || f.pred[pj].id != it->second) {
                continue;
            }
            if (box_iou(f.gt[gi].box, f.pred[pj].box) >= iou_min) {
                result.emplace_back(f.gt[gi].id, f.pred[pj].id);
                gt_used[gi] = 1;
                pred_used[pj] = 1;
            }
            break;
        }
    }
    OracleFrame rest;
    std::vector<int> gt_map, pred_map;
    for (std::size_t gi = 0; gi < f.gt.size(); ++gi) {
        if (!gt_used[gi]) {
            rest.gt.push_back(f.gt[gi]);
            gt_map.push_back(static_cast<int>(gi));
        }
    }
    for (std::size_t pj = 0; pj < f.pred.size(); ++pj) {
        if (!pred_used[pj]) {
            rest.pred.push_back(f.pred[pj]);
            pred_map.push_back(static_cast<int>(pj));
        }
    }
    OracleMatchState best;
    std::vector<std::pair<int, int>> current;
    std::vector<char> used(rest.pred.size(), 0);
    detail::match_rec(rest, used, 0, current, 0.0, iou_min, best);
    for (const auto& [gi, pj] : best.pairs) {
        result.emplace_back(rest.gt[static_cast<std::size_t>(gi)].id,
                            rest.pred[static_cast<std::size_t>(pj)].id);
    }
    return result;
}

struct OracleMetrics {
    double mota = 0.0;
    double motp = 0.0;
    double hota = 0.0;
    double idf1 = 0.0;
    long ids = 0;
    long fn = 0;
    long fp = 0;
};

// Recount every metric from its definition over frames 1..T.
inline OracleMetrics oracle_metrics(const std::vector<OracleFrame>& frames, double iou_min) {
    OracleMetrics out;
    std::map<int, int> prev;
    std::map<int, int> last_match;
    long gt_total = 0, pred_total = 0, match_total = 0;
    double iou_total = 0.0, hota_sum = 0.0;

    for (const OracleFrame& f : frames) {
        const auto matched = oracle_match_frame(f, prev, iou_min);
        gt_total += static_cast<long>(f.gt.size());
        pred_total += static_cast<long>(f.pred.size());
        match_total += static_cast<long>(matched.size());
        out.fn += static_cast<long>(f.gt.size()) - static_cast<long>(matched.size());
        out.fp += static_cast<long>(f.pred.size()) - static_cast<long>(matched.size());

        double frame_iou = 0.0;
        prev.clear();
        for (const auto& [g, p] : matched) {
            const stacktrack::BBox* gb = nullptr;
            const stacktrack::BBox* pb = nullptr;
            for (const auto& ib : f.gt) {
                if (ib.id == g) {
                    gb = &ib.box;
                }
            }
            for (const auto& ib : f.pred) {
                if (ib.id == p) {
                    pb = &ib.box;
                }
            }
            frame_iou += box_iou(*gb, *pb);
            auto it = last_match.find(g);
            if (it != last_match.end() && it->second != p) {
                ++out.ids;
            }
            last_match[g] = p;
            prev[g] = p;
        }
        iou_total += frame_iou;

        if (f.gt.empty() && f.pred.empty()) {
            hota_sum += 1.0;
        } else if (!matched.empty()) {
            const double det = frame_iou / static_cast<double>(matched.size());
            const double assoc =
                static_cast<double>(matched.size()) /
                static_cast<double>(f.gt.size() + f.pred.size() - matched.size());
            hota_sum += det * assoc;
        }
    }

    out.mota = 1.0 - static_cast<double>(out.fn + out.fp + out.ids) / static_cast<double>(gt_total);
    out.motp = match_total > 0
                   ? (static_cast<double>(match_total) - iou_total) / static_cast<double>(match_total)
                   : std::numeric_limits<double>::quiet_NaN();
    out.hota = hota_sum / static_cast<double>(frames.size());

    // IDF1 by exhaustive injective identity mapping maximizing overlap frames
    std::map<std::pair<int, int>, long> overlap;
    std::set<int> gt_ids, pred_ids;
    for (const OracleFrame& f : frames) {
        for (const auto& gi : f.gt) {
            gt_ids.insert(gi.id);
            for (const auto& pj : f.pred) {
                if (box_iou(gi.box, pj.box) >= iou_min) {
                    ++overlap[{gi.id, pj.id}];
                }
            }
        }
        for (const auto& pj : f.pred) {
            pred_ids.insert(pj.id);
        }
    }
    std::vector<int> gvec(gt_ids.begin(), gt_ids.end());
    std::vector<int> pvec(pred_ids.begin(), pred_ids.end());
    long best_idtp = 0;
    std::vector<char> used(pvec.size(), 0);
    std::function<void(std::size_t, long)> rec = [&](std::size_t gi, long acc) {
        if (gi == gvec.size()) {
            best_idtp = std::max(best_idtp, acc);
            return;
        }
        rec(gi + 1, acc); // gt id left unpaired
        for (std::size_t pj = 0; pj < pvec.size(); ++pj) {
            if (used[pj]) {
                continue;
            }
            auto it = overlap.find({gvec[gi], pvec[pj]});
            const long c = it == overlap.end() ? 0 : it->second;
            used[pj] = 1;
            rec(gi + 1, acc + c);
            used[pj] = 0;
        }
    };
    rec(0, 0);
    const long denom = gt_total + pred_total;
    out.idf1 = denom > 0 ? 2.0 * static_cast<double>(best_idtp) / static_cast<double>(denom) : 0.0;
    return out;
}

} // namespace oracles

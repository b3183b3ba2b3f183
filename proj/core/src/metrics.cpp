#include "stacktrack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stacktrack/errors.hpp"
#include "stacktrack/hungarian.hpp"

namespace stacktrack {

std::vector<MatchedPair> match_frame(const FrameAnnotations& gt, const FrameAnnotations& pred,
                                     const std::map<int, int>& prev_matches, double iou_min) {
    if (gt.frame != pred.frame) {
        throw ContractError("match_frame got different frame indices");
    }
    std::vector<MatchedPair> result;
    std::vector<char> gt_used(gt.items.size(), 0);
    std::vector<char> pred_used(pred.items.size(), 0);

    // continuity: keep last frame's pairs that still overlap enough
    for (std::size_t i = 0; i < gt.items.size(); ++i) {
        auto it = prev_matches.find(gt.items[i].id);
        if (it == prev_matches.end()) {
            continue;
        }
        for (std::size_t j = 0; j < pred.items.size(); ++j) {
            if (pred_used[j] || pred.items[j].id != it->second) {
                continue;
            }
            const double overlap = iou(gt.items[i].box, pred.items[j].box);
            if (overlap >= iou_min) {
                result.push_back(MatchedPair{gt.items[i].id, pred.items[j].id, overlap});
                gt_used[i] = 1;
                pred_used[j] = 1;
            }
            break;
        }
    }

    std::vector<std::size_t> gt_rest, pred_rest;
    for (std::size_t i = 0; i < gt.items.size(); ++i) {
        if (!gt_used[i]) {
            gt_rest.push_back(i);
        }
    }
    for (std::size_t j = 0; j < pred.items.size(); ++j) {
        if (!pred_used[j]) {
            pred_rest.push_back(j);
        }
    }
    if (!gt_rest.empty() && !pred_rest.empty()) {
        const double inf = std::numeric_limits<double>::infinity();
        std::vector<std::vector<double>> cost(gt_rest.size(),
                                              std::vector<double>(pred_rest.size(), inf));
        for (std::size_t a = 0; a < gt_rest.size(); ++a) {
            for (std::size_t b = 0; b < pred_rest.size(); ++b) {
                const double overlap =
                    iou(gt.items[gt_rest[a]].box, pred.items[pred_rest[b]].box);
                if (overlap >= iou_min) {
                    cost[a][b] = 1.0 - overlap;
                }
            }
        }
        const Assignment assignment = hungarian(cost);
        for (std::size_t a = 0; a < gt_rest.size(); ++a) {
            const int b = assignment.row_to_col[a];
            if (b >= 0) {
                const IdBox& gi = gt.items[gt_rest[a]];
                const IdBox& pj = pred.items[pred_rest[static_cast<std::size_t>(b)]];
                result.push_back(MatchedPair{gi.id, pj.id, iou(gi.box, pj.box)});
            }
        }
    }
    return result;
}

double mota_value(long fn, long fp, long idsw, long gt_total) {
    if (gt_total <= 0) {
        throw ContractError("MOTA undefined: total ground-truth count is zero");
    }
    return 1.0 - static_cast<double>(fn + fp + idsw) / static_cast<double>(gt_total);
}

double motp_value(double distance_sum, long match_count) {
    if (match_count <= 0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return distance_sum / static_cast<double>(match_count);
}

double fps_value(double total_seconds, long frame_count) {
    if (frame_count <= 0) {
        return 0.0;
    }
    if (total_seconds <= 0.0) {
        throw ContractError("FPS undefined: non-positive total time");
    }
    return static_cast<double>(frame_count) / total_seconds;
}

EvalReport evaluate(const std::vector<FrameAnnotations>& gt,
                    const std::vector<FrameAnnotations>& pred, double iou_min,
                    double total_seconds) {
    std::map<int, const FrameAnnotations*> gt_by_frame, pred_by_frame;
    for (const auto& f : gt) {
        gt_by_frame[f.frame] = &f;
    }
    for (const auto& f : pred) {
        pred_by_frame[f.frame] = &f;
    }
    int lo = std::numeric_limits<int>::max(), hi = std::numeric_limits<int>::min();
    for (const auto& [t, _] : gt_by_frame) {
        lo = std::min(lo, t);
        hi = std::max(hi, t);
    }
    for (const auto& [t, _] : pred_by_frame) {
        lo = std::min(lo, t);
        hi = std::max(hi, t);
    }

    EvalReport rep;
    if (lo > hi) {
        throw ContractError("MOTA undefined: total ground-truth count is zero");
    }

    std::map<int, int> prev_matches;       // continuity, last frame only
    std::map<int, int> last_pred_for_gt;   // id-switch bookkeeping, across gaps
    std::map<std::pair<int, int>, long> id_overlap; // (gt id, pred id) -> frames overlapping
    double hota_sum = 0.0;
    long match_total = 0;
    double iou_total = 0.0;

    for (int t = lo; t <= hi; ++t) {
        static const FrameAnnotations kEmptyGt{0, {}, Role::ground_truth};
        static const FrameAnnotations kEmptyPred{0, {}, Role::prediction};
        FrameAnnotations gtf = gt_by_frame.count(t) ? *gt_by_frame[t] : kEmptyGt;
        FrameAnnotations prf = pred_by_frame.count(t) ? *pred_by_frame[t] : kEmptyPred;
        gtf.frame = t;
        prf.frame = t;

        const auto matches = match_frame(gtf, prf, prev_matches, iou_min);

        FrameDiag d;
        d.frame = t;
        d.gt_count = static_cast<int>(gtf.items.size());
        d.pred_count = static_cast<int>(prf.items.size());
        d.match_count = static_cast<int>(matches.size());
        d.fn = d.gt_count - d.match_count;
        d.fp = d.pred_count - d.match_count;
        d.matches = matches;
        prev_matches.clear();
        for (const MatchedPair& m : matches) {
            d.iou_sum += m.overlap;
            auto it = last_pred_for_gt.find(m.gt_id);
            if (it != last_pred_for_gt.end() && it->second != m.pred_id) {
                ++d.idsw;
            }
            last_pred_for_gt[m.gt_id] = m.pred_id;
            prev_matches[m.gt_id] = m.pred_id;
        }

        // identity overlap counts for IDF1, independent of frame matching
        for (const IdBox& gi : gtf.items) {
            for (const IdBox& pj : prf.items) {
                if (iou(gi.box, pj.box) >= iou_min) {
                    ++id_overlap[{gi.id, pj.id}];
                }
            }
        }

        if (d.gt_count == 0 && d.pred_count == 0) {
            hota_sum += 1.0; // nothing to get wrong
        } else if (d.match_count > 0) {
            const double det = d.iou_sum / d.match_count;
            const double assoc = static_cast<double>(d.match_count) /
                                 static_cast<double>(d.gt_count + d.pred_count - d.match_count);
            hota_sum += det * assoc;
        }

        rep.gt_total += d.gt_count;
        rep.pred_total += d.pred_count;
        rep.fn += d.fn;
        rep.fp += d.fp;
        rep.ids += d.idsw;
        match_total += d.match_count;
        iou_total += d.iou_sum;
        rep.frames.push_back(std::move(d));
    }

    rep.mota = mota_value(rep.fn, rep.fp, rep.ids, rep.gt_total);
    rep.motp = motp_value(static_cast<double>(match_total) - iou_total, match_total);
    rep.hota = hota_sum / static_cast<double>(hi - lo + 1);

    // IDF1: globally optimal identity correspondence over overlap counts
    std::set<int> gt_ids, pred_ids;
    for (const auto& [key, _] : id_overlap) {
        gt_ids.insert(key.first);
        pred_ids.insert(key.second);
    }
    std::vector<int> gvec(gt_ids.begin(), gt_ids.end());
    std::vector<int> pvec(pred_ids.begin(), pred_ids.end());
    if (!gvec.empty() && !pvec.empty()) {
        std::vector<std::vector<double>> cost(gvec.size(), std::vector<double>(pvec.size(), 0.0));
        for (std::size_t a = 0; a < gvec.size(); ++a) {
            for (std::size_t b = 0; b < pvec.size(); ++b) {
                auto it = id_overlap.find({gvec[a], pvec[b]});
                cost[a][b] = it == id_overlap.end() ? 0.0 : -static_cast<double>(it->second);
            }
        }
        const Assignment assignment = hungarian(cost);
        rep.idtp = static_cast<long>(-assignment.total_cost);
    }
    const long denom = rep.gt_total + rep.pred_total;
    rep.idf1 = denom > 0 ? 2.0 * static_cast<double>(rep.idtp) / static_cast<double>(denom) : 0.0;
    rep.fps = total_seconds > 0.0
                  ? fps_value(total_seconds, static_cast<long>(hi - lo + 1))
                  : 0.0;
    return rep;
}

std::string EvalReport::table() const {
    std::ostringstream os;
    os << "metric   value\n";
    os << "MOTA     " << mota << "\n";
    os << "MOTP     " << motp << "\n";
    os << "HOTA     " << hota << "\n";
    os << "IDF1     " << idf1 << "\n";
    os << "IDS      " << ids << "\n";
    os << "FN       " << fn << "\n";
    os << "FP       " << fp << "\n";
    os << "FPS      " << fps << "\n";
    return os.str();
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["mota"] = mota;
    if (std::isnan(motp)) {
        j["motp"] = nullptr;
    } else {
        j["motp"] = motp;
    }
    j["hota"] = hota;
    j["idf1"] = idf1;
    j["ids"] = ids;
    j["fn"] = fn;
    j["fp"] = fp;
    j["fps"] = fps;
    j["gt_total"] = gt_total;
    j["pred_total"] = pred_total;
    j["frames"] = frames.size();
    return j.dump(2);
}

} // namespace stacktrack

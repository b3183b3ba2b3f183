#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "stacktrack/metrics.hpp"

#include "oracles.hpp"

using namespace stacktrack;

namespace {

FrameAnnotations frame_of(int t, Role role, std::vector<IdBox> items) {
    FrameAnnotations f;
    f.frame = t;
    f.role = role;
    f.items = std::move(items);
    return f;
}

IdBox idbox(int id, double cx, double cy, double w = 0.2, double h = 0.2) {
    return IdBox{id, BBox{cx, cy, w, h}};
}

} // namespace

TEST_CASE("match_frame on simple cases") {
    SUBCASE("identical sets match completely") {
        auto gt = frame_of(1, Role::ground_truth, {idbox(1, 0.3, 0.3), idbox(2, 0.7, 0.7)});
        auto pred = frame_of(1, Role::prediction, {idbox(10, 0.3, 0.3), idbox(20, 0.7, 0.7)});
        auto m = match_frame(gt, pred, {}, 0.5);
        CHECK(m.size() == 2);
        for (const auto& pair : m) {
            CHECK(pair.overlap == doctest::Approx(1.0));
        }
    }
    SUBCASE("empty predictions leave everything unmatched") {
        auto gt = frame_of(1, Role::ground_truth, {idbox(1, 0.3, 0.3)});
        auto pred = frame_of(1, Role::prediction, {});
        CHECK(match_frame(gt, pred, {}, 0.5).empty());
    }
    SUBCASE("the higher-overlap prediction wins") {
        auto gt = frame_of(1, Role::ground_truth, {idbox(1, 0.5, 0.5)});
        auto pred = frame_of(1, Role::prediction,
                             {idbox(7, 0.5, 0.5), idbox(8, 0.53, 0.5)});
        auto m = match_frame(gt, pred, {}, 0.5);
        REQUIRE(m.size() == 1);
        CHECK(m[0].pred_id == 7);
    }
    SUBCASE("persistent match is kept even when a better one appears") {
        auto gt = frame_of(2, Role::ground_truth, {idbox(1, 0.5, 0.5)});
        auto pred = frame_of(2, Role::prediction,
                             {idbox(7, 0.52, 0.5), idbox(8, 0.5, 0.5)});
        std::map<int, int> prev = {{1, 7}};
        auto m = match_frame(gt, pred, prev, 0.5);
        REQUIRE(m.size() == 1);
        CHECK(m[0].pred_id == 7); // continuity beats the higher IoU of 8
    }
}

TEST_CASE("mota worked values") {
    CHECK(mota_value(0, 0, 0, 10) == doctest::Approx(1.0));
    CHECK(mota_value(2, 1, 1, 20) == doctest::Approx(0.8));
    CHECK(mota_value(15, 10, 0, 20) < 0.0); // negative is allowed
    CHECK_THROWS_AS(mota_value(0, 0, 0, 0), ContractError);
}

TEST_CASE("motp worked values") {
    CHECK(motp_value(0.0, 4) == doctest::Approx(0.0));
    CHECK(motp_value(0.5, 2) == doctest::Approx(0.25)); // IoUs 1.0 and 0.5
    CHECK(motp_value(6.0 / 7.0, 1) == doctest::Approx(6.0 / 7.0));
    CHECK(std::isnan(motp_value(0.0, 0)));
}

TEST_CASE("fps worked values") {
    CHECK(fps_value(2.0, 50) == doctest::Approx(25.0));
    CHECK(fps_value(1.0, 0) == 0.0);
    CHECK(fps_value(4.0, 100) == doctest::Approx(fps_value(8.0, 200)));
}

TEST_CASE("per-frame overlap score worked values") {
    SUBCASE("perfect tracking scores one") {
        std::vector<FrameAnnotations> gt = {frame_of(1, Role::ground_truth, {idbox(1, 0.5, 0.5)})};
        std::vector<FrameAnnotations> pred = {frame_of(1, Role::prediction, {idbox(2, 0.5, 0.5)})};
        CHECK(evaluate(gt, pred).hota == doctest::Approx(1.0));
    }
    SUBCASE("single pair matched at IoU one half") {
        // overlap exactly 0.5: boxes share half their area via 2/3 width overlap
        // pick boxes [0,0.2]x[0,0.2] and shifted so inter/union = 0.5:
        // shift x by a where inter = (0.2-a)*0.2, union = 2*0.04 - inter
        // (0.2-a)*0.2 / (0.08-(0.2-a)*0.2) = 0.5 -> (0.2-a)*0.2 = 0.08/3
        const double a = 0.2 - 0.08 / (3 * 0.2);
        std::vector<FrameAnnotations> gt = {frame_of(1, Role::ground_truth, {idbox(1, 0.3, 0.3)})};
        std::vector<FrameAnnotations> pred = {
            frame_of(1, Role::prediction, {idbox(9, 0.3 + a, 0.3)})};
        EvalReport rep = evaluate(gt, pred, 0.3);
        CHECK(rep.hota == doctest::Approx(0.5).epsilon(1e-9));
    }
    SUBCASE("an extra prediction halves the score") {
        std::vector<FrameAnnotations> gt = {frame_of(1, Role::ground_truth, {idbox(1, 0.5, 0.5)})};
        std::vector<FrameAnnotations> pred = {frame_of(
            1, Role::prediction, {idbox(2, 0.5, 0.5), idbox(3, 0.9, 0.9, 0.1, 0.1)})};
        // match IoU 1, association term 1/(1+2-1)
        CHECK(evaluate(gt, pred).hota == doctest::Approx(0.5));
    }
    SUBCASE("empty frames in the middle count as perfect") {
        std::vector<FrameAnnotations> gt = {frame_of(1, Role::ground_truth, {idbox(1, 0.5, 0.5)}),
                                            frame_of(3, Role::ground_truth, {idbox(1, 0.5, 0.5)})};
        std::vector<FrameAnnotations> pred = {frame_of(1, Role::prediction, {idbox(2, 0.5, 0.5)}),
                                              frame_of(3, Role::prediction, {idbox(2, 0.5, 0.5)})};
        CHECK(evaluate(gt, pred).hota == doctest::Approx(1.0)); // frame 2 contributes 1
    }
    SUBCASE("unmatched-only frames contribute zero") {
        std::vector<FrameAnnotations> gt = {frame_of(1, Role::ground_truth, {idbox(1, 0.2, 0.2)})};
        std::vector<FrameAnnotations> pred = {
            frame_of(1, Role::prediction, {idbox(2, 0.8, 0.8)})};
        CHECK(evaluate(gt, pred).hota == doctest::Approx(0.0));
    }
}

TEST_CASE("id switch counting") {
    SUBCASE("consistent ids never switch") {
        std::vector<FrameAnnotations> gt, pred;
        for (int t = 1; t <= 5; ++t) {
            gt.push_back(frame_of(t, Role::ground_truth, {idbox(1, 0.5, 0.5)}));
            pred.push_back(frame_of(t, Role::prediction, {idbox(9, 0.5, 0.5)}));
        }
        CHECK(evaluate(gt, pred).ids == 0);
    }
    SUBCASE("one identity handover is one switch") {
        std::vector<FrameAnnotations> gt = {frame_of(1, Role::ground_truth, {idbox(1, 0.5, 0.5)}),
                                            frame_of(2, Role::ground_truth, {idbox(1, 0.5, 0.5)})};
        std::vector<FrameAnnotations> pred = {frame_of(1, Role::prediction, {idbox(7, 0.5, 0.5)}),
                                              frame_of(2, Role::prediction, {idbox(8, 0.5, 0.5)})};
        CHECK(evaluate(gt, pred).ids == 1);
    }
    SUBCASE("a swap and swap back costs four switches") {
        // two ground truths exchange prediction ids for one frame and revert
        auto gt_frame = [&](int t) {
            return frame_of(t, Role::ground_truth, {idbox(1, 0.3, 0.3), idbox(2, 0.7, 0.7)});
        };
        std::vector<FrameAnnotations> gt = {gt_frame(1), gt_frame(2), gt_frame(3)};
        std::vector<FrameAnnotations> pred = {
            frame_of(1, Role::prediction, {idbox(11, 0.3, 0.3), idbox(22, 0.7, 0.7)}),
            frame_of(2, Role::prediction, {idbox(22, 0.3, 0.3), idbox(11, 0.7, 0.7)}),
            frame_of(3, Role::prediction, {idbox(11, 0.3, 0.3), idbox(22, 0.7, 0.7)})};
        CHECK(evaluate(gt, pred).ids == 4);
    }
}

TEST_CASE("idf1 worked values") {
    SUBCASE("perfect tracking") {
        std::vector<FrameAnnotations> gt, pred;
        for (int t = 1; t <= 4; ++t) {
            gt.push_back(frame_of(t, Role::ground_truth, {idbox(1, 0.5, 0.5)}));
            pred.push_back(frame_of(t, Role::prediction, {idbox(3, 0.5, 0.5)}));
        }
        CHECK(evaluate(gt, pred).idf1 == doctest::Approx(1.0));
    }
    SUBCASE("splitting one trajectory in half gives one half") {
        std::vector<FrameAnnotations> gt, pred;
        for (int t = 1; t <= 8; ++t) {
            gt.push_back(frame_of(t, Role::ground_truth, {idbox(1, 0.5, 0.5)}));
            pred.push_back(frame_of(t, Role::prediction, {idbox(t <= 4 ? 7 : 8, 0.5, 0.5)}));
        }
        CHECK(evaluate(gt, pred).idf1 == doctest::Approx(0.5));
    }
    SUBCASE("empty predictions score zero") {
        std::vector<FrameAnnotations> gt = {frame_of(1, Role::ground_truth, {idbox(1, 0.5, 0.5)})};
        CHECK(evaluate(gt, {}).idf1 == 0.0);
    }
}

TEST_CASE("evaluate end-to-end counters") {
    SUBCASE("results equal to ground truth give a perfect report") {
        std::vector<FrameAnnotations> gt, pred;
        for (int t = 1; t <= 3; ++t) {
            gt.push_back(frame_of(t, Role::ground_truth, {idbox(1, 0.3, 0.3), idbox(2, 0.6, 0.6)}));
            pred.push_back(
                frame_of(t, Role::prediction, {idbox(1, 0.3, 0.3), idbox(2, 0.6, 0.6)}));
        }
        EvalReport rep = evaluate(gt, pred);
        CHECK(rep.mota == doctest::Approx(1.0));
        CHECK(rep.motp == doctest::Approx(0.0));
        CHECK(rep.idf1 == doctest::Approx(1.0));
        CHECK(rep.ids == 0);
        CHECK(rep.fn == 0);
        CHECK(rep.fp == 0);
    }
    SUBCASE("empty predictions miss every object") {
        std::vector<FrameAnnotations> gt;
        for (int t = 1; t <= 3; ++t) {
            gt.push_back(frame_of(t, Role::ground_truth, {idbox(1, 0.3, 0.3), idbox(2, 0.6, 0.6)}));
        }
        EvalReport rep = evaluate(gt, {});
        CHECK(rep.fn == 6);
        CHECK(rep.mota <= 0.0);
    }
    SUBCASE("mota is invariant to frame re-chunking") {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> pos(0.2, 0.8);
        std::vector<FrameAnnotations> gt, pred;
        for (int t = 1; t <= 6; ++t) {
            gt.push_back(frame_of(t, Role::ground_truth, {idbox(1, pos(rng), pos(rng))}));
            pred.push_back(frame_of(t, Role::prediction, {idbox(2, pos(rng), pos(rng))}));
        }
        EvalReport whole = evaluate(gt, pred);
        long fn = 0, fp = 0, idsw = 0, gt_total = 0;
        for (const FrameDiag& d : whole.frames) {
            fn += d.fn;
            fp += d.fp;
            idsw += d.idsw;
            gt_total += d.gt_count;
        }
        CHECK(whole.mota == doctest::Approx(mota_value(fn, fp, idsw, gt_total)).epsilon(1e-15));
    }
}

namespace {

// random 5-frame scenario with drops, perturbations and id switches
struct Scenario {
    std::vector<FrameAnnotations> gt;
    std::vector<FrameAnnotations> pred;
    std::vector<oracles::OracleFrame> frames;
};

Scenario random_scenario(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> count(1, 6);
    std::uniform_real_distribution<double> pos(0.15, 0.85), size(0.1, 0.3);
    std::uniform_real_distribution<double> drift(-0.01, 0.01), noise(-0.02, 0.02);
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    Scenario s;
    const int n = count(rng);
    std::vector<BBox> boxes;
    std::vector<int> pred_ids;
    for (int i = 0; i < n; ++i) {
        boxes.push_back(BBox{pos(rng), pos(rng), size(rng), size(rng)});
        pred_ids.push_back(100 + i);
    }
    int next_pred_id = 100 + n;
    for (int t = 1; t <= 5; ++t) {
        FrameAnnotations gt_f, pred_f;
        gt_f.frame = pred_f.frame = t;
        gt_f.role = Role::ground_truth;
        pred_f.role = Role::prediction;
        oracles::OracleFrame of;
        for (int i = 0; i < n; ++i) {
            boxes[static_cast<std::size_t>(i)].cx += drift(rng);
            boxes[static_cast<std::size_t>(i)].cy += drift(rng);
            const BBox b = boxes[static_cast<std::size_t>(i)];
            gt_f.items.push_back(IdBox{i + 1, b});
            of.gt.push_back(IdBox{i + 1, b});
            if (coin(rng) < 0.18) {
                continue; // dropped detection
            }
            if (coin(rng) < 0.15) {
                pred_ids[static_cast<std::size_t>(i)] = next_pred_id++; // id switch
            }
            BBox pb = b;
            pb.cx += noise(rng) * 0.3;
            pb.cy += noise(rng) * 0.3;
            pb.w *= 1.0 + noise(rng);
            pb.h *= 1.0 + noise(rng);
            pred_f.items.push_back(IdBox{pred_ids[static_cast<std::size_t>(i)], pb});
            of.pred.push_back(pred_f.items.back());
        }
        if (coin(rng) < 0.25) { // spurious detection
            IdBox fp{next_pred_id++, BBox{pos(rng), pos(rng), size(rng), size(rng)}};
            pred_f.items.push_back(fp);
            of.pred.push_back(fp);
        }
        s.gt.push_back(gt_f);
        s.pred.push_back(pred_f);
        s.frames.push_back(of);
    }
    return s;
}

} // namespace

TEST_CASE("metrics match the brute-force recount on random scenarios") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 120; ++trial) {
        Scenario s = random_scenario(rng);
        EvalReport got = evaluate(s.gt, s.pred);
        oracles::OracleMetrics expected = oracles::oracle_metrics(s.frames, 0.5);
        CHECK(std::fabs(got.mota - expected.mota) <= 1e-9);
        if (std::isnan(expected.motp)) {
            CHECK(std::isnan(got.motp));
        } else {
            CHECK(std::fabs(got.motp - expected.motp) <= 1e-9);
        }
        CHECK(std::fabs(got.hota - expected.hota) <= 1e-9);
        CHECK(std::fabs(got.idf1 - expected.idf1) <= 1e-9);
        CHECK(got.ids == expected.ids);
        CHECK(got.fn == expected.fn);
        CHECK(got.fp == expected.fp);
        CHECK(got.hota >= 0.0);
        CHECK(got.hota <= 1.0);
    }
}

TEST_CASE("report serialization carries all six metrics") {
    std::vector<FrameAnnotations> gt = {frame_of(1, Role::ground_truth, {idbox(1, 0.5, 0.5)})};
    std::vector<FrameAnnotations> pred = {frame_of(1, Role::prediction, {idbox(2, 0.5, 0.5)})};
    EvalReport rep = evaluate(gt, pred, 0.5, 0.5);
    const std::string json = rep.to_json();
    for (const char* key : {"mota", "motp", "hota", "idf1", "ids", "fps"}) {
        CHECK(json.find(key) != std::string::npos);
    }
    const std::string table = rep.table();
    for (const char* key : {"MOTA", "MOTP", "HOTA", "IDF1", "IDS", "FPS"}) {
        CHECK(table.find(key) != std::string::npos);
    }
    CHECK(rep.fps == doctest::Approx(2.0)); // one frame in half a second
}

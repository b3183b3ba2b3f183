#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "stacktrack/losses.hpp"

using namespace stacktrack;

namespace {
const DisplacementNorm kNorm;
}

TEST_CASE("render_targets rasterization") {
    LossConfig cfg;
    SUBCASE("no objects, empty maps") {
        TargetMaps t = render_targets({}, {}, 8, kNorm, cfg);
        for (double v : t.heat.values()) {
            CHECK(v == 0.0);
        }
        CHECK(t.mask_cells == 0);
    }
    SUBCASE("gaussian peak is exactly one at the center cell") {
        // center of cell (4,4) on an 8-grid
        ObjectAnnotation obj{1, BBox{0.5625, 0.5625, 0.2, 0.2}};
        TargetMaps t = render_targets({obj}, {obj}, 8, kNorm, cfg);
        CHECK(t.heat.at({0, 4, 4}) == 1.0);
        CHECK(t.mask.at({0, 4, 4}) == 1.0);
        CHECK(t.mask_cells == 1);
        // sigma floors at 1, so the direct neighbour reads exp(-1/2)
        CHECK(t.heat.at({0, 4, 5}) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
        CHECK(t.dims_t.at({0, 4, 4}) == doctest::Approx(0.2));
        CHECK(t.dims_t.at({1, 4, 4}) == doctest::Approx(0.2));
    }
    SUBCASE("center outside the image is skipped and counted") {
        ObjectAnnotation obj{1, BBox{1.2, 0.5, 0.1, 0.1}};
        TargetMaps t = render_targets({obj}, {}, 8, kNorm, cfg);
        CHECK(t.skipped == 1);
        CHECK(t.mask_cells == 0);
    }
    SUBCASE("heat never exceeds one and max-composition is order independent") {
        std::mt19937_64 rng(17);
        std::uniform_real_distribution<double> pos(0.1, 0.9), size(0.05, 0.4);
        std::vector<ObjectAnnotation> objs;
        for (int i = 0; i < 5; ++i) {
            objs.push_back({i + 1, BBox{pos(rng), pos(rng), size(rng), size(rng)}});
        }
        TargetMaps a = render_targets(objs, objs, 16, kNorm, cfg);
        std::vector<ObjectAnnotation> reversed(objs.rbegin(), objs.rend());
        TargetMaps b = render_targets(reversed, reversed, 16, kNorm, cfg);
        for (std::size_t i = 0; i < a.heat.numel(); ++i) {
            CHECK(a.heat[i] <= 1.0);
            CHECK(a.heat[i] == b.heat[i]);
        }
    }
    SUBCASE("displacement target is the normalized center motion") {
        ObjectAnnotation now{3, BBox{0.53125, 0.53125, 0.2, 0.2}};
        ObjectAnnotation before{3, BBox{0.53125 - 0.004, 0.53125, 0.2, 0.2}};
        TargetMaps t = render_targets({now}, {before}, 16, kNorm, cfg);
        const auto [u, v] = normalize_displacement({0.004, 0.0}, kNorm);
        const int cell = static_cast<int>(0.53125 * 16);
        CHECK(t.disp_t.at({0, cell, cell}) == doctest::Approx(u).epsilon(1e-9));
        CHECK(t.disp_t.at({1, cell, cell}) == doctest::Approx(v).epsilon(1e-9));
    }
}

TEST_CASE("center_loss worked values") {
    Graph g;
    SUBCASE("single confident pixel") {
        Tensor pred = Tensor::from({1, 1, 1}, {0.9});
        Tensor target = Tensor::from({1, 1, 1}, {1.0});
        Tensor weights = Tensor::full({1, 1, 1}, 1.0);
        CHECK(center_loss(g, pred, target, weights).item() ==
              doctest::Approx(-std::log(0.9)).epsilon(1e-9)); // 0.10536
    }
    SUBCASE("perfect prediction limit is zero up to clamping") {
        Tensor pred = Tensor::from({1, 1, 2}, {1.0, 0.0});
        Tensor target = Tensor::from({1, 1, 2}, {1.0, 0.0});
        Tensor weights = Tensor::full({1, 1, 2}, 1.0);
        CHECK(center_loss(g, pred, target, weights).item() ==
              doctest::Approx(0.0).epsilon(1e-6));
    }
    SUBCASE("doubling the pixel weights doubles the loss") {
        Tensor pred = Tensor::from({1, 1, 2}, {0.7, 0.2});
        Tensor target = Tensor::from({1, 1, 2}, {1.0, 0.0});
        Tensor w1 = Tensor::full({1, 1, 2}, 1.0);
        Tensor w2 = Tensor::full({1, 1, 2}, 2.0);
        CHECK(center_loss(g, pred, target, w2).item() ==
              doctest::Approx(2.0 * center_loss(g, pred, target, w1).item()));
    }
}

TEST_CASE("focal_loss worked values") {
    Graph g;
    SUBCASE("zero target zeroes the loss") {
        Tensor pred = Tensor::from({1, 2, 1}, {0.3, 0.8});
        Tensor target = Tensor::zeros({1, 2, 1});
        CHECK(focal_loss(g, pred, target, 4.0).item() == 0.0);
    }
    SUBCASE("scalar substitution at gamma 4") {
        Tensor pred = Tensor::from({1, 1, 1}, {0.5});
        Tensor target = Tensor::from({1, 1, 1}, {1.0});
        // -(0.5)^4 * ln 0.5 = 0.0433217
        CHECK(focal_loss(g, pred, target, 4.0).item() ==
              doctest::Approx(0.0433216988).epsilon(1e-8));
    }
    SUBCASE("gamma 0 reduces to plain cross entropy on positives") {
        Tensor pred = Tensor::from({1, 1, 2}, {0.4, 0.6});
        Tensor target = Tensor::from({1, 1, 2}, {1.0, 1.0});
        const double expected = -(std::log(0.4) + std::log(0.6)) / 2.0;
        CHECK(focal_loss(g, pred, target, 0.0).item() == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("grid_loss masked mean") {
    Graph g;
    SUBCASE("matching prediction on the mask gives zero") {
        Tensor pred = Tensor::from({2, 1, 1}, {0.4, 0.8});
        Tensor target = pred.clone();
        Tensor mask = Tensor::full({1, 1, 1}, 1.0);
        CHECK(grid_loss(g, pred, target, mask, 1).item() == 0.0);
    }
    SUBCASE("two masked elements") {
        // M = 2: one masked cell across two channels
        Tensor pred = Tensor::from({2, 1, 1}, {1.5, 1.5});
        Tensor target = Tensor::from({2, 1, 1}, {1.0, 2.0});
        Tensor mask = Tensor::full({1, 1, 1}, 1.0);
        CHECK(grid_loss(g, pred, target, mask, 1).item() == doctest::Approx(0.5));
    }
    SUBCASE("empty mask is zero by definition") {
        Tensor pred = Tensor::from({2, 1, 1}, {5.0, -3.0});
        Tensor target = Tensor::zeros({2, 1, 1});
        Tensor mask = Tensor::zeros({1, 1, 1});
        CHECK(grid_loss(g, pred, target, mask, 0).item() == 0.0);
    }
    SUBCASE("off-mask cells do not contribute") {
        Tensor pred = Tensor::from({1, 1, 2}, {0.3, 99.0});
        Tensor target = Tensor::from({1, 1, 2}, {0.3, 0.0});
        Tensor mask = Tensor::from({1, 1, 2}, {1.0, 0.0});
        CHECK(grid_loss(g, pred, target, mask, 1).item() == 0.0);
    }
}

namespace {

// fixed tiny "model output" built from raw tensors
ModelOutput make_output(double heat, double dims, double disp, int r) {
    ModelOutput out;
    out.heatmap = Tensor::full({1, r, r}, heat);
    out.dims = Tensor::full({2, r, r}, dims);
    out.disp = Tensor::full({2, r, r}, disp);
    return out;
}

} // namespace

TEST_CASE("combined_loss weighting") {
    Graph g;
    LossConfig cfg;
    ObjectAnnotation obj{1, BBox{0.53, 0.53, 0.3, 0.3}};
    TargetMaps targets = render_targets({obj}, {obj}, 8, kNorm, cfg);
    ModelOutput out = make_output(0.4, 0.3, 0.1, 8);

    const double heat_term =
        g.add(center_loss(g, out.heatmap, targets.heat, targets.pixel_weights),
              focal_loss(g, out.heatmap, targets.heat, cfg.gamma))
            .item();
    const double dims_term =
        grid_loss(g, out.dims, targets.dims_t, targets.mask, targets.mask_cells).item();
    const double disp_term =
        grid_loss(g, out.disp, targets.disp_t, targets.mask, targets.mask_cells).item();

    SUBCASE("equal weights average the three terms") {
        const double got = combined_loss(g, out, targets, cfg).item();
        CHECK(got == doctest::Approx((heat_term + dims_term + disp_term) / 3.0).epsilon(1e-12));
    }
    SUBCASE("gated to the heatmap term only") {
        LossConfig gated = cfg;
        gated.w2 = 0.0;
        gated.w3 = 0.0;
        CHECK(combined_loss(g, out, targets, gated).item() ==
              doctest::Approx(heat_term).epsilon(1e-12));
    }
    SUBCASE("scaling all weights leaves the value unchanged") {
        LossConfig scaled = cfg;
        scaled.w1 = 3.0;
        scaled.w2 = 3.0;
        scaled.w3 = 3.0;
        CHECK(combined_loss(g, out, targets, scaled).item() ==
              doctest::Approx(combined_loss(g, out, targets, cfg).item()).epsilon(1e-12));
    }
    SUBCASE("all-zero weights are rejected") {
        LossConfig bad = cfg;
        bad.w1 = bad.w2 = bad.w3 = 0.0;
        CHECK_THROWS_AS(combined_loss(g, out, targets, bad), ConfigError);
    }
    SUBCASE("hand-set component values average to 0.6") {
        // direct arithmetic on the combination rule
        const double c = (0.3 * 1.0 + 0.6 * 1.0 + 0.9 * 1.0) / 3.0;
        CHECK(c == doctest::Approx(0.6));
    }
}

TEST_CASE("losses are non-negative and differentiable") {
    std::mt19937_64 rng(71);
    LossConfig cfg;
    ObjectAnnotation obj{1, BBox{0.4, 0.6, 0.25, 0.3}};
    TargetMaps targets = render_targets({obj}, {obj}, 4, kNorm, cfg);

    SUBCASE("center loss gradient") {
        const double err = grad_check(
            [&](Graph& g, const Tensor& x) {
                return center_loss(g, g.sigmoid(x), targets.heat, targets.pixel_weights);
            },
            Tensor::randn({1, 4, 4}, rng), 1e-5);
        CHECK(err <= 1e-4);
    }
    SUBCASE("focal loss gradient") {
        const double err = grad_check(
            [&](Graph& g, const Tensor& x) {
                return focal_loss(g, g.sigmoid(x), targets.heat, cfg.gamma);
            },
            Tensor::randn({1, 4, 4}, rng), 1e-5);
        CHECK(err <= 1e-4);
    }
    SUBCASE("grid loss gradient") {
        const double err = grad_check(
            [&](Graph& g, const Tensor& x) {
                return grid_loss(g, x, targets.dims_t, targets.mask, targets.mask_cells);
            },
            Tensor::randn({2, 4, 4}, rng), 1e-5);
        CHECK(err <= 1e-4);
    }
    SUBCASE("non-negativity on random predictions") {
        Graph g;
        for (int i = 0; i < 5; ++i) {
            Tensor p = Tensor::uniform({1, 4, 4}, rng, 0.01, 0.99);
            CHECK(center_loss(g, p, targets.heat, targets.pixel_weights).item() >= 0.0);
            CHECK(focal_loss(g, p, targets.heat, cfg.gamma).item() >= 0.0);
            Tensor q = Tensor::uniform({2, 4, 4}, rng, -1.0, 1.0);
            CHECK(grid_loss(g, q, targets.disp_t, targets.mask, targets.mask_cells).item() >= 0.0);
        }
    }
}

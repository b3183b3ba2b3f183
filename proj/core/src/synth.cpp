#include "stacktrack/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "stacktrack/frames.hpp"
#include "stacktrack/geometry.hpp"

namespace stacktrack {

namespace fs = std::filesystem;

void SynthConfig::validate() const {
    if (num_sequences < 1 || frames_per_sequence < 1) {
        throw ConfigError("synth needs at least one sequence and one frame");
    }
    if (min_objects < 1 || max_objects < min_objects) {
        throw ConfigError("object count range invalid");
    }
    if (image_size < 8) {
        throw ConfigError("image_size too small");
    }
    if (min_speed_x > max_speed_x || min_speed_y > max_speed_y) {
        throw ConfigError("speed range invalid");
    }
    if (min_size <= 0.0 || max_size < min_size || max_size > 0.9) {
        throw ConfigError("size range invalid");
    }
    if (jitter < 0.0) {
        throw ConfigError("jitter must be >= 0");
    }
    if (occluder_events < 0 || occluder_duration < 0) {
        throw ConfigError("occluder settings must be >= 0");
    }
}

namespace {

struct MovingRect {
    int id = 0;
    double cx, cy, w, h;
    double vx, vy;
    double rgb[3];
};

struct Occluder {
    double cx, cy, w, h;
    int start = 0; // 0-based frame of first active frame
    int duration = 0;
    bool active(int t) const { return t >= start && t < start + duration; }
};

// distinct bright colors from a golden-ratio hue walk
void palette_color(int index, double out[3]) {
    const double hue = std::fmod(0.13 + 0.618033988749895 * index, 1.0);
    const double s = 0.75, v = 1.0;
    const double hh = hue * 6.0;
    const int i = static_cast<int>(hh);
    const double f = hh - i;
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (i % 6) {
    case 0: out[0] = v; out[1] = t; out[2] = p; break;
    case 1: out[0] = q; out[1] = v; out[2] = p; break;
    case 2: out[0] = p; out[1] = v; out[2] = t; break;
    case 3: out[0] = p; out[1] = q; out[2] = v; break;
    case 4: out[0] = t; out[1] = p; out[2] = v; break;
    default: out[0] = v; out[1] = p; out[2] = q; break;
    }
}

Tensor make_background(int S, std::mt19937_64& rng) {
    // smooth low-contrast value noise, bilinearly upsampled from an 8x8 grid
    constexpr int G = 8;
    std::uniform_real_distribution<double> dist(0.25, 0.45);
    double grid[3][G][G];
    for (auto& channel : grid) {
        for (auto& row : channel) {
            for (double& v : row) {
                v = dist(rng);
            }
        }
    }
    Tensor bg = Tensor::zeros({3, S, S});
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < S; ++y) {
            const double fy = static_cast<double>(y) / S * (G - 1);
            const int y0 = static_cast<int>(fy);
            const int y1 = std::min(G - 1, y0 + 1);
            const double wy = fy - y0;
            for (int x = 0; x < S; ++x) {
                const double fx = static_cast<double>(x) / S * (G - 1);
                const int x0 = static_cast<int>(fx);
                const int x1 = std::min(G - 1, x0 + 1);
                const double wx = fx - x0;
                bg.at({c, y, x}) = grid[c][y0][x0] * (1 - wy) * (1 - wx) +
                                   grid[c][y0][x1] * (1 - wy) * wx +
                                   grid[c][y1][x0] * wy * (1 - wx) + grid[c][y1][x1] * wy * wx;
            }
        }
    }
    return bg;
}

void fill_rect(Tensor& image, double cx, double cy, double w, double h, const double rgb[3]) {
    const int S = image.dim(1);
    const int x0 = std::max(0, static_cast<int>(std::floor((cx - w / 2) * S)));
    const int x1 = std::min(S - 1, static_cast<int>(std::ceil((cx + w / 2) * S)) - 1);
    const int y0 = std::max(0, static_cast<int>(std::floor((cy - h / 2) * S)));
    const int y1 = std::min(S - 1, static_cast<int>(std::ceil((cy + h / 2) * S)) - 1);
    for (int c = 0; c < 3; ++c) {
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                image.at({c, y, x}) = rgb[c];
            }
        }
    }
}

void quantize(Tensor& image) {
    for (std::size_t i = 0; i < image.numel(); ++i) {
        image[i] = std::round(std::min(1.0, std::max(0.0, image[i])) * 255.0) / 255.0;
    }
}

} // namespace

std::vector<SynthSequence> synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    std::vector<SynthSequence> sequences;
    sequences.reserve(static_cast<std::size_t>(cfg.num_sequences));
    for (int s = 0; s < cfg.num_sequences; ++s) {
        std::mt19937_64 rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(s + 1)));
        SynthSequence seq;
        char name[32];
        std::snprintf(name, sizeof(name), "seq%04d", s);
        seq.name = name;
        seq.image_size = cfg.image_size;

        const Tensor background = make_background(cfg.image_size, rng);

        std::uniform_int_distribution<int> count_dist(cfg.min_objects, cfg.max_objects);
        const int n_objects = count_dist(rng);
        std::vector<MovingRect> objects;
        std::uniform_real_distribution<double> size_dist(cfg.min_size, cfg.max_size);
        std::uniform_real_distribution<double> vx_dist(cfg.min_speed_x, cfg.max_speed_x);
        std::uniform_real_distribution<double> vy_dist(cfg.min_speed_y, cfg.max_speed_y);
        for (int k = 0; k < n_objects; ++k) {
            MovingRect obj;
            obj.id = k + 1;
            obj.w = size_dist(rng);
            obj.h = size_dist(rng);
            std::uniform_real_distribution<double> cx_dist(obj.w / 2 + 0.02, 1.0 - obj.w / 2 - 0.02);
            std::uniform_real_distribution<double> cy_dist(obj.h / 2 + 0.02, 1.0 - obj.h / 2 - 0.02);
            obj.cx = cx_dist(rng);
            obj.cy = cy_dist(rng);
            obj.vx = vx_dist(rng);
            obj.vy = vy_dist(rng);
            palette_color(k, obj.rgb);
            objects.push_back(obj);
        }

        std::vector<Occluder> occluders;
        if (cfg.occluder_duration > 0) {
            for (int e = 0; e < cfg.occluder_events; ++e) {
                std::uniform_int_distribution<int> start_dist(
                    1, std::max(1, cfg.frames_per_sequence - cfg.occluder_duration));
                std::uniform_int_distribution<int> target_dist(0, n_objects - 1);
                Occluder occ;
                occ.start = start_dist(rng);
                occ.duration = cfg.occluder_duration;
                const MovingRect& target = objects[static_cast<std::size_t>(target_dist(rng))];
                // park the occluder where the target will be when it fires
                occ.w = target.w * 1.4;
                occ.h = target.h * 1.4;
                occ.cx = std::min(1.0 - occ.w / 2,
                                  std::max(occ.w / 2, target.cx + target.vx * occ.start));
                occ.cy = std::min(1.0 - occ.h / 2,
                                  std::max(occ.h / 2, target.cy + target.vy * occ.start));
                occluders.push_back(occ);
            }
        }
        const double occluder_rgb[3] = {0.5, 0.5, 0.5};

        std::uniform_real_distribution<double> jitter_dist(-cfg.jitter, cfg.jitter);
        for (int t = 0; t < cfg.frames_per_sequence; ++t) {
            Tensor frame = background.clone();
            FrameAnnotations fa;
            fa.frame = t + 1;
            fa.role = Role::ground_truth;
            std::vector<double> vis;
            for (const MovingRect& obj : objects) {
                fill_rect(frame, obj.cx, obj.cy, obj.w, obj.h, obj.rgb);
            }
            for (const Occluder& occ : occluders) {
                if (occ.active(t)) {
                    fill_rect(frame, occ.cx, occ.cy, occ.w, occ.h, occluder_rgb);
                }
            }
            quantize(frame);
            for (const MovingRect& obj : objects) {
                IdBox ib;
                ib.id = obj.id;
                ib.box = BBox{obj.cx, obj.cy, obj.w, obj.h};
                fa.items.push_back(ib);
                double covered = 0.0;
                for (const Occluder& occ : occluders) {
                    if (!occ.active(t)) {
                        continue;
                    }
                    const BBox ob{occ.cx, occ.cy, occ.w, occ.h};
                    const double ix = std::max(0.0, std::min(ib.box.right(), ob.right()) -
                                                        std::max(ib.box.left(), ob.left()));
                    const double iy = std::max(0.0, std::min(ib.box.bottom(), ob.bottom()) -
                                                        std::max(ib.box.top(), ob.top()));
                    covered = std::max(covered, ix * iy / ib.box.area());
                }
                vis.push_back(std::min(1.0, std::max(0.0, 1.0 - covered)));
            }
            seq.frames.push_back(std::move(frame));
            seq.gt.push_back(std::move(fa));
            seq.visibility.push_back(std::move(vis));

            // advance, reflecting at the borders so boxes stay inside
            for (MovingRect& obj : objects) {
                double dx = obj.vx + jitter_dist(rng);
                double dy = obj.vy + jitter_dist(rng);
                if (obj.cx + dx - obj.w / 2 < 0.0 || obj.cx + dx + obj.w / 2 > 1.0) {
                    obj.vx = -obj.vx;
                    dx = -dx;
                }
                if (obj.cy + dy - obj.h / 2 < 0.0 || obj.cy + dy + obj.h / 2 > 1.0) {
                    obj.vy = -obj.vy;
                    dy = -dy;
                }
                obj.cx += dx;
                obj.cy += dy;
            }
        }
        sequences.push_back(std::move(seq));
    }
    return sequences;
}

void write_sequence(const std::string& dir, const SynthSequence& seq) {
    const fs::path root = fs::path(dir) / seq.name;
    fs::create_directories(root / "img1");
    fs::create_directories(root / "gt");
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
        char name[32];
        std::snprintf(name, sizeof(name), "%06zu.ppm", t + 1);
        write_ppm((root / "img1" / name).string(), seq.frames[t]);
    }
    std::ofstream gt(root / "gt" / "gt.txt");
    if (!gt) {
        throw ParseError("cannot write ground truth under '" + root.string() + "'");
    }
    const int S = seq.image_size;
    char buf[256];
    for (std::size_t t = 0; t < seq.gt.size(); ++t) {
        for (std::size_t k = 0; k < seq.gt[t].items.size(); ++k) {
            const IdBox& ib = seq.gt[t].items[k];
            const double vis = seq.visibility[t][k];
            std::snprintf(buf, sizeof(buf), "%d,%d,%.6f,%.6f,%.6f,%.6f,1,1,%.4f\n",
                          seq.gt[t].frame, ib.id, (ib.box.cx - ib.box.w / 2) * S,
                          (ib.box.cy - ib.box.h / 2) * S, ib.box.w * S, ib.box.h * S, vis);
            gt << buf;
        }
    }
    SeqInfo info;
    info.name = seq.name;
    info.width = S;
    info.height = S;
    info.length = static_cast<int>(seq.frames.size());
    write_seqinfo((root / "seqinfo.ini").string(), info);
}

} // namespace stacktrack

#pragma once

#include <array>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "stacktrack/losses.hpp"
#include "stacktrack/model.hpp"

namespace stacktrack {

enum class TrainPhase { heatmap, dims, disp, joint };
std::string to_string(TrainPhase p);

// Loss-weight gating per phase: isolated phases keep exactly one term.
std::array<double, 3> phase_weights(TrainPhase p);

struct TrainSchedule {
    int epochs_per_phase = 50;
    int patience = 10; // epochs without improvement before a phase stops
    double learning_rate = 1e-3;
    int accumulation = 8; // gradient accumulation, batch size stays 1
    bool phased = true;   // false runs a single joint phase

    void validate() const;
};

struct TrainSequence {
    std::vector<Tensor> frames;                              // [3,S,S] each
    std::vector<std::vector<ObjectAnnotation>> annotations;  // one list per frame
};
using TrainData = std::vector<TrainSequence>;

struct PhaseReport {
    std::string phase;
    int epochs_run = 0;
    std::vector<double> losses; // mean sample loss per epoch
    std::string stop_reason;    // "completed" | "patience" | "empty"
};

struct TrainReport {
    std::vector<PhaseReport> phases;
    std::string to_json() const;
};

// Stops after `patience` consecutive epochs with no strict improvement of the
// best loss seen so far.
class EarlyStop {
public:
    explicit EarlyStop(int patience);
    bool update(double loss); // true: stop now
    int stale_epochs() const { return stale_; }

private:
    int patience_;
    int stale_ = 0;
    bool has_best_ = false;
    double best_ = 0.0;
};

// Adam with bias correction. Frozen parameters are skipped entirely: no
// moment decay, no step-count advance, no parameter change.
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<Parameter>& params, double lr, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8);

    void set_frozen(const std::set<std::string>& names);
    void step();
    void zero_grad();
    double lr() const { return lr_; }

private:
    struct Slot {
        std::vector<double> m;
        std::vector<double> v;
        long t = 0;
        bool frozen = false;
    };
    std::vector<Parameter>* params_;
    std::vector<Slot> slots_;
    double lr_, beta1_, beta2_, eps_;
};

// Assemble the window ending at frame t, repeating the first frame when the
// sequence is shorter than the window.
FrameWindow make_window(const std::vector<Tensor>& frames, int t, int window,
                        std::pair<int, int> source_size);

// Runs the phased schedule: heatmap, dims, disp, then joint. Isolated phases
// freeze the other heads' parameters and gate their loss terms to zero; the
// shared trunk trains in every phase.
class Trainer {
public:
    Trainer(TrackModel& model, TrainSchedule schedule, LossConfig loss_cfg,
            DisplacementNorm norm, std::uint64_t seed);

    PhaseReport run_phase(const TrainData& data, TrainPhase phase);
    TrainReport train(const TrainData& data);

    // invoked after each phase, e.g. to write a checkpoint
    std::function<void(TrainPhase, const PhaseReport&)> on_phase_end;

private:
    TrackModel& model_;
    TrainSchedule schedule_;
    LossConfig loss_cfg_;
    DisplacementNorm norm_;
    AdamOptimizer opt_;
    std::mt19937_64 rng_;

    std::set<std::string> frozen_for(TrainPhase phase) const;
};

} // namespace stacktrack

#include "stacktrack/trainer.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace stacktrack {

std::string to_string(TrainPhase p) {
    switch (p) {
    case TrainPhase::heatmap:
        return "heatmap";
    case TrainPhase::dims:
        return "dims";
    case TrainPhase::disp:
        return "disp";
    case TrainPhase::joint:
        return "joint";
    }
    return "?";
}

std::array<double, 3> phase_weights(TrainPhase p) {
    switch (p) {
    case TrainPhase::heatmap:
        return {1.0, 0.0, 0.0};
    case TrainPhase::dims:
        return {0.0, 1.0, 0.0};
    case TrainPhase::disp:
        return {0.0, 0.0, 1.0};
    case TrainPhase::joint:
        return {1.0, 1.0, 1.0};
    }
    return {1.0, 1.0, 1.0};
}

void TrainSchedule::validate() const {
    if (epochs_per_phase < 0) {
        throw ConfigError("epochs_per_phase must be >= 0");
    }
    if (patience < 1 || (epochs_per_phase > 0 && patience >= epochs_per_phase)) {
        throw ConfigError("patience must satisfy 1 <= patience < epochs_per_phase");
    }
    if (learning_rate <= 0.0) {
        throw ConfigError("learning_rate must be positive");
    }
    if (accumulation < 1) {
        throw ConfigError("accumulation must be >= 1");
    }
}

std::string TrainReport::to_json() const {
    nlohmann::json j;
    j["phases"] = nlohmann::json::array();
    for (const PhaseReport& p : phases) {
        nlohmann::json pj;
        pj["phase"] = p.phase;
        pj["epochs_run"] = p.epochs_run;
        pj["losses"] = p.losses;
        pj["stop_reason"] = p.stop_reason;
        j["phases"].push_back(pj);
    }
    return j.dump(2);
}

EarlyStop::EarlyStop(int patience) : patience_(patience) {
    if (patience < 1) {
        throw ConfigError("patience must be >= 1");
    }
}

bool EarlyStop::update(double loss) {
    if (!has_best_ || loss < best_) {
        has_best_ = true;
        best_ = loss;
        stale_ = 0;
        return false;
    }
    ++stale_;
    return stale_ >= patience_;
}

AdamOptimizer::AdamOptimizer(std::vector<Parameter>& params, double lr, double beta1, double beta2,
                             double eps)
    : params_(&params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    slots_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        slots_[i].m.assign(params[i].value.numel(), 0.0);
        slots_[i].v.assign(params[i].value.numel(), 0.0);
    }
}

void AdamOptimizer::set_frozen(const std::set<std::string>& names) {
    for (std::size_t i = 0; i < params_->size(); ++i) {
        slots_[i].frozen = names.count((*params_)[i].name) > 0;
    }
}

void AdamOptimizer::step() {
    for (std::size_t i = 0; i < params_->size(); ++i) {
        Slot& s = slots_[i];
        if (s.frozen) {
            continue;
        }
        Parameter& pr = (*params_)[i];
        const double* g = pr.value.maybe_grad();
        if (!g) {
            continue;
        }
        ++s.t;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(s.t));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(s.t));
        double* w = pr.value.data();
        const std::size_t n = pr.value.numel();
        for (std::size_t k = 0; k < n; ++k) {
            s.m[k] = beta1_ * s.m[k] + (1.0 - beta1_) * g[k];
            s.v[k] = beta2_ * s.v[k] + (1.0 - beta2_) * g[k] * g[k];
            const double mhat = s.m[k] / bc1;
            const double vhat = s.v[k] / bc2;
            w[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void AdamOptimizer::zero_grad() {
    for (Parameter& pr : *params_) {
        pr.value.zero_grad();
    }
}

FrameWindow make_window(const std::vector<Tensor>& frames, int t, int window,
                        std::pair<int, int> source_size) {
    if (frames.empty() || t < 0 || t >= static_cast<int>(frames.size())) {
        throw ContractError("make_window frame index out of range");
    }
    FrameWindow w;
    w.frame_index = t;
    w.source_size = source_size;
    w.frames.reserve(static_cast<std::size_t>(window));
    for (int k = window - 1; k >= 0; --k) {
        w.frames.push_back(frames[static_cast<std::size_t>(std::max(0, t - k))]);
    }
    return w;
}

Trainer::Trainer(TrackModel& model, TrainSchedule schedule, LossConfig loss_cfg,
                 DisplacementNorm norm, std::uint64_t seed)
    : model_(model),
      schedule_(schedule),
      loss_cfg_(loss_cfg),
      norm_(norm),
      opt_(model.parameters(), schedule.learning_rate),
      rng_(seed) {
    schedule_.validate();
    loss_cfg_.validate();
    norm_.validate();
}

std::set<std::string> Trainer::frozen_for(TrainPhase phase) const {
    std::set<std::string> frozen;
    if (phase == TrainPhase::joint) {
        return frozen;
    }
    std::vector<std::string> excluded;
    switch (phase) {
    case TrainPhase::heatmap:
        excluded = {"head.dims.", "head.disp."};
        break;
    case TrainPhase::dims:
        excluded = {"head.heatmap.", "head.disp."};
        break;
    case TrainPhase::disp:
        excluded = {"head.heatmap.", "head.dims."};
        break;
    case TrainPhase::joint:
        break;
    }
    for (const Parameter& pr : model_.parameters()) {
        for (const std::string& prefix : excluded) {
            if (pr.name.rfind(prefix, 0) == 0) {
                frozen.insert(pr.name);
            }
        }
    }
    return frozen;
}

PhaseReport Trainer::run_phase(const TrainData& data, TrainPhase phase) {
    if (data.empty()) {
        throw ContractError("run_phase needs non-empty training data");
    }
    PhaseReport report;
    report.phase = to_string(phase);
    if (schedule_.epochs_per_phase == 0) {
        report.stop_reason = "empty";
        return report;
    }

    const auto gate = phase_weights(phase);
    LossConfig gated = loss_cfg_;
    gated.w1 = gate[0] * loss_cfg_.w1;
    gated.w2 = gate[1] * loss_cfg_.w2;
    gated.w3 = gate[2] * loss_cfg_.w3;

    opt_.set_frozen(frozen_for(phase));
    const int W = model_.config().pipeline.window;
    const int R = model_.config().grid_size;
    const int S = model_.config().pipeline.image_size;

    std::vector<std::pair<int, int>> samples; // (sequence, frame)
    for (std::size_t s = 0; s < data.size(); ++s) {
        if (data[s].frames.size() != data[s].annotations.size()) {
            throw ContractError("training sequence has mismatched frame/annotation counts");
        }
        for (std::size_t t = 0; t < data[s].frames.size(); ++t) {
            samples.emplace_back(static_cast<int>(s), static_cast<int>(t));
        }
    }
    if (samples.empty()) {
        throw ContractError("run_phase needs at least one frame");
    }

    EarlyStop stopper(schedule_.patience);
    report.stop_reason = "completed";
    for (int epoch = 0; epoch < schedule_.epochs_per_phase; ++epoch) {
        std::shuffle(samples.begin(), samples.end(), rng_);
        opt_.zero_grad();
        double loss_sum = 0.0;
        int in_batch = 0;
        for (const auto& [si, ti] : samples) {
            const TrainSequence& seq = data[static_cast<std::size_t>(si)];
            FrameWindow window = make_window(seq.frames, ti, W, {S, S});
            const auto& current = seq.annotations[static_cast<std::size_t>(ti)];
            const auto& previous = seq.annotations[static_cast<std::size_t>(std::max(0, ti - 1))];
            TargetMaps targets = render_targets(current, previous, R, norm_, gated);

            Graph g;
            ModelOutput out = model_.forward(g, window);
            Tensor loss = combined_loss(g, out, targets, gated);
            const double value = loss.item();
            if (!std::isfinite(value)) {
                throw ContractError("phase " + report.phase + " aborted: non-finite loss at epoch " +
                                    std::to_string(epoch + 1));
            }
            loss_sum += value;
            Tensor scaled = g.scale(loss, 1.0 / schedule_.accumulation);
            g.backward(scaled);
            if (++in_batch == schedule_.accumulation) {
                opt_.step();
                opt_.zero_grad();
                in_batch = 0;
            }
        }
        if (in_batch > 0) {
            opt_.step();
            opt_.zero_grad();
        }
        const double epoch_loss = loss_sum / static_cast<double>(samples.size());
        report.losses.push_back(epoch_loss);
        report.epochs_run = epoch + 1;
        if (stopper.update(epoch_loss)) {
            report.stop_reason = "patience";
            break;
        }
    }
    return report;
}

TrainReport Trainer::train(const TrainData& data) {
    TrainReport report;
    std::vector<TrainPhase> phases;
    if (schedule_.phased) {
        phases = {TrainPhase::heatmap, TrainPhase::dims, TrainPhase::disp, TrainPhase::joint};
    } else {
        phases = {TrainPhase::joint};
    }
    for (TrainPhase phase : phases) {
        PhaseReport pr = run_phase(data, phase);
        if (on_phase_end) {
            on_phase_end(phase, pr);
        }
        report.phases.push_back(std::move(pr));
    }
    return report;
}

} // namespace stacktrack

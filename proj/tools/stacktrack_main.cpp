// Command-line front end: synth | train | track | eval, driven by one JSON
// config file with flag overrides. Exit codes: 0 ok, 1 usage/config error,
// 2 runtime failure.
#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "stacktrack/config.hpp"
#include "stacktrack/frames.hpp"
#include "stacktrack/metrics.hpp"
#include "stacktrack/mot_io.hpp"
#include "stacktrack/pipeline.hpp"
#include "stacktrack/synth.hpp"
#include "stacktrack/trainer.hpp"

namespace fs = std::filesystem;
using namespace stacktrack;

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> token_mode;
    std::optional<std::string> embedding_mode;
    bool no_tmp = false;
};

RunConfig resolve_config(const CommonFlags& flags) {
    RunConfig cfg =
        flags.config_path.empty() ? RunConfig{} : load_run_config(flags.config_path);
    if (flags.seed) {
        cfg.seed = *flags.seed;
        cfg.synth.seed = *flags.seed;
    }
    if (flags.out_dir) {
        cfg.out_dir = *flags.out_dir;
    }
    if (flags.token_mode) {
        cfg.model.pipeline.token_mode = token_mode_from(*flags.token_mode);
    }
    if (flags.embedding_mode) {
        cfg.model.pipeline.embedding_mode = embedding_mode_from(*flags.embedding_mode);
    }
    if (flags.no_tmp) {
        cfg.schedule.phased = false;
    }
    cfg.validate();
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) {
        throw ParseError("cannot write '" + path.string() + "'");
    }
    f << text;
}

int cmd_synth(const CommonFlags& flags) {
    RunConfig cfg = resolve_config(flags);
    const std::string target = flags.out_dir ? cfg.out_dir : cfg.data_dir;
    // generate fully before touching the filesystem
    std::vector<SynthSequence> sequences = synth_generate(cfg.synth);
    fs::create_directories(target);
    for (const SynthSequence& seq : sequences) {
        write_sequence(target, seq);
        std::cout << "wrote " << (fs::path(target) / seq.name).string() << " ("
                  << seq.frames.size() << " frames)\n";
    }
    return 0;
}

TrainData load_train_data(const RunConfig& cfg) {
    TrainData data;
    if (!fs::is_directory(cfg.data_dir)) {
        throw ParseError("data directory '" + cfg.data_dir + "' does not exist");
    }
    std::vector<fs::path> seq_dirs;
    for (const auto& entry : fs::directory_iterator(cfg.data_dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "img1") &&
            fs::exists(entry.path() / "gt" / "gt.txt")) {
            seq_dirs.push_back(entry.path());
        }
    }
    std::sort(seq_dirs.begin(), seq_dirs.end());
    if (seq_dirs.empty()) {
        throw ParseError("no sequences (img1/ + gt/gt.txt) under '" + cfg.data_dir + "'");
    }
    for (const fs::path& dir : seq_dirs) {
        SeqInfo info = read_seqinfo((dir / "seqinfo.ini").string());
        LoadedFrames lf = load_frames((dir / "img1").string(), cfg.model.pipeline.image_size);
        const int src_w = info.width > 0 ? info.width : lf.source_w;
        const int src_h = info.height > 0 ? info.height : lf.source_h;
        std::ifstream gt_file(dir / "gt" / "gt.txt");
        std::stringstream ss;
        ss << gt_file.rdbuf();
        auto per_frame = parse_mot(ss.str(), src_w, src_h, Role::ground_truth);

        TrainSequence seq;
        seq.frames = std::move(lf.frames);
        seq.annotations.assign(seq.frames.size(), {});
        for (const FrameAnnotations& fa : per_frame) {
            const std::size_t t = static_cast<std::size_t>(fa.frame - 1);
            if (t >= seq.annotations.size()) {
                continue;
            }
            for (const IdBox& ib : fa.items) {
                seq.annotations[t].push_back(ObjectAnnotation{ib.id, ib.box});
            }
        }
        data.push_back(std::move(seq));
    }
    return data;
}

int cmd_train(const CommonFlags& flags) {
    RunConfig cfg = resolve_config(flags);
    TrainData data = load_train_data(cfg);
    TrackModel model(cfg.model, cfg.seed);
    Trainer trainer(model, cfg.schedule, cfg.loss, cfg.disp_norm, cfg.seed);

    fs::create_directories(cfg.out_dir);
    trainer.on_phase_end = [&](TrainPhase phase, const PhaseReport& report) {
        const fs::path path = fs::path(cfg.out_dir) / ("checkpoint_" + to_string(phase) + ".ckpt");
        save_checkpoint(path.string(), model.to_checkpoint());
        std::cout << "phase " << report.phase << ": " << report.epochs_run << " epochs, "
                  << "final loss "
                  << (report.losses.empty() ? 0.0 : report.losses.back()) << ", stop="
                  << report.stop_reason << "\n";
    };
    TrainReport report = trainer.train(data);

    const fs::path final_path = fs::path(cfg.out_dir) / "model.ckpt";
    save_checkpoint(final_path.string(), model.to_checkpoint());
    write_text(fs::path(cfg.out_dir) / "train_report.json", report.to_json());
    std::cout << "checkpoint: " << final_path.string() << "\n";
    return 0;
}

int cmd_track(const CommonFlags& flags, const std::string& checkpoint_path,
              const std::string& sequence_dir) {
    RunConfig cfg = resolve_config(flags);
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const ModelConfig stored = ModelConfig::from_json(ckpt.meta);
    if (stored.to_json() != cfg.model.to_json()) {
        std::cerr << "checkpoint/config mismatch\n"
                  << "  checkpoint: " << stored.to_json() << "\n"
                  << "  config:     " << cfg.model.to_json() << "\n";
        return 1;
    }
    TrackModel model = TrackModel::from_checkpoint(ckpt);

    const fs::path seq(sequence_dir);
    const fs::path img_dir = fs::exists(seq / "img1") ? seq / "img1" : seq;
    LoadedFrames lf = load_frames(img_dir.string(), cfg.model.pipeline.image_size);
    int src_w = lf.source_w, src_h = lf.source_h;
    if (fs::exists(seq / "seqinfo.ini")) {
        SeqInfo info = read_seqinfo((seq / "seqinfo.ini").string());
        if (info.width > 0) {
            src_w = info.width;
            src_h = info.height;
        }
    }

    ModelFn model_fn = [&model](Graph& g, const FrameWindow& w) { return model.forward(g, w); };
    SequenceResult result = track_sequence(lf.frames, {src_h, src_w}, model_fn,
                                           cfg.model.pipeline, cfg.assoc, cfg.disp_norm);

    fs::create_directories(cfg.out_dir);
    const std::string seq_name = seq.filename().string().empty()
                                     ? seq.parent_path().filename().string()
                                     : seq.filename().string();
    const fs::path results_path = fs::path(cfg.out_dir) / (seq_name + ".txt");
    write_text(results_path, write_results(result.rows, src_w, src_h));
    std::ostringstream timing;
    timing << "{\n  \"frames\": " << result.timing.frame_count
           << ",\n  \"seconds\": " << result.timing.total_seconds
           << ",\n  \"fps\": " << result.timing.fps << "\n}\n";
    write_text(fs::path(cfg.out_dir) / (seq_name + "_timing.json"), timing.str());
    std::cout << "results: " << results_path.string() << "\n";
    std::cout << "fps: " << result.timing.fps << " (" << result.timing.frame_count
              << " frames in " << result.timing.total_seconds << " s)\n";
    return 0;
}

std::pair<int, int> eval_source_size(const fs::path& gt_path) {
    // gt lives at <seq>/gt/gt.txt in the mirrored layout
    const fs::path seq_dir = gt_path.parent_path().parent_path();
    if (fs::exists(seq_dir / "seqinfo.ini")) {
        SeqInfo info = read_seqinfo((seq_dir / "seqinfo.ini").string());
        if (info.width > 0 && info.height > 0) {
            return {info.width, info.height};
        }
    }
    // overlap metrics are scale-invariant, so pixel units work as-is
    return {1, 1};
}

int cmd_eval(const CommonFlags& flags, const std::string& gt_path,
             const std::string& results_path) {
    RunConfig cfg = resolve_config(flags);
    auto slurp = [](const std::string& p) {
        std::ifstream f(p);
        if (!f) {
            throw ParseError("cannot open '" + p + "'");
        }
        std::stringstream ss;
        ss << f.rdbuf();
        return ss.str();
    };
    const auto [src_w, src_h] = eval_source_size(gt_path);
    auto gt = parse_mot(slurp(gt_path), src_w, src_h, Role::ground_truth);
    auto pred = parse_mot(slurp(results_path), src_w, src_h, Role::prediction);
    EvalReport report = evaluate(gt, pred);

    fs::create_directories(cfg.out_dir);
    write_text(fs::path(cfg.out_dir) / "report.txt", report.table());
    write_text(fs::path(cfg.out_dir) / "report.json", report.to_json());
    std::cout << report.table();
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"channel-stacked temporal-window multi-object tracker"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string checkpoint_path, sequence_dir, gt_path, results_path;

    auto add_common = [&](CLI::App* cmd, bool config_required) {
        auto* opt = cmd->add_option("--config", flags.config_path, "run configuration (json)");
        if (config_required) {
            opt->required()->check(CLI::ExistingFile);
        }
        cmd->add_option("--seed", flags.seed, "override the config seed");
        cmd->add_option("--out", flags.out_dir, "output directory override");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate synthetic sequences");
    add_common(synth, true);

    CLI::App* train = app.add_subcommand("train", "train a model on a dataset");
    add_common(train, true);
    train->add_flag("--no-tmp", flags.no_tmp, "single joint phase instead of the phased schedule");
    train->add_option("--mode", flags.token_mode, "token mode: stacked|streamed");
    train->add_option("--embedding", flags.embedding_mode,
                      "embedding mode: channel_wise|positional");

    CLI::App* track = app.add_subcommand("track", "run the tracker over a sequence");
    add_common(track, true);
    track->add_option("--checkpoint", checkpoint_path, "trained weights")
        ->required()
        ->check(CLI::ExistingFile);
    track->add_option("--sequence", sequence_dir, "sequence directory")
        ->required()
        ->check(CLI::ExistingDirectory);

    CLI::App* eval = app.add_subcommand("eval", "score results against ground truth");
    add_common(eval, false);
    eval->add_option("--gt", gt_path, "ground-truth file")->required()->check(CLI::ExistingFile);
    eval->add_option("--results", results_path, "tracker results file")
        ->required()
        ->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed()) {
            return cmd_synth(flags);
        }
        if (train->parsed()) {
            return cmd_train(flags);
        }
        if (track->parsed()) {
            return cmd_track(flags, checkpoint_path, sequence_dir);
        }
        if (eval->parsed()) {
            return cmd_eval(flags, gt_path, results_path);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

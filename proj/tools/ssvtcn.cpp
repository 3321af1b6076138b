// Command-line front end: synthesize traffic, train, detect, evaluate, and
// run the labeled-ratio experiment grid.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 pipeline
// error.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ssvtcn/cli.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<double> labeled_ratio;
    std::optional<std::string> mode;
};

ssvtcn::AppConfig resolve_config(const CommonFlags& flags) {
    ssvtcn::AppConfig cfg = ssvtcn::load_config(flags.config_path);
    if (flags.seed) {
        cfg.train.seed = *flags.seed;
        cfg.synth.seed = *flags.seed;
    }
    if (flags.labeled_ratio) {
        cfg.split.labeled_fraction = *flags.labeled_ratio;
    }
    if (flags.mode) {
        cfg.mode = ssvtcn::mode_from_name(*flags.mode);
    }
    return cfg;
}

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "JSON configuration file");
    cmd->add_option("--seed", flags.seed, "Override the train/synth seed");
    cmd->add_option("--labeled-ratio", flags.labeled_ratio,
                    "Override the labeled fraction of the training span");
    cmd->add_option("--mode", flags.mode, "ss-vtcn, ss-wvtcn or supervised");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-supervised variational TCN anomaly detector"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string out_path;
    std::string data_path;
    std::optional<std::size_t> synth_records;
    std::string checkpoint_path;
    std::string intervals_path;
    std::string input_path;
    std::string log_path;
    std::string truth_path;

    CLI::App* synth = app.add_subcommand("synth", "Generate a labeled synthetic corpus as CSV");
    add_common(synth, flags);
    synth->add_option("--out", out_path, "Output CSV path ('-' for stdout)");
    synth->add_option("--records", synth_records, "Number of records to generate");

    CLI::App* train = app.add_subcommand("train", "Train, calibrate and write model artifacts");
    add_common(train, flags);
    train->add_option("--data", data_path, "Training CSV (overrides data.csv)");
    train->add_option("--out", out_path, "Artifact prefix (default 'model')");

    CLI::App* detect = app.add_subcommand("detect", "Stream detection over a CSV");
    add_common(detect, flags);
    detect->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required();
    detect->add_option("--intervals", intervals_path, "Calibration file")->required();
    detect->add_option("--input", input_path, "Input CSV")->required();
    detect->add_option("--out", out_path, "Detection log path ('-' for stdout)");

    CLI::App* eval = app.add_subcommand("eval", "Score a detection log against ground truth");
    add_common(eval, flags);
    eval->add_option("--log", log_path, "Detection log (JSON lines)")->required();
    eval->add_option("--truth", truth_path, "Ground-truth CSV")->required();
    eval->add_option("--out", out_path, "Report JSON path");

    CLI::App* grid = app.add_subcommand("grid", "Run the labeled-ratio x mode experiment grid");
    add_common(grid, flags);
    grid->add_option("--data", data_path, "Corpus CSV (overrides data.csv)");
    grid->add_option("--out", out_path, "Grid report JSON path");

    CLI11_PARSE(app, argc, argv);

    try {
        ssvtcn::AppConfig cfg = resolve_config(flags);
        if (!data_path.empty()) {
            cfg.csv_path = data_path;
        }
        if (synth->parsed()) {
            if (synth_records) {
                cfg.synth.records = *synth_records;
            }
            ssvtcn::cmd_synth(cfg, out_path, std::cerr);
        } else if (train->parsed()) {
            ssvtcn::cmd_train(cfg, out_path.empty() ? "model" : out_path, std::cout);
        } else if (detect->parsed()) {
            ssvtcn::cmd_detect(cfg, checkpoint_path, intervals_path, input_path, out_path);
        } else if (eval->parsed()) {
            ssvtcn::cmd_eval(cfg, log_path, truth_path, out_path, std::cout);
        } else if (grid->parsed()) {
            ssvtcn::cmd_grid(cfg, out_path, std::cout);
        }
    } catch (const ssvtcn::config_error& e) {
        std::cerr << "ssvtcn: " << e.what() << '\n';
        return 2;
    } catch (const ssvtcn::data_error& e) {
        std::cerr << "ssvtcn: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "ssvtcn: " << e.what() << '\n';
        return 4;
    }
    return 0;
}

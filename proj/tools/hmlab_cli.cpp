#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "hmlab/analysis.hpp"
#include "hmlab/checkpoint.hpp"
#include "hmlab/config.hpp"
#include "hmlab/gradsuite.hpp"
#include "hmlab/trainer.hpp"

namespace fs = std::filesystem;
using namespace hmlab;

namespace {

data::Corpus load_from_config(const config::RunConfig& cfg) {
    data::CorpusPaths paths;
    paths.train = cfg.train_path;
    paths.valid = cfg.valid_path;
    paths.test = cfg.test_path;
    paths.single = cfg.data_path;
    return data::load_corpus(paths, data::parse_mode(cfg.data_mode));
}

training::TrainOptions options_from_config(const config::RunConfig& cfg,
                                           const std::string& ckpt_path) {
    training::TrainOptions o;
    o.batch = cfg.batch_size;
    o.seq_len = cfg.seq_len;
    o.lr = cfg.lr;
    o.clip = cfg.clip;
    o.l2 = cfg.l2;
    o.beta1 = cfg.adam_beta1;
    o.beta2 = cfg.adam_beta2;
    o.adam_eps = cfg.adam_eps;
    o.schedule = cfg.schedule;
    o.patience = cfg.patience;
    o.divisor = cfg.lr_divisor;
    o.max_epochs = cfg.max_epochs;
    o.max_iters = cfg.max_iters;
    o.carry_state = cfg.carry_state;
    o.eval_chunk = cfg.eval_chunk;
    o.seed = cfg.seed;
    o.checkpoint_path = ckpt_path;
    return o;
}

struct RunSummary {
    double test_bpc = 0.0;
    int64_t iterations = 0;
    double z1 = 0.0, z2 = 0.0;
    bool has_z = false;
    std::string status;
};

template <typename Real>
RunSummary run_training(const config::RunConfig& cfg, const data::Corpus& corpus,
                        const std::string& resume_path, std::ostream& log) {
    const std::string ckpt = (fs::path(cfg.out_dir) / "model.hmlb").string();
    fs::create_directories(cfg.out_dir);

    Model<Real> model(cfg.model_config(corpus.vocab.size()));
    auto opts = options_from_config(cfg, ckpt);

    auto on_epoch = [&](const training::EpochRecord& r) {
        log << "epoch=" << r.epoch << " train_loss=" << r.train_loss
            << " valid_bpc=" << r.valid_bpc << " lr=" << r.lr << " z1=" << r.z1_freq
            << " z2=" << r.z2_freq << " iterations=" << r.iterations << "\n";
        log.flush();
    };

    training::TrainResult result;
    if (!resume_path.empty()) {
        auto ck = checkpoint::load<Real>(resume_path);
        checkpoint::restore_parameters(model, ck);
        training::Trainer<Real> trainer(model, corpus, opts, ck);
        result = trainer.run(on_epoch);
    } else {
        training::Trainer<Real> trainer(model, corpus, opts);
        result = trainer.run(on_epoch);
    }

    RunSummary s;
    s.status = training::status_name(result.status);
    s.iterations = result.iterations;
    if (!result.history.empty()) {
        const auto& last = result.history.back();
        s.z1 = last.z1_freq;
        s.z2 = last.z2_freq;
    }
    s.has_z = cfg.parsed_arch() != Arch::lstm;
    log << "status=" << s.status << " iterations=" << s.iterations;
    if (!result.note.empty()) log << " note=\"" << result.note << "\"";
    log << "\n";
    if (result.status != training::RunStatus::diverged)
        s.test_bpc = analysis::evaluate_bpc(model, corpus.splits.test, cfg.eval_chunk);
    return s;
}

RunSummary run_config(const config::RunConfig& cfg, const std::string& resume,
                      std::ostream& log) {
    config::log_effective(cfg, log);
    auto corpus = load_from_config(cfg);
    log << "vocab_size=" << corpus.vocab.size() << " train_chars=" << corpus.splits.train.size()
        << " valid_chars=" << corpus.splits.valid.size()
        << " test_chars=" << corpus.splits.test.size() << "\n";
    if (cfg.parsed_precision() == config::Precision::float64)
        return run_training<double>(cfg, corpus, resume, log);
    return run_training<float>(cfg, corpus, resume, log);
}

int cmd_train(const std::string& config_path, const std::string& resume) {
    auto cfg = config::parse_config(config_path);
    auto s = run_config(cfg, resume, std::cout);
    if (s.status == "diverged") {
        std::cout << "run diverged; checkpoint and record written to " << cfg.out_dir << "\n";
        return 0;  // divergence is a recorded outcome, not a tool failure
    }
    std::printf("test_bpc=%.4f\n", s.test_bpc);
    return 0;
}

// The checkpoint stores its payload dtype; try float32 first, then float64.
template <typename Fn>
int with_checkpoint(const std::string& path, Fn&& fn) {
    try {
        auto ck = checkpoint::load<float>(path);
        Model<float> model(ck.model_cfg);
        checkpoint::restore_parameters(model, ck);
        return fn(model, ck.vocab);
    } catch (const std::runtime_error& e) {
        if (std::string(e.what()).find("has dtype") == std::string::npos) throw;
    }
    auto ck = checkpoint::load<double>(path);
    Model<double> model(ck.model_cfg);
    checkpoint::restore_parameters(model, ck);
    return fn(model, ck.vocab);
}

int cmd_eval(const std::string& ckpt, const std::string& data_path, int64_t chunk) {
    return with_checkpoint(ckpt, [&](auto& model, const data::Vocabulary& vocab) {
        std::ifstream in(data_path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot read " + data_path);
        std::ostringstream ss;
        ss << in.rdbuf();
        const std::string text = ss.str();
        if (text.size() < 2) throw std::runtime_error(data_path + ": need at least 2 characters");
        std::vector<int32_t> ids;
        ids.reserve(text.size());
        for (unsigned char c : text) ids.push_back(vocab.encode(c));
        std::printf("bpc=%.4f\n", analysis::evaluate_bpc(model, ids, chunk));
        return 0;
    });
}

int cmd_segment(const std::string& ckpt, const std::string& text_path,
                const std::string& tsv_out, const std::string& pgm_out, int64_t chunk) {
    return with_checkpoint(ckpt, [&](auto& model, const data::Vocabulary& vocab) {
        std::ifstream in(text_path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot read " + text_path);
        std::ostringstream ss;
        ss << in.rdbuf();
        auto rec = analysis::extract_segmentation(model, ss.str(), vocab, chunk);
        if (!tsv_out.empty()) analysis::render_tsv(rec, tsv_out);
        if (!pgm_out.empty()) analysis::render_pgm(rec, pgm_out);
        std::printf("chars=%zu z1_freq=%.4f z2_freq=%.4f ", rec.text.size(), rec.freq1,
                    rec.freq2);
        if (rec.ratio_defined)
            std::printf("z_ratio=%.2f\n", rec.z_ratio);
        else
            std::printf("z_ratio=undefined\n");
        return 0;
    });
}

int cmd_gradcheck() {
    std::vector<gradsuite::Report> reports;
    const double worst = gradsuite::run(reports);
    for (const auto& r : reports)
        std::printf("%-28s max_rel=%.3e max_abs=%.3e\n", r.name.c_str(), r.max_rel_error,
                    r.max_abs_error);
    const bool st_ok = gradsuite::straight_through_identity();
    std::printf("%-28s %s\n", "straight_through_identity", st_ok ? "exact" : "MISMATCH");
    std::printf("worst_max_rel=%.3e\n", worst);
    return (worst < 1e-4 && st_ok) ? 0 : 1;
}

int cmd_ablate(const std::string& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".cfg") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no .cfg files in " + dir);

    std::printf("%-32s %8s %8s %6s %6s %8s %s\n", "config", "bpc", "iter", "z1", "z2",
                "z-ratio", "status");
    for (const auto& f : files) {
        auto cfg = config::parse_config(f.string());
        std::ostringstream log;  // per-run logs go to the run directory
        fs::create_directories(cfg.out_dir);
        auto s = run_config(cfg, "", log);
        std::ofstream(fs::path(cfg.out_dir) / "run.log") << log.str();
        std::printf("%-32s %8.4f %8lld ", f.stem().string().c_str(), s.test_bpc,
                    static_cast<long long>(s.iterations));
        if (s.has_z) {
            std::printf("%6.2f %6.2f ", s.z1, s.z2);
            if (s.z2 > 0)
                std::printf("%8.2f ", s.z1 / s.z2);
            else
                std::printf("%8s ", "undef");
        } else {
            std::printf("%6s %6s %8s ", "N/A", "N/A", "N/A");
        }
        std::printf("%s\n", s.status.c_str());
        std::fflush(stdout);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hmlab: hierarchical multiscale LSTM laboratory"};
    app.require_subcommand(1);

    std::string config_path, resume, ckpt, data_path, text_path, tsv_out, pgm_out, dir;
    int64_t chunk = 100;

    auto* train = app.add_subcommand("train", "train a model from a config file");
    train->add_option("--config", config_path, "run configuration file")->required();
    train->add_option("--resume", resume, "checkpoint to resume from");

    auto* eval = app.add_subcommand("eval", "report bpc of a checkpoint on a text file");
    eval->add_option("--checkpoint", ckpt, "checkpoint path")->required();
    eval->add_option("--data", data_path, "text file to evaluate")->required();
    eval->add_option("--chunk", chunk, "evaluation chunk length");

    auto* segment = app.add_subcommand("segment", "write boundary decisions for a text");
    segment->add_option("--checkpoint", ckpt, "checkpoint path")->required();
    segment->add_option("--text", text_path, "text file to segment")->required();
    segment->add_option("--tsv", tsv_out, "output tsv path");
    segment->add_option("--pgm", pgm_out, "output pgm strip path");
    segment->add_option("--chunk", chunk, "forward chunk length");

    app.add_subcommand("gradcheck", "run the finite-difference gradient suite");

    auto* ablate = app.add_subcommand("ablate", "train every config in a directory");
    ablate->add_option("dir", dir, "directory of .cfg files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand("train")) return cmd_train(config_path, resume);
        if (app.got_subcommand("eval")) return cmd_eval(ckpt, data_path, chunk);
        if (app.got_subcommand("segment"))
            return cmd_segment(ckpt, text_path, tsv_out, pgm_out, chunk);
        if (app.got_subcommand("gradcheck")) return cmd_gradcheck();
        if (app.got_subcommand("ablate")) return cmd_ablate(dir);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

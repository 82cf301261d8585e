#pragma once

#include <functional>
#include <sstream>

#include "hmlab/analysis.hpp"
#include "hmlab/checkpoint.hpp"
#include "hmlab/data.hpp"
#include "hmlab/model.hpp"
#include "hmlab/training.hpp"

namespace hmlab::training {

struct TrainOptions {
    int64_t batch = 64;
    int64_t seq_len = 100;
    double lr = 0.002;
    double clip = 1.0;
    double l2 = 0.0005;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    bool schedule = true;
    int patience = 4;
    double divisor = 50.0;
    int64_t max_epochs = 500;
    int64_t max_iters = 0;  // 0 = no limit
    bool carry_state = true;
    int64_t eval_chunk = 100;
    uint64_t seed = 1;
    std::string checkpoint_path;  // saved each epoch (and on divergence) when set
};

enum class RunStatus { completed, early_stopped, diverged, iter_limit };

inline const char* status_name(RunStatus s) {
    switch (s) {
        case RunStatus::completed: return "completed";
        case RunStatus::early_stopped: return "early_stopped";
        case RunStatus::diverged: return "diverged";
        case RunStatus::iter_limit: return "iter_limit";
    }
    return "?";
}

struct EpochRecord {
    int64_t epoch = 0;
    double train_loss = 0.0;  // mean chunk loss, nats
    double valid_bpc = 0.0;
    double lr = 0.0;
    double z1_freq = 0.0, z2_freq = 0.0;
    int64_t iterations = 0;  // cumulative
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::vector<double> iter_losses;
    RunStatus status = RunStatus::completed;
    int64_t iterations = 0;
    int64_t skipped_updates = 0;  // chunks whose gradients overflowed
    std::string note;
};

// The training protocol: per-epoch random crop into contiguous lanes,
// TBPTT with state carried across chunks (values only, gradients cut at
// chunk boundaries), global-norm clipping, Adam, per-epoch validation bpc
// feeding the divide-by-50 schedule with early stopping.
template <typename Real>
class Trainer {
  public:
    Trainer(Model<Real>& model, const data::Corpus& corpus, TrainOptions opt)
        : model_(model), corpus_(corpus), opt_(opt) {
        adam_.lr = static_cast<Real>(opt.lr);
        adam_.beta1 = static_cast<Real>(opt.beta1);
        adam_.beta2 = static_cast<Real>(opt.beta2);
        adam_.eps = static_cast<Real>(opt.adam_eps);
        sched_.patience = opt.patience;
        sched_.divisor = opt.divisor;
        crop_rng_ = init::labeled_rng(opt.seed, "crop");
        carried_ = model_.initial_state(opt.batch);
    }

    // Resume from a loaded checkpoint; the model must already hold the
    // checkpointed parameter values.
    Trainer(Model<Real>& model, const data::Corpus& corpus, TrainOptions opt,
            const checkpoint::Checkpoint<Real>& ck)
        : Trainer(model, corpus, opt) {
        adam_ = ck.adam;
        sched_ = ck.schedule;
        epoch_ = ck.resume.epoch;
        iters_ = ck.resume.iterations;
        std::istringstream(ck.resume.crop_rng) >> crop_rng_;
        if (ck.resume.chunk_index > 0) {
            mid_epoch_resume_ = true;
            resume_chunk_ = ck.resume.chunk_index;
            resume_offset_ = ck.resume.epoch_offset;
        }
        if (ck.resume.has_model_state) carried_ = ck.model_state;
    }

    AdamState<Real>& adam() { return adam_; }
    ScheduleState& schedule() { return sched_; }
    int64_t iterations() const { return iters_; }

    void save(const std::string& path, const std::string& status = "in_progress") {
        checkpoint::ResumeInfo info;
        info.epoch = epoch_;
        info.chunk_index = current_chunk_;
        info.epoch_offset = current_offset_;
        info.iterations = iters_;
        std::ostringstream os;
        os << crop_rng_;
        info.crop_rng = os.str();
        info.status = status;
        checkpoint::save(path, model_, adam_, sched_, corpus_.vocab, info, &carried_);
    }

    TrainResult run(const std::function<void(const EpochRecord&)>& on_epoch = nullptr) {
        TrainResult result;
        const auto& train_ids = corpus_.splits.train;
        while (epoch_ < opt_.max_epochs) {
            int64_t offset;
            if (mid_epoch_resume_) {
                offset = resume_offset_;
            } else {
                offset = data::EpochBatcher::pick_offset(
                    static_cast<int64_t>(train_ids.size()), opt_.batch, opt_.seq_len,
                    crop_rng_);
                carried_ = model_.initial_state(opt_.batch);
            }
            data::EpochBatcher batcher(train_ids, opt_.batch, opt_.seq_len, offset);
            if (mid_epoch_resume_) batcher.seek(resume_chunk_);
            mid_epoch_resume_ = false;
            current_offset_ = offset;

            double loss_sum = 0.0;
            int64_t chunks_done = 0;
            int64_t z1_on = 0, z1_n = 0, z2_on = 0, z2_n = 0;
            data::Batch b;
            while (batcher.next(b)) {
                current_chunk_ = batcher.chunk_index();
                if (!opt_.carry_state) carried_ = model_.initial_state(opt_.batch);
                const double loss = train_chunk(b, z1_on, z1_n, z2_on, z2_n);
                if (!std::isfinite(loss)) {
                    result.status = RunStatus::diverged;
                    result.iterations = iters_;
                    result.skipped_updates = skipped_updates_;
                    result.note = "loss became non-finite at iteration " +
                                  std::to_string(iters_ + 1);
                    if (!opt_.checkpoint_path.empty()) save(opt_.checkpoint_path, "diverged");
                    return result;
                }
                loss_sum += loss;
                ++chunks_done;
                ++iters_;
                result.iter_losses.push_back(loss);
                if (opt_.max_iters > 0 && iters_ >= opt_.max_iters) {
                    result.status = RunStatus::iter_limit;
                    result.iterations = iters_;
                    result.skipped_updates = skipped_updates_;
                    if (!opt_.checkpoint_path.empty())
                        save(opt_.checkpoint_path, "iter_limit");
                    return result;
                }
            }
            current_chunk_ = 0;

            const double vbpc =
                analysis::evaluate_bpc(model_, corpus_.splits.valid, opt_.eval_chunk);
            EpochRecord rec;
            rec.epoch = epoch_;
            rec.train_loss = chunks_done > 0 ? loss_sum / double(chunks_done) : 0.0;
            rec.valid_bpc = vbpc;
            rec.lr = double(adam_.lr);
            rec.z1_freq = z1_n > 0 ? double(z1_on) / double(z1_n) : 0.0;
            rec.z2_freq = z2_n > 0 ? double(z2_on) / double(z2_n) : 0.0;
            rec.iterations = iters_;
            result.history.push_back(rec);
            if (on_epoch) on_epoch(rec);
            ++epoch_;

            if (std::isnan(vbpc)) {
                result.status = RunStatus::diverged;
                result.iterations = iters_;
                result.skipped_updates = skipped_updates_;
                result.note = "validation loss is NaN at epoch " + std::to_string(rec.epoch);
                if (!opt_.checkpoint_path.empty()) save(opt_.checkpoint_path, "diverged");
                return result;
            }
            if (opt_.schedule) {
                const auto decision = end_of_epoch(vbpc, sched_, adam_);
                if (decision == EpochDecision::stop) {
                    result.status = RunStatus::early_stopped;
                    result.iterations = iters_;
                    result.skipped_updates = skipped_updates_;
                    if (!opt_.checkpoint_path.empty())
                        save(opt_.checkpoint_path, "early_stopped");
                    return result;
                }
            }
            if (!opt_.checkpoint_path.empty()) save(opt_.checkpoint_path);
        }
        result.status = RunStatus::completed;
        result.iterations = iters_;
        result.skipped_updates = skipped_updates_;
        if (!opt_.checkpoint_path.empty()) save(opt_.checkpoint_path, "completed");
        return result;
    }

  private:
    Model<Real>& model_;
    const data::Corpus& corpus_;
    TrainOptions opt_;
    AdamState<Real> adam_;
    ScheduleState sched_;
    std::mt19937_64 crop_rng_;
    ModelState<Real> carried_;
    int64_t epoch_ = 0, iters_ = 0;
    int64_t current_chunk_ = 0, current_offset_ = 0;
    int64_t skipped_updates_ = 0;
    bool mid_epoch_resume_ = false;
    int64_t resume_chunk_ = 0, resume_offset_ = 0;

    double train_chunk(const data::Batch& b, int64_t& z1_on, int64_t& z1_n, int64_t& z2_on,
                       int64_t& z2_n) {
        const int64_t B = b.batch, L = b.seq_len;
        Tape<Real> tape;
        auto out = model_.forward_sequence(tape, b.input, B, L, carried_);
        Var acc;
        std::vector<int32_t> targets_t(static_cast<size_t>(B));
        for (int64_t s = 0; s < L; ++s) {
            for (int64_t r = 0; r < B; ++r)
                targets_t[static_cast<size_t>(r)] = b.target[static_cast<size_t>(r * L + s)];
            Var l = tape.softmax_cross_entropy(out.step_logits[static_cast<size_t>(s)],
                                               targets_t);
            acc = acc.valid() ? tape.add(acc, l) : l;
        }
        Var mean_xent = tape.affine(acc, Real(1) / Real(L), Real(0));
        Var loss = loss_with_penalty(tape, mean_xent, out.vars, model_,
                                     static_cast<Real>(opt_.l2));
        const double lval = static_cast<double>(tape.value(loss).data[0]);
        if (!std::isfinite(lval)) return lval;

        model_.zero_grads();
        tape.backward(loss);
        auto params = model_.parameters();
        const Real norm = clip_global_norm(params, static_cast<Real>(opt_.clip));
        // The straight-through boundary gradients are heavy-tailed; a
        // backward pass can overflow at low precision even when the loss is
        // fine. Skip the update rather than poison the parameters.
        if (std::isfinite(double(norm)))
            adam_step(params, adam_);
        else
            ++skipped_updates_;

        for (const auto& z : out.z1)
            for (Real v : z.data) {
                z1_on += v == Real(1);
                ++z1_n;
            }
        for (const auto& z : out.z2)
            for (Real v : z.data) {
                z2_on += v == Real(1);
                ++z2_n;
            }
        return lval;
    }
};

}  // namespace hmlab::training

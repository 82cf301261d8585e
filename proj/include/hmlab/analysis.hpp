#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hmlab/data.hpp"
#include "hmlab/model.hpp"

namespace hmlab::analysis {

// Per-character boundary decisions aligned to the input text, with summary
// statistics. z2 is empty for 2-layer stacks.
struct SegmentationRecord {
    std::string text;
    std::vector<uint8_t> z1, z2;
    double freq1 = 0.0, freq2 = 0.0;
    bool ratio_defined = false;
    double z_ratio = 0.0;
};

// freq(z1)/freq(z2) with the reporting convention: 0/positive = 0,
// positive/0 and 0/0 are undefined.
inline void compute_stats(SegmentationRecord& r) {
    auto freq = [](const std::vector<uint8_t>& z) {
        if (z.empty()) return 0.0;
        int64_t n = 0;
        for (uint8_t v : z) n += v;
        return static_cast<double>(n) / static_cast<double>(z.size());
    };
    r.freq1 = freq(r.z1);
    r.freq2 = freq(r.z2);
    if (r.freq2 > 0.0) {
        r.ratio_defined = true;
        r.z_ratio = r.freq1 / r.freq2;
    } else {
        r.ratio_defined = false;
        r.z_ratio = 0.0;
    }
}

struct Agreement {
    bool precision_defined = false, recall_defined = false, f1_defined = false;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};

// Precision/recall/F1 of z=1 positions against whitespace positions.
// `align_offset` shifts predictions before matching (0 = the boundary fires
// on the step that consumes the space).
inline Agreement boundary_agreement(const SegmentationRecord& r, int level,
                                    int align_offset = 0) {
    const auto& z = level == 1 ? r.z1 : r.z2;
    require(level == 1 || level == 2, "agreement level must be 1 or 2");
    require(z.size() == r.text.size(), "record z/text length mismatch");
    int64_t tp = 0, pred = 0, gold = 0;
    for (size_t i = 0; i < r.text.size(); ++i) {
        const bool is_gold = r.text[i] == ' ';
        const int64_t pi = static_cast<int64_t>(i) + align_offset;
        const bool is_pred =
            pi >= 0 && pi < static_cast<int64_t>(z.size()) && z[static_cast<size_t>(pi)] == 1;
        gold += is_gold;
        if (is_gold && is_pred) ++tp;
    }
    for (uint8_t v : z) pred += v;
    Agreement a;
    if (pred > 0) {
        a.precision_defined = true;
        a.precision = static_cast<double>(tp) / static_cast<double>(pred);
    }
    if (gold > 0) {
        a.recall_defined = true;
        a.recall = static_cast<double>(tp) / static_cast<double>(gold);
    }
    if (a.precision_defined && a.recall_defined && a.precision + a.recall > 0) {
        a.f1_defined = true;
        a.f1 = 2.0 * a.precision * a.recall / (a.precision + a.recall);
    }
    return a;
}

// tsv: one line per character "char<TAB>z1<TAB>z2" with \t, \n and \\
// escaped in the character column. pgm: binary P5, one column per character,
// z1 on the top row and z2 below, black (0) where z = 1.
void render_tsv(const SegmentationRecord& r, const std::string& path);
SegmentationRecord parse_tsv(const std::string& path);
void render_pgm(const SegmentationRecord& r, const std::string& path);

// Test-set entropy in base 2 divided by the number of predicted characters,
// processed with batch size 1 in consecutive chunks with carried state.
template <typename Real>
double evaluate_bpc(Model<Real>& model, const std::vector<int32_t>& test_ids,
                    int64_t chunk = 100) {
    require(chunk >= 1, "chunk length must be >= 1");
    require(test_ids.size() >= 2, "test set needs at least 2 characters");
    const int64_t n = static_cast<int64_t>(test_ids.size());
    auto state = model.initial_state(1);
    double total_nats = 0.0;
    int64_t pos = 0;
    while (pos < n - 1) {
        const int64_t len = std::min<int64_t>(chunk, n - 1 - pos);
        std::vector<int32_t> input(test_ids.begin() + pos, test_ids.begin() + pos + len);
        Tape<Real> tape;
        auto out = model.forward_sequence(tape, input, 1, len, state);
        for (int64_t j = 0; j < len; ++j) {
            Var nll = tape.cross_entropy_rows(out.step_logits[j],
                                              {test_ids[static_cast<size_t>(pos + j + 1)]});
            total_nats += static_cast<double>(tape.value(nll).data[0]);
        }
        pos += len;
    }
    return total_nats / std::log(2.0) / static_cast<double>(n - 1);
}

// Runs the boundary-producing model over a text with carried state and
// records z1/z2 for every character.
template <typename Real>
SegmentationRecord extract_segmentation(Model<Real>& model, const std::string& text,
                                        const data::Vocabulary& vocab, int64_t chunk = 100) {
    require(model.config().arch != Arch::lstm,
            "segmentation requires a boundary-producing architecture (hmlstm or hmrnn)");
    require(!text.empty(), "cannot segment empty text");
    SegmentationRecord r;
    r.text = text;
    auto state = model.initial_state(1);
    const int64_t n = static_cast<int64_t>(text.size());
    int64_t pos = 0;
    while (pos < n) {
        const int64_t len = std::min<int64_t>(chunk, n - pos);
        std::vector<int32_t> input(static_cast<size_t>(len));
        for (int64_t j = 0; j < len; ++j)
            input[static_cast<size_t>(j)] =
                vocab.encode(static_cast<uint8_t>(text[static_cast<size_t>(pos + j)]));
        Tape<Real> tape;
        auto out = model.forward_sequence(tape, input, 1, len, state);
        for (int64_t j = 0; j < len; ++j) {
            r.z1.push_back(out.z1[static_cast<size_t>(j)].data[0] == Real(1) ? 1 : 0);
            if (!out.z2.empty())
                r.z2.push_back(out.z2[static_cast<size_t>(j)].data[0] == Real(1) ? 1 : 0);
        }
        pos += len;
    }
    compute_stats(r);
    return r;
}

}  // namespace hmlab::analysis

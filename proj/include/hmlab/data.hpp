#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace hmlab::data {

// Byte-level vocabulary built from the training split only. Ids are dense,
// ordered by codepoint, with one reserved unknown id at the end for
// characters that only appear in valid/test.
struct Vocabulary {
    std::vector<uint8_t> id_to_char;
    std::array<int32_t, 256> char_to_id{};
    int32_t unk_id = 0;

    int32_t size() const { return static_cast<int32_t>(id_to_char.size()) + 1; }

    int32_t encode(uint8_t c) const {
        const int32_t id = char_to_id[c];
        return id >= 0 ? id : unk_id;
    }

    // unk renders as '\xff' placeholder when decoding
    char decode(int32_t id) const {
        return id == unk_id ? '\xff' : static_cast<char>(id_to_char[static_cast<size_t>(id)]);
    }

    static Vocabulary build(const std::string& train_text);
};

struct CorpusSplits {
    std::vector<int32_t> train, valid, test;
};

enum class CorpusMode { ptb_char, text8, raw };

struct Corpus {
    CorpusSplits splits;
    Vocabulary vocab;
};

struct CorpusPaths {
    std::string train, valid, test;  // three-file form (ptb_char, raw)
    std::string single;              // single-file form (text8, raw)
};

CorpusMode parse_mode(const std::string& s);

// Builds the vocabulary from the train split and encodes all three splits.
Corpus corpus_from_text(const std::string& train_text, const std::string& valid_text,
                        const std::string& test_text);

Corpus load_corpus(const CorpusPaths& paths, CorpusMode mode);

// One epoch of [B x L] chunks over a character-id split: a start offset,
// tail-truncation so the usable length divides B*L, and B contiguous lanes
// so recurrent state can be carried across consecutive chunks of a lane.
struct Batch {
    std::vector<int32_t> input, target;  // row-major [B x L]
    int64_t batch = 0, seq_len = 0;
};

class EpochBatcher {
  public:
    EpochBatcher(const std::vector<int32_t>& split, int64_t batch, int64_t seq_len,
                 int64_t offset);

    static int64_t pick_offset(int64_t split_len, int64_t batch, int64_t seq_len,
                               std::mt19937_64& rng);

    int64_t chunk_count() const { return chunk_count_; }
    int64_t chunk_index() const { return chunk_index_; }
    void seek(int64_t chunk_index) { chunk_index_ = chunk_index; }
    int64_t offset() const { return offset_; }

    bool next(Batch& out);

  private:
    const std::vector<int32_t>* split_;
    int64_t batch_, seq_len_, offset_, lane_len_, chunk_count_, chunk_index_ = 0;
};

}  // namespace hmlab::data

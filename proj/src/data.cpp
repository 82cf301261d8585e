#include "hmlab/data.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace hmlab::data {

Vocabulary Vocabulary::build(const std::string& train_text) {
    std::set<uint8_t> seen(train_text.begin(), train_text.end());
    Vocabulary v;
    v.char_to_id.fill(-1);
    for (uint8_t c : seen) {
        v.char_to_id[c] = static_cast<int32_t>(v.id_to_char.size());
        v.id_to_char.push_back(c);
    }
    v.unk_id = static_cast<int32_t>(v.id_to_char.size());
    return v;
}

CorpusMode parse_mode(const std::string& s) {
    if (s == "ptb_char") return CorpusMode::ptb_char;
    if (s == "text8") return CorpusMode::text8;
    if (s == "raw") return CorpusMode::raw;
    throw std::invalid_argument("unknown corpus mode '" + s +
                                "' (expected ptb_char, text8 or raw)");
}

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    if (text.empty()) throw std::runtime_error("empty corpus file " + path);
    return text;
}

std::vector<int32_t> encode_all(const std::string& text, const Vocabulary& v) {
    std::vector<int32_t> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(v.encode(c));
    return ids;
}

bool is_text8_alphabet(const std::string& text) {
    for (unsigned char c : text)
        if (c != ' ' && (c < 'a' || c > 'z')) return false;
    return true;
}

constexpr int64_t kText8Train = 90'000'000;
constexpr int64_t kText8Holdout = 5'000'000;

}  // namespace

Corpus corpus_from_text(const std::string& train_text, const std::string& valid_text,
                        const std::string& test_text) {
    Corpus c;
    c.vocab = Vocabulary::build(train_text);
    c.splits.train = encode_all(train_text, c.vocab);
    c.splits.valid = encode_all(valid_text, c.vocab);
    c.splits.test = encode_all(test_text, c.vocab);
    return c;
}

Corpus load_corpus(const CorpusPaths& paths, CorpusMode mode) {
    if (mode == CorpusMode::ptb_char || (mode == CorpusMode::raw && paths.single.empty())) {
        return corpus_from_text(read_file(paths.train), read_file(paths.valid),
                                read_file(paths.test));
    }
    // single-file modes: text8 exact 90M/5M/5M, else proportional 90/5/5
    const std::string text = read_file(paths.single);
    if (mode == CorpusMode::text8 && !is_text8_alphabet(text)) {
        std::cerr << "warning: " << paths.single
                  << " contains characters outside [a-z ]; falling back to raw mode\n";
        mode = CorpusMode::raw;
    }
    const int64_t n = static_cast<int64_t>(text.size());
    int64_t train_n, valid_n;
    if (mode == CorpusMode::text8 && n >= kText8Train + 2 * kText8Holdout) {
        train_n = kText8Train;
        valid_n = kText8Holdout;
    } else {
        train_n = n * 90 / 100;
        valid_n = n * 5 / 100;
    }
    if (train_n < 1 || valid_n < 1 || n - train_n - valid_n < 1)
        throw std::runtime_error("corpus too short to split: " + std::to_string(n) +
                                 " characters");
    return corpus_from_text(text.substr(0, static_cast<size_t>(train_n)),
                            text.substr(static_cast<size_t>(train_n),
                                        static_cast<size_t>(valid_n)),
                            text.substr(static_cast<size_t>(train_n + valid_n)));
}

EpochBatcher::EpochBatcher(const std::vector<int32_t>& split, int64_t batch, int64_t seq_len,
                           int64_t offset)
    : split_(&split), batch_(batch), seq_len_(seq_len), offset_(offset) {
    const int64_t n = static_cast<int64_t>(split.size());
    const int64_t min_len = batch * seq_len + 1;
    if (n <= min_len)
        throw std::invalid_argument("split of " + std::to_string(n) +
                                    " ids is too short; need more than " +
                                    std::to_string(min_len) +
                                    " (batch * seq_len + 1) characters");
    if (offset < 0 || offset + min_len > n)
        throw std::invalid_argument("epoch offset " + std::to_string(offset) +
                                    " out of range");
    const int64_t usable = (n - 1 - offset) / (batch * seq_len) * (batch * seq_len);
    lane_len_ = usable / batch;
    chunk_count_ = lane_len_ / seq_len;
}

int64_t EpochBatcher::pick_offset(int64_t split_len, int64_t batch, int64_t seq_len,
                                  std::mt19937_64& rng) {
    const int64_t max_off =
        std::min<int64_t>(seq_len - 1, split_len - 1 - batch * seq_len);
    if (max_off <= 0) return 0;
    return static_cast<int64_t>(rng() % static_cast<uint64_t>(max_off + 1));
}

bool EpochBatcher::next(Batch& out) {
    if (chunk_index_ >= chunk_count_) return false;
    out.batch = batch_;
    out.seq_len = seq_len_;
    out.input.resize(static_cast<size_t>(batch_ * seq_len_));
    out.target.resize(static_cast<size_t>(batch_ * seq_len_));
    const auto& ids = *split_;
    for (int64_t b = 0; b < batch_; ++b) {
        const int64_t start = offset_ + b * lane_len_ + chunk_index_ * seq_len_;
        for (int64_t j = 0; j < seq_len_; ++j) {
            out.input[static_cast<size_t>(b * seq_len_ + j)] =
                ids[static_cast<size_t>(start + j)];
            out.target[static_cast<size_t>(b * seq_len_ + j)] =
                ids[static_cast<size_t>(start + j + 1)];
        }
    }
    ++chunk_index_;
    return true;
}

}  // namespace hmlab::data

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "hmlab/analysis.hpp"

using namespace hmlab;
namespace fs = std::filesystem;

namespace {

ModelConfig small_cfg(Arch arch, int vocab) {
    ModelConfig c;
    c.arch = arch;
    c.layers = 3;
    c.units = 6;
    c.embed_dim = 5;
    c.output_dim = 4;
    c.vocab_size = vocab;
    c.seed = 17;
    return c;
}

std::vector<int32_t> random_ids(int64_t n, int vocab, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<int32_t> ids(static_cast<size_t>(n));
    for (auto& v : ids) v = static_cast<int32_t>(rng() % static_cast<uint64_t>(vocab));
    return ids;
}

std::string temp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("uniform predictions score exactly log2(V) bits per character") {
    const int V = 11;
    Model<double> model(small_cfg(Arch::hmlstm, V));
    auto& W = model.at("logits/W");
    std::fill(W.value.data.begin(), W.value.data.end(), 0.0);
    auto& b = model.at("logits/b");
    std::fill(b.value.data.begin(), b.value.data.end(), 0.0);
    auto ids = random_ids(211, V, 1);
    const double bpc = analysis::evaluate_bpc(model, ids, 50);
    CHECK(bpc == doctest::Approx(std::log2(double(V))).epsilon(1e-9));
}

TEST_CASE("bpc is independent of the evaluation chunk size") {
    const int V = 7;
    Model<double> model(small_cfg(Arch::hmlstm, V));
    auto ids = random_ids(157, V, 2);
    const double whole = analysis::evaluate_bpc(model, ids, 1000);
    CHECK(analysis::evaluate_bpc(model, ids, 7) == doctest::Approx(whole).epsilon(1e-12));
    CHECK(analysis::evaluate_bpc(model, ids, 100) == doctest::Approx(whole).epsilon(1e-12));
    CHECK(analysis::evaluate_bpc(model, ids, 1) == doctest::Approx(whole).epsilon(1e-12));
}

TEST_CASE("bpc matches a hand-rolled log-sum-exp over the full sequence") {
    const int V = 5;
    Model<double> model(small_cfg(Arch::lstm, V));
    auto ids = random_ids(40, V, 3);
    const int64_t n = static_cast<int64_t>(ids.size());

    auto state = model.initial_state(1);
    Tape<double> tape;
    auto out = model.forward_sequence(tape, ids, 1, n, state);
    double nats = 0.0;
    for (int64_t j = 0; j + 1 < n; ++j) {
        const auto& row = tape.value(out.step_logits[static_cast<size_t>(j)]).data;
        double mx = row[0];
        for (double v : row) mx = std::max(mx, v);
        double se = 0.0;
        for (double v : row) se += std::exp(v - mx);
        nats += mx + std::log(se) - row[static_cast<size_t>(ids[static_cast<size_t>(j + 1)])];
    }
    const double expect = nats / std::log(2.0) / double(n - 1);
    CHECK(analysis::evaluate_bpc(model, ids, 9) == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("evaluation does not touch the parameters") {
    const int V = 6;
    Model<double> model(small_cfg(Arch::hmlstm, V));
    std::vector<std::vector<double>> before;
    for (auto* p : model.parameters()) before.push_back(p->value.data);
    analysis::evaluate_bpc(model, random_ids(60, V, 4), 13);
    size_t i = 0;
    for (auto* p : model.parameters()) CHECK(p->value.data == before[i++]);
}

TEST_CASE("boundary statistics by hand count") {
    analysis::SegmentationRecord r;
    r.text = "abcd";
    r.z1 = {1, 0, 1, 0};
    r.z2 = {1, 0, 0, 0};
    analysis::compute_stats(r);
    CHECK(r.freq1 == doctest::Approx(0.5));
    CHECK(r.freq2 == doctest::Approx(0.25));
    CHECK(r.ratio_defined);
    CHECK(r.z_ratio == doctest::Approx(2.0));

    // 42 of 100 at level 1 against 9 of 100 at level 2
    analysis::SegmentationRecord s;
    s.text.assign(100, 'x');
    s.z1.assign(100, 0);
    s.z2.assign(100, 0);
    for (int i = 0; i < 42; ++i) s.z1[static_cast<size_t>(i)] = 1;
    for (int i = 0; i < 9; ++i) s.z2[static_cast<size_t>(i)] = 1;
    analysis::compute_stats(s);
    CHECK(s.freq1 == doctest::Approx(0.42));
    CHECK(s.freq2 == doctest::Approx(0.09));
    CHECK(s.z_ratio == doctest::Approx(0.42 / 0.09));
}

TEST_CASE("ratio conventions for degenerate frequencies") {
    analysis::SegmentationRecord r;
    r.text = "ab";
    r.z1 = {0, 0};
    r.z2 = {1, 0};
    analysis::compute_stats(r);
    CHECK(r.ratio_defined);
    CHECK(r.z_ratio == 0.0);  // 0 / positive

    r.z1 = {1, 1};
    r.z2 = {0, 0};
    analysis::compute_stats(r);
    CHECK_FALSE(r.ratio_defined);  // positive / 0

    r.z1 = {0, 0};
    analysis::compute_stats(r);
    CHECK_FALSE(r.ratio_defined);  // 0 / 0
}

TEST_CASE("whitespace agreement with hand-checked counts") {
    analysis::SegmentationRecord r;
    r.text = "ab cd ";
    r.z1 = {0, 0, 1, 0, 0, 0};
    r.z2.assign(6, 0);
    auto a = analysis::boundary_agreement(r, 1);
    CHECK(a.precision_defined);
    CHECK(a.precision == doctest::Approx(1.0));
    CHECK(a.recall == doctest::Approx(0.5));
    CHECK(a.f1 == doctest::Approx(2.0 / 3.0));

    // a detector that fires one step late is rescued by align_offset = 1
    r.z1 = {0, 0, 0, 1, 0, 0};
    CHECK_FALSE(analysis::boundary_agreement(r, 1).f1_defined);
    CHECK(analysis::boundary_agreement(r, 1).f1 == 0.0);
    auto shifted = analysis::boundary_agreement(r, 1, 1);
    CHECK(shifted.precision == doctest::Approx(1.0));
    CHECK(shifted.recall == doctest::Approx(0.5));

    // no predictions: precision undefined; no gold spaces: recall undefined
    r.z1.assign(6, 0);
    auto none = analysis::boundary_agreement(r, 1);
    CHECK_FALSE(none.precision_defined);
    CHECK(none.recall_defined);
    analysis::SegmentationRecord g;
    g.text = "abc";
    g.z1 = {1, 0, 0};
    g.z2.assign(3, 0);
    auto nogold = analysis::boundary_agreement(g, 1);
    CHECK(nogold.precision_defined);
    CHECK_FALSE(nogold.recall_defined);
}

TEST_CASE("tsv roundtrip preserves escaped characters and boundaries") {
    analysis::SegmentationRecord r;
    r.text = "a\tb\nc\\d ";
    r.z1 = {1, 0, 0, 1, 0, 0, 1, 0};
    r.z2 = {0, 0, 0, 1, 0, 0, 0, 0};
    analysis::compute_stats(r);
    const auto path = temp_path("hmlab_seg.tsv");
    analysis::render_tsv(r, path);
    auto back = analysis::parse_tsv(path);
    CHECK(back.text == r.text);
    CHECK(back.z1 == r.z1);
    CHECK(back.z2 == r.z2);
    CHECK(back.freq1 == doctest::Approx(r.freq1));
    CHECK(back.z_ratio == doctest::Approx(r.z_ratio));
}

TEST_CASE("pgm bytes: two rows, black where a boundary fired") {
    analysis::SegmentationRecord r;
    r.text = "abc";
    r.z1 = {1, 0, 1};
    r.z2 = {0, 0, 1};
    const auto path = temp_path("hmlab_seg.pgm");
    analysis::render_pgm(r, path);
    const std::string expected = std::string("P5\n3 2\n255\n") +
                                 std::string({'\x00', '\xff', '\x00', '\xff', '\xff', '\x00'});
    CHECK(read_bytes(path) == expected);
}

TEST_CASE("segmentation extraction covers the text and is chunk-invariant") {
    Model<double> model(small_cfg(Arch::hmlstm, 30));
    const std::string text = "the cat sat on the mat";
    auto vocab = data::Vocabulary::build(text);
    auto r1 = analysis::extract_segmentation(model, text, vocab, 5);
    auto r2 = analysis::extract_segmentation(model, text, vocab, 100);
    CHECK(r1.z1.size() == text.size());
    CHECK(r1.z2.size() == text.size());
    for (auto v : r1.z1) CHECK((v == 0 || v == 1));
    CHECK(r1.z1 == r2.z1);
    CHECK(r1.z2 == r2.z2);
    int64_t on = 0;
    for (auto v : r1.z1) on += v;
    CHECK(r1.freq1 == doctest::Approx(double(on) / double(text.size())));
}

TEST_CASE("segmentation refuses an architecture without boundaries") {
    Model<double> model(small_cfg(Arch::lstm, 30));
    auto vocab = data::Vocabulary::build("ab");
    CHECK_THROWS_WITH_AS(analysis::extract_segmentation(model, "ab", vocab),
                         doctest::Contains("boundary-producing"), std::invalid_argument);
}

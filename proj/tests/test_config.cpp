#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hmlab/config.hpp"

using namespace hmlab;

TEST_CASE("explicit keys override defaults, the rest keep theirs") {
    auto cfg = config::parse_config_text("arch = hmlstm\nunits = 512\n");
    CHECK(cfg.arch == "hmlstm");
    CHECK(cfg.units == 512);
    CHECK(cfg.seq_len == 100);
    CHECK(cfg.batch_size == 64);
    CHECK(cfg.lr == doctest::Approx(0.002));
    CHECK(cfg.parsed_arch() == Arch::hmlstm);
    CHECK(cfg.parsed_precision() == config::Precision::float32);
}

TEST_CASE("comments, blank lines and whitespace around '='") {
    auto cfg = config::parse_config_text(
        "# a run\n"
        "\n"
        "  layers=2   # trailing comment\n"
        "copy_last =true\n"
        "slope_alpha= 0.25\n");
    CHECK(cfg.layers == 2);
    CHECK(cfg.copy_last);
    CHECK(cfg.slope_alpha == doctest::Approx(0.25));
}

TEST_CASE("defaults appear in the effective-config echo") {
    auto cfg = config::parse_config_text("units = 64\n");
    std::ostringstream os;
    config::log_effective(cfg, os);
    const auto text = os.str();
    CHECK(text.find("seq_len=100\n") != std::string::npos);
    CHECK(text.find("units=64\n") != std::string::npos);
    CHECK(text.find("arch=hmlstm\n") != std::string::npos);
    CHECK(text.find("ln_embeddings=false\n") != std::string::npos);
}

TEST_CASE("ln_embeddings follows layer_norm unless set") {
    CHECK(config::parse_config_text("layer_norm = true\n").ln_on_embeddings_effective());
    CHECK_FALSE(config::parse_config_text("layer_norm = true\nln_embeddings = false\n")
                    .ln_on_embeddings_effective());
    auto m = config::parse_config_text("layer_norm = true\n").model_config(30);
    CHECK(m.use_layer_norm);
    CHECK(m.ln_on_embeddings);
}

TEST_CASE("errors carry origin and line number") {
    CHECK_THROWS_WITH_AS(config::parse_config_text("units\n", "bad.cfg"),
                         doctest::Contains("bad.cfg:1"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(config::parse_config_text("arch = hmlstm\nwidth = 3\n", "bad.cfg"),
                         doctest::Contains("bad.cfg:2: unknown key 'width'"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(config::parse_config_text("units = twelve\n", "bad.cfg"),
                         doctest::Contains("bad.cfg:1"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(config::parse_config_text("layer_norm = maybe\n", "bad.cfg"),
                         doctest::Contains("boolean"), std::invalid_argument);
}

TEST_CASE("semantic validation") {
    CHECK_THROWS_WITH_AS(config::parse_config_text("slope_alpha = 0\n"),
                         doctest::Contains("slope_alpha"), std::invalid_argument);
    CHECK_THROWS_AS(config::parse_config_text("arch = gru\n"), std::invalid_argument);
    CHECK_THROWS_AS(config::parse_config_text("precision = half\n"), std::invalid_argument);
    CHECK_THROWS_AS(config::parse_config_text("layers = 1\n"), std::invalid_argument);
    CHECK_THROWS_AS(config::parse_config_text("lr = -0.1\n"), std::invalid_argument);
    CHECK_THROWS_AS(config::parse_config_text("data_mode = zip\n"), std::invalid_argument);
    CHECK_THROWS_AS(config::parse_config_text("output_head = tall\n"), std::invalid_argument);
}

TEST_CASE("file parsing matches in-memory parsing") {
    namespace fs = std::filesystem;
    const auto path = (fs::temp_directory_path() / "hmlab_cfg_test.cfg").string();
    std::ofstream(path) << "arch = hmrnn\nunits = 32\nprecision = float64\n";
    auto cfg = config::parse_config(path);
    CHECK(cfg.parsed_arch() == Arch::hmrnn);
    CHECK(cfg.units == 32);
    CHECK(cfg.parsed_precision() == config::Precision::float64);
    CHECK_THROWS_AS(config::parse_config("/nonexistent/x.cfg"), std::runtime_error);
}

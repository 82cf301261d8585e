#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "hmlab/model.hpp"

namespace hmlab::config {

enum class Precision { float32, float64 };

// Flat key-value run configuration: one `key = value` per line, `#`
// comments. Unknown keys are rejected; omitted keys take the defaults
// below and are echoed to the run log.
struct RunConfig {
    // model
    std::string arch = "hmlstm";
    int layers = 3;
    int units = 512;
    int embed_dim = 128;
    int output_dim = 128;
    std::string output_head = "gated";
    bool layer_norm = false;
    int ln_embeddings = -1;  // -1 = follow layer_norm
    bool copy_last = false;
    bool no_top_down = false;
    double slope_alpha = 0.5;
    double ln_eps = 1e-5;
    std::string precision = "float32";
    uint64_t seed = 1;

    // data
    std::string data_mode = "raw";
    std::string data_path;
    std::string train_path, valid_path, test_path;

    // training
    int64_t batch_size = 64;
    int64_t seq_len = 100;
    double lr = 0.002;
    double clip = 1.0;
    double l2 = 0.0005;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    bool schedule = true;
    int patience = 4;
    double lr_divisor = 50.0;
    int64_t max_epochs = 500;
    int64_t max_iters = 0;
    bool carry_state = true;
    int64_t eval_chunk = 100;
    std::string out_dir = "runs";

    bool ln_on_embeddings_effective() const {
        return ln_embeddings < 0 ? layer_norm : ln_embeddings != 0;
    }

    Arch parsed_arch() const;
    Precision parsed_precision() const;
    ModelConfig model_config(int vocab_size) const;

    void validate() const;
};

RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<string>");

// Echoes every effective key (explicit or default) as key=value lines.
void log_effective(const RunConfig& c, std::ostream& os);

}  // namespace hmlab::config

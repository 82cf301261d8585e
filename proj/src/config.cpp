#include "hmlab/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace hmlab::config {

namespace {

struct Field {
    std::string name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("expected a boolean, got '" + v + "'");
}

template <typename T>
T parse_num(const std::string& v) {
    std::istringstream is(v);
    T out;
    is >> out;
    if (is.fail() || !is.eof())
        throw std::invalid_argument("cannot parse '" + v + "' as a number");
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

const std::vector<Field>& fields() {
    static const std::vector<Field> f = [] {
        std::vector<Field> v;
        auto str = [&](const char* n, std::string RunConfig::*m) {
            v.push_back({n, [m](RunConfig& c, const std::string& s) { c.*m = s; },
                         [m](const RunConfig& c) { return c.*m; }});
        };
        auto boolean = [&](const char* n, bool RunConfig::*m) {
            v.push_back({n, [m](RunConfig& c, const std::string& s) { c.*m = parse_bool(s); },
                         [m](const RunConfig& c) { return c.*m ? "true" : "false"; }});
        };
        auto integer = [&](const char* n, auto RunConfig::*m) {
            v.push_back({n,
                         [m](RunConfig& c, const std::string& s) {
                             c.*m = parse_num<std::decay_t<decltype(std::declval<RunConfig>().*m)>>(s);
                         },
                         [m](const RunConfig& c) { return std::to_string(c.*m); }});
        };
        auto real = [&](const char* n, double RunConfig::*m) {
            v.push_back({n, [m](RunConfig& c, const std::string& s) { c.*m = parse_num<double>(s); },
                         [m](const RunConfig& c) {
                             std::ostringstream os;
                             os << c.*m;
                             return os.str();
                         }});
        };

        str("arch", &RunConfig::arch);
        integer("layers", &RunConfig::layers);
        integer("units", &RunConfig::units);
        integer("embed_dim", &RunConfig::embed_dim);
        integer("output_dim", &RunConfig::output_dim);
        str("output_head", &RunConfig::output_head);
        boolean("layer_norm", &RunConfig::layer_norm);
        v.push_back({"ln_embeddings",
                     [](RunConfig& c, const std::string& s) {
                         c.ln_embeddings = parse_bool(s) ? 1 : 0;
                     },
                     [](const RunConfig& c) {
                         return c.ln_on_embeddings_effective() ? "true" : "false";
                     }});
        boolean("copy_last", &RunConfig::copy_last);
        boolean("no_top_down", &RunConfig::no_top_down);
        real("slope_alpha", &RunConfig::slope_alpha);
        real("ln_eps", &RunConfig::ln_eps);
        str("precision", &RunConfig::precision);
        integer("seed", &RunConfig::seed);
        str("data_mode", &RunConfig::data_mode);
        str("data_path", &RunConfig::data_path);
        str("train_path", &RunConfig::train_path);
        str("valid_path", &RunConfig::valid_path);
        str("test_path", &RunConfig::test_path);
        integer("batch_size", &RunConfig::batch_size);
        integer("seq_len", &RunConfig::seq_len);
        real("lr", &RunConfig::lr);
        real("clip", &RunConfig::clip);
        real("l2", &RunConfig::l2);
        real("adam_beta1", &RunConfig::adam_beta1);
        real("adam_beta2", &RunConfig::adam_beta2);
        real("adam_eps", &RunConfig::adam_eps);
        boolean("schedule", &RunConfig::schedule);
        integer("patience", &RunConfig::patience);
        real("lr_divisor", &RunConfig::lr_divisor);
        integer("max_epochs", &RunConfig::max_epochs);
        integer("max_iters", &RunConfig::max_iters);
        boolean("carry_state", &RunConfig::carry_state);
        integer("eval_chunk", &RunConfig::eval_chunk);
        str("out_dir", &RunConfig::out_dir);
        return v;
    }();
    return f;
}

const Field* find_field(const std::string& name) {
    for (const auto& f : fields())
        if (f.name == name) return &f;
    return nullptr;
}

}  // namespace

Arch RunConfig::parsed_arch() const {
    if (arch == "lstm") return Arch::lstm;
    if (arch == "hmlstm") return Arch::hmlstm;
    if (arch == "hmrnn") return Arch::hmrnn;
    throw std::invalid_argument("unknown arch '" + arch + "'");
}

Precision RunConfig::parsed_precision() const {
    if (precision == "float32") return Precision::float32;
    if (precision == "float64") return Precision::float64;
    throw std::invalid_argument("unknown precision '" + precision + "'");
}

ModelConfig RunConfig::model_config(int vocab_size) const {
    ModelConfig m;
    m.arch = parsed_arch();
    m.layers = layers;
    m.units = units;
    m.embed_dim = embed_dim;
    m.output_dim = output_dim;
    m.vocab_size = vocab_size;
    m.use_layer_norm = layer_norm;
    m.ln_on_embeddings = ln_on_embeddings_effective();
    m.copy_last = copy_last;
    m.no_top_down = no_top_down;
    m.slope_alpha = slope_alpha;
    m.ln_eps = ln_eps;
    m.output_head = output_head == "simple" ? OutputHead::simple : OutputHead::gated;
    m.seed = seed;
    return m;
}

void RunConfig::validate() const {
    parsed_arch();
    parsed_precision();
    if (output_head != "gated" && output_head != "simple")
        throw std::invalid_argument("output_head must be 'gated' or 'simple'");
    if (slope_alpha <= 0) throw std::invalid_argument("slope_alpha must be > 0");
    if (units <= 0 || embed_dim <= 0 || output_dim <= 0 || layers < 2)
        throw std::invalid_argument("model dimensions must be positive (layers >= 2)");
    if (batch_size < 1 || seq_len < 1)
        throw std::invalid_argument("batch_size and seq_len must be >= 1");
    if (lr <= 0 || clip <= 0 || l2 < 0)
        throw std::invalid_argument("need lr > 0, clip > 0, l2 >= 0");
    if (patience < 0 || lr_divisor <= 1)
        throw std::invalid_argument("need patience >= 0 and lr_divisor > 1");
    if (data_mode != "raw" && data_mode != "ptb_char" && data_mode != "text8")
        throw std::invalid_argument("data_mode must be raw, ptb_char or text8");
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                        ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const Field* f = find_field(key);
        if (!f)
            throw std::invalid_argument(origin + ":" + std::to_string(line_no) +
                                        ": unknown key '" + key + "'");
        try {
            f->set(cfg, value);
        } catch (const std::exception& e) {
            throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": " +
                                        e.what());
        }
    }
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        throw std::invalid_argument(origin + ": " + e.what());
    }
    return cfg;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

void log_effective(const RunConfig& c, std::ostream& os) {
    for (const auto& f : fields()) os << f.name << "=" << f.get(c) << "\n";
}

}  // namespace hmlab::config

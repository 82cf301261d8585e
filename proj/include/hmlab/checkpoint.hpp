#pragma once

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "hmlab/data.hpp"
#include "hmlab/model.hpp"
#include "hmlab/training.hpp"

// Checkpoint file: magic "HMLB", little-endian u32 format version, a
// length-prefixed (u64) JSON metadata document (config, vocabulary,
// optimizer/schedule scalars, ordered tensor manifest with
// name/shape/dtype/offset/checksum), then raw little-endian IEEE-754
// payloads in manifest order.
namespace hmlab::checkpoint {

constexpr uint32_t kFormatVersion = 1;
constexpr char kMagic[4] = {'H', 'M', 'L', 'B'};

struct ResumeInfo {
    int64_t epoch = 0;
    int64_t chunk_index = 0;
    int64_t epoch_offset = 0;
    int64_t iterations = 0;
    std::string crop_rng;  // serialized mt19937_64 state
    bool has_model_state = false;
    std::string status = "in_progress";
};

template <typename Real>
struct Checkpoint {
    ModelConfig model_cfg;
    data::Vocabulary vocab;
    training::AdamState<Real> adam;
    training::ScheduleState schedule;
    ResumeInfo resume;
    std::map<std::string, Tensor<Real>> params;
    ModelState<Real> model_state;
};

namespace detail {

inline uint64_t fnv1a_bytes(const char* data, size_t n) {
    uint64_t h = 1469598103934665603ull;
    for (size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 1099511628211ull;
    }
    return h;
}

template <typename Real>
const char* dtype_name() {
    return sizeof(Real) == 4 ? "f32" : "f64";
}

inline nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"arch", arch_name(c.arch)},        {"layers", c.layers},
            {"units", c.units},                 {"embed_dim", c.embed_dim},
            {"output_dim", c.output_dim},       {"vocab_size", c.vocab_size},
            {"use_layer_norm", c.use_layer_norm}, {"ln_on_embeddings", c.ln_on_embeddings},
            {"copy_last", c.copy_last},         {"no_top_down", c.no_top_down},
            {"slope_alpha", c.slope_alpha},     {"ln_eps", c.ln_eps},
            {"output_head", c.output_head == OutputHead::gated ? "gated" : "simple"},
            {"seed", c.seed}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    const std::string arch = j.at("arch");
    c.arch = arch == "lstm" ? Arch::lstm : arch == "hmrnn" ? Arch::hmrnn : Arch::hmlstm;
    c.layers = j.at("layers");
    c.units = j.at("units");
    c.embed_dim = j.at("embed_dim");
    c.output_dim = j.at("output_dim");
    c.vocab_size = j.at("vocab_size");
    c.use_layer_norm = j.at("use_layer_norm");
    c.ln_on_embeddings = j.at("ln_on_embeddings");
    c.copy_last = j.at("copy_last");
    c.no_top_down = j.at("no_top_down");
    c.slope_alpha = j.at("slope_alpha");
    c.ln_eps = j.at("ln_eps");
    c.output_head =
        j.at("output_head") == "gated" ? OutputHead::gated : OutputHead::simple;
    c.seed = j.at("seed");
    return c;
}

}  // namespace detail

template <typename Real>
void save(const std::string& path, Model<Real>& model,
          const training::AdamState<Real>& adam, const training::ScheduleState& sched,
          const data::Vocabulary& vocab, const ResumeInfo& resume,
          const ModelState<Real>* state = nullptr) {
    using nlohmann::json;

    // ordered tensor list: params, adam moments, carried state
    std::vector<std::pair<std::string, const Tensor<Real>*>> tensors;
    for (auto* p : model.parameters()) tensors.emplace_back("param/" + p->name, &p->value);
    for (const auto& [name, mv] : adam.moments) {
        tensors.emplace_back("adam/m/" + name, &mv.first);
        tensors.emplace_back("adam/v/" + name, &mv.second);
    }
    if (state) {
        for (size_t k = 0; k < state->layers.size(); ++k) {
            const std::string pre = "state/layer" + std::to_string(k);
            const auto& ls = state->layers[k];
            tensors.emplace_back(pre + "/h", &ls.h);
            if (!ls.c.data.empty()) tensors.emplace_back(pre + "/c", &ls.c);
            if (!ls.z.data.empty()) tensors.emplace_back(pre + "/z", &ls.z);
        }
    }

    json manifest = json::array();
    uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        const uint64_t bytes = static_cast<uint64_t>(t->size()) * sizeof(Real);
        manifest.push_back(
            {{"name", name},
             {"shape", t->shape},
             {"dtype", detail::dtype_name<Real>()},
             {"offset", offset},
             {"fnv", detail::fnv1a_bytes(reinterpret_cast<const char*>(t->data.data()),
                                         static_cast<size_t>(bytes))}});
        offset += bytes;
    }

    json meta;
    meta["model"] = detail::config_to_json(model.config());
    meta["vocab"] = {{"chars", std::vector<int>(vocab.id_to_char.begin(),
                                                vocab.id_to_char.end())},
                     {"unk_id", vocab.unk_id}};
    meta["adam"] = {{"lr", double(adam.lr)},     {"beta1", double(adam.beta1)},
                    {"beta2", double(adam.beta2)}, {"eps", double(adam.eps)},
                    {"step", adam.step}};
    // json has no representation for infinity (dumped as null), so the
    // untouched initial best is stored as null explicitly
    meta["schedule"] = {{"best", std::isfinite(sched.best) ? nlohmann::json(sched.best)
                                                           : nlohmann::json(nullptr)},
                        {"epochs_since_improve", sched.epochs_since_improve},
                        {"divisions", sched.divisions},
                        {"patience", sched.patience},
                        {"divisor", sched.divisor}};
    meta["resume"] = {{"epoch", resume.epoch},
                      {"chunk_index", resume.chunk_index},
                      {"epoch_offset", resume.epoch_offset},
                      {"iterations", resume.iterations},
                      {"crop_rng", resume.crop_rng},
                      {"has_model_state", state != nullptr},
                      {"status", resume.status}};
    meta["manifest"] = manifest;
    const std::string meta_str = meta.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out.write(kMagic, 4);
    const uint32_t version = kFormatVersion;
    out.write(reinterpret_cast<const char*>(&version), 4);
    const uint64_t meta_len = meta_str.size();
    out.write(reinterpret_cast<const char*>(&meta_len), 8);
    out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
    for (const auto& [name, t] : tensors)
        out.write(reinterpret_cast<const char*>(t->data.data()),
                  static_cast<std::streamsize>(t->size() * sizeof(Real)));
    if (!out) throw std::runtime_error("short write on checkpoint " + path);
}

template <typename Real>
Checkpoint<Real> load(const std::string& path) {
    using nlohmann::json;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path);
    char magic[4];
    uint32_t version = 0;
    uint64_t meta_len = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&meta_len), 8);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error(path + ": not a HMLB checkpoint (bad magic)");
    if (version != kFormatVersion)
        throw std::runtime_error(path + ": unsupported checkpoint version " +
                                 std::to_string(version));
    std::string meta_str(meta_len, '\0');
    in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
    if (!in) throw std::runtime_error(path + ": truncated metadata");
    const json meta = json::parse(meta_str);

    Checkpoint<Real> ck;
    ck.model_cfg = detail::config_from_json(meta.at("model"));
    const auto& jv = meta.at("vocab");
    ck.vocab.char_to_id.fill(-1);
    for (int c : jv.at("chars").get<std::vector<int>>()) {
        ck.vocab.char_to_id[static_cast<size_t>(c)] =
            static_cast<int32_t>(ck.vocab.id_to_char.size());
        ck.vocab.id_to_char.push_back(static_cast<uint8_t>(c));
    }
    ck.vocab.unk_id = jv.at("unk_id");
    const auto& ja = meta.at("adam");
    ck.adam.lr = static_cast<Real>(ja.at("lr").get<double>());
    ck.adam.beta1 = static_cast<Real>(ja.at("beta1").get<double>());
    ck.adam.beta2 = static_cast<Real>(ja.at("beta2").get<double>());
    ck.adam.eps = static_cast<Real>(ja.at("eps").get<double>());
    ck.adam.step = ja.at("step");
    const auto& js = meta.at("schedule");
    ck.schedule.best = js.at("best").is_null() ? std::numeric_limits<double>::infinity()
                                               : js.at("best").get<double>();
    ck.schedule.epochs_since_improve = js.at("epochs_since_improve");
    ck.schedule.divisions = js.at("divisions");
    ck.schedule.patience = js.at("patience");
    ck.schedule.divisor = js.at("divisor");
    const auto& jr = meta.at("resume");
    ck.resume.epoch = jr.at("epoch");
    ck.resume.chunk_index = jr.at("chunk_index");
    ck.resume.epoch_offset = jr.at("epoch_offset");
    ck.resume.iterations = jr.at("iterations");
    ck.resume.crop_rng = jr.at("crop_rng");
    ck.resume.has_model_state = jr.at("has_model_state");
    ck.resume.status = jr.at("status");

    std::map<std::string, Tensor<Real>> state_tensors;
    const std::streampos payload_start = in.tellg();
    for (const auto& entry : meta.at("manifest")) {
        const std::string name = entry.at("name");
        const std::vector<int64_t> shape = entry.at("shape").get<std::vector<int64_t>>();
        const std::string dtype = entry.at("dtype");
        if (dtype != detail::dtype_name<Real>())
            throw std::runtime_error(path + ": tensor " + name + " has dtype " + dtype +
                                     ", expected " + detail::dtype_name<Real>());
        Tensor<Real> t = Tensor<Real>::zeros(shape);
        in.seekg(payload_start + static_cast<std::streamoff>(entry.at("offset").get<uint64_t>()));
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.size() * sizeof(Real)));
        if (!in) throw std::runtime_error(path + ": truncated payload for tensor " + name);
        const uint64_t fnv = detail::fnv1a_bytes(
            reinterpret_cast<const char*>(t.data.data()),
            static_cast<size_t>(t.size()) * sizeof(Real));
        if (fnv != entry.at("fnv").get<uint64_t>())
            throw std::runtime_error(path + ": checksum mismatch for tensor " + name);

        if (name.rfind("param/", 0) == 0) {
            ck.params.emplace(name.substr(6), std::move(t));
        } else if (name.rfind("adam/m/", 0) == 0) {
            ck.adam.moments[name.substr(7)].first = std::move(t);
        } else if (name.rfind("adam/v/", 0) == 0) {
            ck.adam.moments[name.substr(7)].second = std::move(t);
        } else if (name.rfind("state/", 0) == 0) {
            state_tensors.emplace(name, std::move(t));
        } else {
            throw std::runtime_error(path + ": unknown tensor kind " + name);
        }
    }
    if (ck.resume.has_model_state) {
        for (int k = 0;; ++k) {
            const std::string pre = "state/layer" + std::to_string(k);
            auto ith = state_tensors.find(pre + "/h");
            if (ith == state_tensors.end()) break;
            LayerStateT<Real> ls;
            ls.h = std::move(ith->second);
            if (auto it = state_tensors.find(pre + "/c"); it != state_tensors.end())
                ls.c = std::move(it->second);
            if (auto it = state_tensors.find(pre + "/z"); it != state_tensors.end())
                ls.z = std::move(it->second);
            ck.model_state.layers.push_back(std::move(ls));
        }
    }
    return ck;
}

// Writes checkpointed parameter values into a freshly built model.
template <typename Real>
void restore_parameters(Model<Real>& model, const Checkpoint<Real>& ck) {
    for (auto* p : model.parameters()) {
        auto it = ck.params.find(p->name);
        require(it != ck.params.end(), "checkpoint is missing parameter " + p->name);
        require(it->second.shape == p->value.shape,
                "checkpoint shape mismatch for " + p->name + ": " +
                    shape_str(it->second.shape) + " vs " + shape_str(p->value.shape));
        p->value = it->second;
    }
}

}  // namespace hmlab::checkpoint

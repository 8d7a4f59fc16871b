#include "loralab/adapter_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace loralab {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian");

constexpr char kMagic[8] = {'L', 'L', 'A', 'B', 'C', 'K', 'P', 'T'};
constexpr int kVersion = 1;

struct NamedTensor {
    std::string name;
    Shape shape;
    const std::vector<double>* data;
};

void write_container(const std::string& path, json manifest,
                     const std::vector<NamedTensor>& tensors) {
    json tensor_list = json::array();
    for (const auto& t : tensors) {
        tensor_list.push_back({{"name", t.name}, {"shape", t.shape}});
    }
    manifest["tensors"] = std::move(tensor_list);
    const std::string text = manifest.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorKind::io, "checkpoint: cannot open '" + path + "' for write");
    }
    out.write(kMagic, sizeof(kMagic));
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : tensors) {
        out.write(reinterpret_cast<const char*>(t.data->data()),
                  static_cast<std::streamsize>(t.data->size() * sizeof(double)));
    }
    if (!out) {
        fail(ErrorKind::io, "checkpoint: short write to '" + path + "'");
    }
}

struct LoadedContainer {
    json manifest;
    std::vector<std::pair<std::string, Tensor>> tensors;
};

LoadedContainer read_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorKind::io, "checkpoint: cannot open '" + path + "'");
    }
    char magic[8];
    if (!in.read(magic, sizeof(magic)) ||
        std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        fail(ErrorKind::format, "checkpoint: bad magic in '" + path + "'");
    }
    std::uint64_t len = 0;
    if (!in.read(reinterpret_cast<char*>(&len), sizeof(len))) {
        fail(ErrorKind::format, "checkpoint: truncated header in '" + path + "'");
    }
    std::string text(len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
        fail(ErrorKind::format, "checkpoint: truncated manifest in '" + path + "'");
    }
    LoadedContainer out;
    try {
        out.manifest = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::format,
             "checkpoint: unparseable manifest in '" + path + "': " + e.what());
    }
    if (!out.manifest.contains("version") ||
        !out.manifest["version"].is_number_integer()) {
        fail(ErrorKind::format, "checkpoint: manifest lacks a version");
    }
    if (out.manifest["version"].get<int>() != kVersion) {
        fail(ErrorKind::version,
             "checkpoint: unsupported version " +
                 out.manifest["version"].dump() + " (expected " +
                 std::to_string(kVersion) + ")");
    }
    if (!out.manifest.contains("tensors") || !out.manifest["tensors"].is_array()) {
        fail(ErrorKind::format, "checkpoint: manifest lacks a tensor list");
    }
    for (const auto& entry : out.manifest["tensors"]) {
        const std::string name = entry.at("name").get<std::string>();
        const Shape shape = entry.at("shape").get<Shape>();
        std::vector<double> data(shape_numel(shape));
        if (!in.read(reinterpret_cast<char*>(data.data()),
                     static_cast<std::streamsize>(data.size() * sizeof(double)))) {
            fail(ErrorKind::format,
                 "checkpoint: truncated blob in '" + path + "' at tensor '" +
                     name + "'");
        }
        out.tensors.emplace_back(name, Tensor::from_data(shape, std::move(data)));
    }
    return out;
}

json role_list_to_json(const std::vector<LayerRole>& roles) {
    json arr = json::array();
    for (LayerRole role : roles) arr.push_back(layer_role_name(role));
    return arr;
}

}  // namespace

json model_config_to_json(const ModelConfig& c) {
    return json{{"vocab_size", c.vocab_size},
                {"d_model", c.d_model},
                {"n_layers", c.n_layers},
                {"n_heads", c.n_heads},
                {"d_ff", c.d_ff},
                {"max_seq", c.max_seq},
                {"adapter_rank", c.adapter_rank},
                {"adapter_alpha", c.adapter_alpha},
                {"target_modules", role_list_to_json(c.target_modules)},
                {"pretrain_samples", c.pretrain_samples},
                {"pretrain_epochs", c.pretrain_epochs},
                {"pretrain_lr", c.pretrain_lr},
                {"pretrain_batch", c.pretrain_batch}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.d_model = j.value("d_model", c.d_model);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.d_ff = j.value("d_ff", c.d_ff);
    c.max_seq = j.value("max_seq", c.max_seq);
    c.adapter_rank = j.value("adapter_rank", c.adapter_rank);
    c.adapter_alpha = j.value("adapter_alpha", c.adapter_alpha);
    if (j.contains("target_modules")) {
        c.target_modules.clear();
        for (const auto& name : j["target_modules"]) {
            c.target_modules.push_back(
                layer_role_from_name(name.get<std::string>()));
        }
    }
    c.pretrain_samples = j.value("pretrain_samples", c.pretrain_samples);
    c.pretrain_epochs = j.value("pretrain_epochs", c.pretrain_epochs);
    c.pretrain_lr = j.value("pretrain_lr", c.pretrain_lr);
    c.pretrain_batch = j.value("pretrain_batch", c.pretrain_batch);
    c.validate();
    return c;
}

void save_adapters(const Model& model, const std::string& path,
                   const std::string& seed_provenance) {
    json manifest{{"version", kVersion},
                  {"kind", "adapters"},
                  {"config", model_config_to_json(model.config)},
                  {"rank", model.config.adapter_rank},
                  {"alpha", model.config.adapter_alpha},
                  {"seed_provenance", seed_provenance}};
    std::vector<NamedTensor> tensors;
    tensors.reserve(model.adapters.adapters.size() * 2);
    for (const auto& ad : model.adapters.adapters) {
        tensors.push_back({ad.tag() + ".A", ad.a.shape(), &ad.a.data()});
        tensors.push_back({ad.tag() + ".B", ad.b.shape(), &ad.b.data()});
    }
    write_container(path, std::move(manifest), tensors);
}

AdapterCheckpoint load_adapters(const std::string& path) {
    LoadedContainer c = read_container(path);
    if (c.manifest.value("kind", "") != "adapters") {
        fail(ErrorKind::format, "checkpoint: '" + path + "' is not an adapter file");
    }
    AdapterCheckpoint out;
    out.config = model_config_from_json(c.manifest.at("config"));
    out.seed_provenance = c.manifest.value("seed_provenance", "");
    const std::size_t rank = c.manifest.at("rank").get<std::size_t>();
    const double alpha = c.manifest.at("alpha").get<double>();

    if (c.tensors.size() % 2 != 0) {
        fail(ErrorKind::format, "checkpoint: odd tensor count");
    }
    for (std::size_t i = 0; i < c.tensors.size(); i += 2) {
        const auto& [a_name, a] = c.tensors[i];
        const auto& [b_name, b] = c.tensors[i + 1];
        const std::string base = a_name.substr(0, a_name.rfind('.'));
        if (a_name != base + ".A" || b_name != base + ".B") {
            fail(ErrorKind::format,
                 "checkpoint: unpaired adapter tensors '" + a_name + "'/'" +
                     b_name + "'");
        }
        const std::size_t dot = base.find('.');
        if (base.rfind("layer", 0) != 0 || dot == std::string::npos) {
            fail(ErrorKind::format, "checkpoint: bad adapter tag '" + base + "'");
        }
        LoraAdapter ad;
        ad.layer = static_cast<std::size_t>(
            std::stoul(base.substr(5, dot - 5)));
        ad.role = layer_role_from_name(base.substr(dot + 1));
        ad.a = a;
        ad.b = b;
        ad.rank = rank;
        ad.alpha = alpha;
        if (ad.a.cols() != rank || ad.b.rows() != rank) {
            fail(ErrorKind::format,
                 "checkpoint: manifest rank " + std::to_string(rank) +
                     " does not match tensor '" + base + "' with A " +
                     shape_str(ad.a.shape()) + ", B " + shape_str(ad.b.shape()));
        }
        out.adapters.adapters.push_back(std::move(ad));
    }
    return out;
}

void attach_adapters(Model& model, const AdapterCheckpoint& checkpoint) {
    std::vector<std::string> diffs;
    const auto compare = [&diffs](const std::string& field, auto a, auto b) {
        if (a != b) {
            diffs.push_back(field);
        }
    };
    const ModelConfig& mc = model.config;
    const ModelConfig& cc = checkpoint.config;
    compare("vocab_size", mc.vocab_size, cc.vocab_size);
    compare("d_model", mc.d_model, cc.d_model);
    compare("n_layers", mc.n_layers, cc.n_layers);
    compare("n_heads", mc.n_heads, cc.n_heads);
    compare("d_ff", mc.d_ff, cc.d_ff);
    compare("max_seq", mc.max_seq, cc.max_seq);
    compare("adapter_rank", mc.adapter_rank, cc.adapter_rank);
    compare("adapter_alpha", mc.adapter_alpha, cc.adapter_alpha);
    if (mc.target_modules != cc.target_modules) diffs.push_back("target_modules");
    if (!diffs.empty()) {
        std::string msg = "attach_adapters: checkpoint config differs in:";
        for (const auto& d : diffs) msg += " " + d;
        fail(ErrorKind::compat, msg);
    }

    for (const auto& src : checkpoint.adapters.adapters) {
        LoraAdapter* dst = model.adapters.find(src.layer, src.role);
        if (dst == nullptr) {
            fail(ErrorKind::compat,
                 "attach_adapters: model has no adapter slot '" + src.tag() + "'");
        }
        dst->a.mutable_data() = src.a.data();
        dst->b.mutable_data() = src.b.data();
    }
    if (checkpoint.adapters.adapters.size() != model.adapters.adapters.size()) {
        fail(ErrorKind::compat,
             "attach_adapters: checkpoint covers " +
                 std::to_string(checkpoint.adapters.adapters.size()) +
                 " modules, model has " +
                 std::to_string(model.adapters.adapters.size()));
    }
}

void save_base(const Model& model, const std::string& path) {
    json manifest{{"version", kVersion},
                  {"kind", "base"},
                  {"config", model_config_to_json(model.config)},
                  {"build_seed", model.build_seed}};
    std::vector<NamedTensor> tensors;
    std::size_t idx = 0;
    const_cast<Model&>(model).base.for_each([&](Tensor& t) {
        tensors.push_back({"base." + std::to_string(idx++), t.shape(), &t.data()});
    });
    write_container(path, std::move(manifest), tensors);
}

Model load_base(const std::string& path) {
    LoadedContainer c = read_container(path);
    if (c.manifest.value("kind", "") != "base") {
        fail(ErrorKind::format, "checkpoint: '" + path + "' is not a base file");
    }
    ModelConfig config = model_config_from_json(c.manifest.at("config"));
    ModelConfig no_pretrain = config;
    no_pretrain.pretrain_samples = 0;
    Model model = build_model(no_pretrain, c.manifest.value("build_seed", 0ull));
    model.config = config;

    std::size_t idx = 0;
    bool shape_ok = true;
    model.base.for_each([&](Tensor& t) {
        if (idx >= c.tensors.size() || c.tensors[idx].second.shape() != t.shape()) {
            shape_ok = false;
        } else {
            t.mutable_data() = c.tensors[idx].second.data();
        }
        ++idx;
    });
    if (!shape_ok || idx != c.tensors.size()) {
        fail(ErrorKind::format, "checkpoint: base tensor list mismatch in '" +
                                    path + "'");
    }
    model.base.set_trainable(false);
    return model;
}

}  // namespace loralab

#include "rtlppa/model.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

namespace rtlppa {

using json = nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

Matrix matrix_from_json(const json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    const auto data = j.at("data").get<Vector>();
    if (data.size() != m.rows() * m.cols())
        throw Error(ErrorClass::data, "matrix data length does not match its dimensions");
    m.data() = data;
    return m;
}

json config_to_json(const ModelConfig& c) {
    return json{
        {"vocab_hash_size", c.vocab_hash_size},
        {"embed_dim", c.embed_dim},
        {"encoder_layers", c.encoder_layers},
        {"lora_rank", c.lora_rank},
        {"num_experts", c.num_experts},
        {"top_k", c.top_k},
        {"expert_hidden", c.expert_hidden},
        {"dropout", c.dropout},
        {"gate_bias", c.gate_bias},
        {"norm_epsilon", c.norm_epsilon},
        {"epochs", c.epochs},
        {"batch_size", c.batch_size},
        {"learning_rate", c.learning_rate},
        {"adam_beta1", c.adam_beta1},
        {"adam_beta2", c.adam_beta2},
        {"adam_epsilon", c.adam_epsilon},
        {"fragment_size", c.fragment_size},
        {"adapter_mode", c.adapter_mode},
        {"joint_heads", c.joint_heads},
        {"seed", c.seed},
    };
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.vocab_hash_size = j.at("vocab_hash_size").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.encoder_layers = j.at("encoder_layers").get<std::size_t>();
    c.lora_rank = j.at("lora_rank").get<std::size_t>();
    c.num_experts = j.at("num_experts").get<std::size_t>();
    c.top_k = j.at("top_k").get<std::size_t>();
    c.expert_hidden = j.at("expert_hidden").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.gate_bias = j.at("gate_bias").get<bool>();
    c.norm_epsilon = j.at("norm_epsilon").get<double>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.adam_beta1 = j.at("adam_beta1").get<double>();
    c.adam_beta2 = j.at("adam_beta2").get<double>();
    c.adam_epsilon = j.at("adam_epsilon").get<double>();
    c.fragment_size = j.at("fragment_size").get<std::size_t>();
    c.adapter_mode = j.at("adapter_mode").get<bool>();
    c.joint_heads = j.at("joint_heads").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

}  // namespace

std::size_t PpaModel::head_index(Metric m) const {
    for (std::size_t i = 0; i < metrics.size(); ++i)
        if (metrics[i] == m) return i;
    throw ConfigError(std::string("model has no head for metric ") + metric_name(m));
}

PpaModel make_model(const ModelConfig& config) {
    PpaModel model;
    model.config = config;

    Rng rng(config.seed);
    const std::uint64_t encoder_seed = rng.next_u64();
    model.encoder = make_encoder(config.vocab_hash_size, config.embed_dim,
                                 config.encoder_layers, config.lora_rank, encoder_seed);
    for (DenseLayer& layer : model.encoder.base_layers) layer.frozen = config.adapter_mode;

    model.metrics = {Metric::area, Metric::delay, Metric::total_power};
    for (Metric m : model.metrics) {
        model.heads.push_back(make_head(m, config.embed_dim, config.num_experts,
                                        config.expert_hidden, config.top_k, config.dropout,
                                        config.gate_bias, rng));
        NormalizationStats s;
        s.metric = m;
        s.epsilon = config.norm_epsilon;
        model.stats.push_back(s);
    }
    return model;
}

std::string model_to_json(const PpaModel& model) {
    json j;
    j["format"] = "rtlppa-model";
    j["format_version"] = kModelFormatVersion;
    j["config"] = config_to_json(model.config);
    j["epochs_trained"] = model.epochs_trained;
    j["stats_fitted"] = model.stats_fitted;

    json enc;
    enc["vocab_hash_size"] = model.encoder.vocab_hash_size;
    enc["embed_dim"] = model.encoder.embed_dim;
    enc["seed"] = model.encoder.seed;
    enc["embedding"] = matrix_to_json(model.encoder.embedding);
    json layers = json::array();
    for (std::size_t l = 0; l < model.encoder.num_layers(); ++l) {
        const DenseLayer& layer = model.encoder.base_layers[l];
        const LowRankAdapter& adapter = model.encoder.adapters[l];
        layers.push_back(json{
            {"weight", matrix_to_json(layer.weight)},
            {"bias", layer.bias},
            {"frozen", layer.frozen},
            {"adapter",
             json{{"A", matrix_to_json(adapter.A)},
                  {"B", matrix_to_json(adapter.B)},
                  {"rank", adapter.rank},
                  {"scale", adapter.scale}}},
        });
    }
    enc["layers"] = std::move(layers);
    j["encoder"] = std::move(enc);

    json heads = json::array();
    for (const MoEHead& head : model.heads) {
        json experts = json::array();
        for (const Expert& e : head.experts) {
            json elayers = json::array();
            for (const DenseLayer& layer : e.layers)
                elayers.push_back(json{{"weight", matrix_to_json(layer.weight)}, {"bias", layer.bias}});
            experts.push_back(json{{"layers", std::move(elayers)}, {"dropout", e.dropout}});
        }
        json gate{{"weight", matrix_to_json(head.gate.weight)}, {"has_bias", head.gate.has_bias}};
        if (head.gate.has_bias) gate["bias"] = head.gate.bias;
        heads.push_back(json{{"metric", metric_name(head.metric)},
                             {"top_k", head.top_k},
                             {"gate", std::move(gate)},
                             {"experts", std::move(experts)}});
    }
    j["heads"] = std::move(heads);

    json stats = json::array();
    for (const NormalizationStats& s : model.stats)
        stats.push_back(json{{"metric", metric_name(s.metric)},
                             {"mu", s.mu},
                             {"sigma", s.sigma},
                             {"epsilon", s.epsilon}});
    j["stats"] = std::move(stats);

    return j.dump();
}

PpaModel model_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorClass::data,
                    std::string("not a valid model artifact (expected rtlppa-model format version ") +
                        std::to_string(kModelFormatVersion) + "): " + e.what());
    }
    try {
        if (!j.is_object() || j.value("format", "") != "rtlppa-model" ||
            j.value("format_version", -1) != kModelFormatVersion)
            throw Error(ErrorClass::data,
                        "unsupported model artifact (expected rtlppa-model format version " +
                            std::to_string(kModelFormatVersion) + ")");

        PpaModel model;
        model.config = config_from_json(j.at("config"));
        model.epochs_trained = j.at("epochs_trained").get<std::size_t>();
        model.stats_fitted = j.at("stats_fitted").get<bool>();

        const json& enc = j.at("encoder");
        model.encoder.vocab_hash_size = enc.at("vocab_hash_size").get<std::size_t>();
        model.encoder.embed_dim = enc.at("embed_dim").get<std::size_t>();
        model.encoder.seed = enc.at("seed").get<std::uint64_t>();
        model.encoder.embedding = matrix_from_json(enc.at("embedding"));
        for (const json& jl : enc.at("layers")) {
            DenseLayer layer;
            layer.weight = matrix_from_json(jl.at("weight"));
            layer.bias = jl.at("bias").get<Vector>();
            layer.frozen = jl.at("frozen").get<bool>();
            model.encoder.base_layers.push_back(std::move(layer));
            const json& ja = jl.at("adapter");
            LowRankAdapter adapter;
            adapter.A = matrix_from_json(ja.at("A"));
            adapter.B = matrix_from_json(ja.at("B"));
            adapter.rank = ja.at("rank").get<std::size_t>();
            adapter.scale = ja.at("scale").get<double>();
            model.encoder.adapters.push_back(std::move(adapter));
        }

        for (const json& jh : j.at("heads")) {
            MoEHead head;
            head.metric = metric_from_name(jh.at("metric").get<std::string>());
            head.top_k = jh.at("top_k").get<std::size_t>();
            const json& jg = jh.at("gate");
            head.gate.weight = matrix_from_json(jg.at("weight"));
            head.gate.has_bias = jg.at("has_bias").get<bool>();
            if (head.gate.has_bias) head.gate.bias = jg.at("bias").get<Vector>();
            for (const json& je : jh.at("experts")) {
                Expert e;
                for (const json& jl : je.at("layers")) {
                    DenseLayer layer;
                    layer.weight = matrix_from_json(jl.at("weight"));
                    layer.bias = jl.at("bias").get<Vector>();
                    e.layers.push_back(std::move(layer));
                }
                e.dropout = je.at("dropout").get<std::vector<double>>();
                head.experts.push_back(std::move(e));
            }
            model.metrics.push_back(head.metric);
            model.heads.push_back(std::move(head));
        }

        for (const json& js : j.at("stats")) {
            NormalizationStats s;
            s.metric = metric_from_name(js.at("metric").get<std::string>());
            s.mu = js.at("mu").get<double>();
            s.sigma = js.at("sigma").get<double>();
            s.epsilon = js.at("epsilon").get<double>();
            model.stats.push_back(s);
        }
        return model;
    } catch (const json::exception& e) {
        throw Error(ErrorClass::data,
                    std::string("malformed model artifact (format version ") +
                        std::to_string(kModelFormatVersion) + "): " + e.what());
    }
}

void save_model(const PpaModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorClass::data, "cannot open model file for writing: " + path);
    out << model_to_json(model) << '\n';
    if (!out) throw Error(ErrorClass::data, "failed writing model file: " + path);
}

PpaModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorClass::data, "cannot open model file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return model_from_json(text);
}

std::vector<double> predict_normalized(const PpaModel& model, const SourceUnit& unit) {
    const PooledEmbedding o = encode(model.encoder, unit, model.config.fragment_size);
    std::vector<double> out;
    out.reserve(model.heads.size());
    for (const MoEHead& head : model.heads) out.push_back(moe_forward(head, o, false).yhat);
    return out;
}

std::vector<double> predict_physical(const PpaModel& model, const SourceUnit& unit) {
    if (!model.stats_fitted)
        throw ConfigError("model has no fitted normalization stats; train it first");
    std::vector<double> norm = predict_normalized(model, unit);
    std::vector<double> out;
    out.reserve(norm.size());
    for (std::size_t i = 0; i < norm.size(); ++i)
        out.push_back(denormalize(model.stats[i], norm[i]));
    return out;
}

std::vector<ParamGroup> parameter_groups(PpaModel& model) {
    std::vector<ParamGroup> groups;
    auto add_matrix = [&](const std::string& id, Matrix& m, bool trainable) {
        groups.push_back(ParamGroup{id, m.data().data(), m.data().size(), trainable});
    };
    auto add_vector = [&](const std::string& id, Vector& v, bool trainable) {
        groups.push_back(ParamGroup{id, v.data(), v.size(), trainable});
    };

    add_matrix("encoder.embedding", model.encoder.embedding, false);
    for (std::size_t l = 0; l < model.encoder.num_layers(); ++l) {
        DenseLayer& layer = model.encoder.base_layers[l];
        const std::string base = "encoder.layer" + std::to_string(l);
        add_matrix(base + ".weight", layer.weight, !layer.frozen);
        add_vector(base + ".bias", layer.bias, !layer.frozen);
        LowRankAdapter& adapter = model.encoder.adapters[l];
        add_matrix(base + ".adapter.A", adapter.A, true);
        add_matrix(base + ".adapter.B", adapter.B, true);
    }
    for (MoEHead& head : model.heads) {
        const std::string base = std::string("head.") + metric_name(head.metric);
        add_matrix(base + ".gate.weight", head.gate.weight, true);
        if (head.gate.has_bias) add_vector(base + ".gate.bias", head.gate.bias, true);
        for (std::size_t e = 0; e < head.experts.size(); ++e) {
            for (std::size_t l = 0; l < head.experts[e].layers.size(); ++l) {
                const std::string lbase =
                    base + ".expert" + std::to_string(e) + ".layer" + std::to_string(l);
                add_matrix(lbase + ".weight", head.experts[e].layers[l].weight, true);
                add_vector(lbase + ".bias", head.experts[e].layers[l].bias, true);
            }
        }
    }
    return groups;
}

std::vector<ParamGroup> trainable_groups(PpaModel& model) {
    std::vector<ParamGroup> all = parameter_groups(model);
    std::vector<ParamGroup> out;
    for (ParamGroup& g : all)
        if (g.trainable) out.push_back(g);
    return out;
}

}  // namespace rtlppa

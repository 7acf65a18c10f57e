#include "advdet/serialize.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <sodium.h>

#include "advdet/errors.hpp"

namespace advdet {

namespace {

std::uint64_t to_little_endian(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        return __builtin_bswap64(v);
    }
}

template <typename T>
T get_field(const json& j, const char* key) {
    if (!j.contains(key)) fail(ErrorCode::ParseError, std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(ErrorCode::ParseError, std::string("field '") + key + "': " + e.what());
    }
}

void check_header(const json& j, const char* kind) {
    if (!j.is_object()) fail(ErrorCode::ParseError, "expected a JSON object");
    const int version = get_field<int>(j, "format_version");
    if (version != kFormatVersion) fail(ErrorCode::ParseError, "unsupported format_version " + std::to_string(version));
    if (get_field<std::string>(j, "kind") != kind) fail(ErrorCode::ParseError, std::string("expected a ") + kind + " document");
}

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    return out;
}

}  // namespace

std::string encode_doubles(std::span<const double> values) {
    std::vector<unsigned char> bytes(values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::uint64_t le = to_little_endian(std::bit_cast<std::uint64_t>(values[i]));
        std::memcpy(bytes.data() + 8 * i, &le, 8);
    }
    const std::size_t len = sodium_base64_ENCODED_LEN(bytes.size(), sodium_base64_VARIANT_ORIGINAL);
    std::string out(len, '\0');
    sodium_bin2base64(out.data(), len, bytes.data(), bytes.size(), sodium_base64_VARIANT_ORIGINAL);
    out.resize(len - 1);  // drop the terminating NUL
    return out;
}

std::vector<double> decode_doubles(const std::string& text) {
    std::vector<unsigned char> bytes(text.size() / 4 * 3 + 3);
    std::size_t len = 0;
    if (sodium_base642bin(bytes.data(), bytes.size(), text.data(), text.size(), nullptr, &len, nullptr,
                          sodium_base64_VARIANT_ORIGINAL) != 0)
        fail(ErrorCode::ParseError, "invalid base64 payload");
    if (len % 8 != 0) fail(ErrorCode::ParseError, "payload is not a whole number of doubles");
    std::vector<double> values(len / 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t le = 0;
        std::memcpy(&le, bytes.data() + 8 * i, 8);
        values[i] = std::bit_cast<double>(to_little_endian(le));
    }
    return values;
}

json tensor_to_json(const Tensor& t) { return json{{"shape", t.shape()}, {"data", encode_doubles(t.values())}}; }

Tensor tensor_from_json(const json& j) {
    auto shape = get_field<Shape>(j, "shape");
    auto data = decode_doubles(get_field<std::string>(j, "data"));
    return Tensor(std::move(shape), std::move(data));
}

// ---------------------------------------------------------------------------
// Models

json model_to_json(const NetworkModel& model) {
    json layers = json::array();
    for (const auto& l : model.layers()) {
        json spec{{"kind", to_string(l.spec.kind)}};
        switch (l.spec.kind) {
            case LayerKind::Conv2d:
                spec["out_channels"] = l.spec.out_channels;
                spec["kernel_size"] = l.spec.kernel_size;
                spec["stride"] = l.spec.stride;
                break;
            case LayerKind::MaxPool2d:
                spec["window"] = l.spec.window;
                spec["stride"] = l.spec.stride;
                break;
            case LayerKind::Dense: spec["out_dim"] = l.spec.out_dim; break;
            case LayerKind::Dropout: spec["rate"] = l.spec.rate; break;
            case LayerKind::Relu:
            case LayerKind::Softmax: break;
        }
        if (l.has_params()) {
            spec["weight"] = tensor_to_json(l.weight);
            spec["bias"] = tensor_to_json(l.bias);
        }
        layers.push_back(std::move(spec));
    }
    return json{{"format_version", kFormatVersion},
                {"kind", "network_model"},
                {"input_shape", model.input_shape()},
                {"num_classes", model.num_classes()},
                {"layers", std::move(layers)}};
}

LayerSpec layer_spec_from_json(const json& j) {
    const LayerKind kind = layer_kind_from_string(get_field<std::string>(j, "kind"));
    switch (kind) {
        case LayerKind::Conv2d:
            return LayerSpec::conv2d(get_field<std::size_t>(j, "out_channels"), get_field<std::size_t>(j, "kernel_size"),
                                     j.value("stride", std::size_t{1}));
        case LayerKind::MaxPool2d:
            return LayerSpec::maxpool2d(get_field<std::size_t>(j, "window"), j.value("stride", std::size_t{0}));
        case LayerKind::Dense: return LayerSpec::dense(get_field<std::size_t>(j, "out_dim"));
        case LayerKind::Dropout: return LayerSpec::dropout(get_field<double>(j, "rate"));
        case LayerKind::Relu: return LayerSpec::relu();
        case LayerKind::Softmax: return LayerSpec::softmax();
    }
    return LayerSpec::relu();
}

NetworkModel model_from_json(const json& j) {
    check_header(j, "network_model");
    std::vector<Layer> layers;
    for (const auto& lj : get_field<json>(j, "layers")) {
        Layer l;
        l.spec = layer_spec_from_json(lj);
        if (lj.contains("weight")) l.weight = tensor_from_json(lj.at("weight"));
        if (lj.contains("bias")) l.bias = tensor_from_json(lj.at("bias"));
        layers.push_back(std::move(l));
    }
    return NetworkModel(get_field<Shape>(j, "input_shape"), get_field<std::size_t>(j, "num_classes"), std::move(layers));
}

// ---------------------------------------------------------------------------
// Feature bank and detector

json bank_to_json(const ClassFeatureBank& bank) {
    json classes = json::array();
    for (std::size_t c = 0; c < bank.num_classes(); ++c) {
        classes.push_back(tensor_to_json(Tensor(Shape{bank.class_size(c), bank.dim()}, bank.class_rows(c))));
    }
    return json{{"format_version", kFormatVersion},
                {"kind", "feature_bank"},
                {"dim", bank.dim()},
                {"bandwidth", encode_doubles(std::span<const double>(std::vector<double>{bank.bandwidth()}))},
                {"classes", std::move(classes)}};
}

ClassFeatureBank bank_from_json(const json& j) {
    check_header(j, "feature_bank");
    const auto dim = get_field<std::size_t>(j, "dim");
    std::vector<std::vector<double>> rows;
    for (const auto& cj : get_field<json>(j, "classes")) {
        Tensor t = tensor_from_json(cj);
        if (t.rank() != 2 || t.shape()[1] != dim) fail(ErrorCode::ShapeMismatch, "feature bank class has wrong width");
        rows.push_back(t.data());
    }
    const auto bw = decode_doubles(get_field<std::string>(j, "bandwidth"));
    if (bw.size() != 1) fail(ErrorCode::ParseError, "bandwidth must hold one value");
    return ClassFeatureBank(dim, std::move(rows), bw[0]);
}

json detector_to_json(const DetectorModel& d) {
    const std::vector<double> packed{d.zscore.mean[0], d.zscore.mean[1], d.zscore.stddev[0], d.zscore.stddev[1],
                                     d.weights[0],     d.weights[1],     d.bias};
    return json{{"format_version", kFormatVersion},
                {"kind", "detector"},
                {"features", {"uncertainty", "neg_log_density"}},
                {"zscore_mean", {d.zscore.mean[0], d.zscore.mean[1]}},
                {"zscore_std", {d.zscore.stddev[0], d.zscore.stddev[1]}},
                {"weights", {d.weights[0], d.weights[1]}},
                {"bias", d.bias},
                {"packed", encode_doubles(packed)}};
}

DetectorModel detector_from_json(const json& j) {
    check_header(j, "detector");
    // The packed payload is authoritative; the readable fields are informational.
    const auto p = decode_doubles(get_field<std::string>(j, "packed"));
    if (p.size() != 7) fail(ErrorCode::ParseError, "detector payload must hold 7 values");
    DetectorModel d;
    d.zscore.mean = {p[0], p[1]};
    d.zscore.stddev = {p[2], p[3]};
    d.weights = {p[4], p[5]};
    d.bias = p[6];
    for (double v : p) {
        if (!std::isfinite(v)) fail(ErrorCode::ParseError, "detector parameters must be finite");
    }
    return d;
}

// ---------------------------------------------------------------------------
// Attack results

json attack_params_to_json(const AttackParams& params) {
    struct Visitor {
        json operator()(const Fgsm& p) const { return {{"eps", p.eps}}; }
        json operator()(const BimA& p) const {
            return {{"eps_step", p.eps_step}, {"eps_clip", p.eps_clip}, {"max_iters", p.max_iters}};
        }
        json operator()(const BimB& p) const {
            return {{"eps_step", p.eps_step}, {"eps_clip", p.eps_clip}, {"n_iters", p.n_iters}};
        }
        json operator()(const Jsma& p) const { return {{"theta", p.theta}, {"max_fraction", p.max_fraction}}; }
        json operator()(const CwL0& p) const {
            return {{"kappa", p.kappa},         {"c", p.c},
                    {"steps", p.steps},         {"step_size", p.step_size},
                    {"grad_threshold", p.grad_threshold}, {"optimizer", to_string(p.optimizer)}};
        }
    };
    return std::visit(Visitor{}, params);
}

AttackParams attack_params_from_json(AttackKind kind, const json& j) {
    if (!j.is_object()) fail(ErrorCode::ConfigError, "attack parameters must be an object");
    AttackParams out;
    try {
        switch (kind) {
            case AttackKind::Fgsm: {
                Fgsm p;
                p.eps = j.value("eps", p.eps);
                out = p;
                break;
            }
            case AttackKind::BimA: {
                BimA p;
                p.eps_clip = j.value("eps_clip", p.eps_clip);
                p.eps_step = j.value("eps_step", p.eps_clip / 10.0);
                p.max_iters = j.value("max_iters", p.max_iters);
                out = p;
                break;
            }
            case AttackKind::BimB: {
                BimB p;
                p.eps_clip = j.value("eps_clip", p.eps_clip);
                p.eps_step = j.value("eps_step", p.eps_clip / 10.0);
                p.n_iters = j.value("n_iters", p.n_iters);
                out = p;
                break;
            }
            case AttackKind::Jsma: {
                Jsma p;
                p.theta = j.value("theta", p.theta);
                p.max_fraction = j.value("max_fraction", p.max_fraction);
                out = p;
                break;
            }
            case AttackKind::CwL0: {
                CwL0 p;
                p.kappa = j.value("kappa", p.kappa);
                p.c = j.value("c", p.c);
                p.steps = j.value("steps", p.steps);
                p.step_size = j.value("step_size", p.step_size);
                p.grad_threshold = j.value("grad_threshold", p.grad_threshold);
                p.optimizer = cw_optimizer_from_string(j.value("optimizer", std::string(to_string(p.optimizer))));
                out = p;
                break;
            }
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::ConfigError, std::string(to_string(kind)) + " parameters: " + e.what());
    } catch (const Error& e) {
        fail(ErrorCode::ConfigError, e.what());
    }
    try {
        validate(out);
    } catch (const Error& e) {
        fail(ErrorCode::ConfigError, e.what());
    }
    return out;
}

json attack_result_to_json(const AttackResult& r) {
    json j{{"kind", to_string(r.kind)},
           {"sample_id", r.sample_id},
           {"true_label", r.true_label},
           {"adv_label", r.adv_label},
           {"target", r.target ? json(*r.target) : json(nullptr)},
           {"success", r.success},
           {"l2_norm", r.l2_norm},
           {"l0_count", r.l0_count},
           {"iterations", r.iterations},
           {"x", tensor_to_json(r.x)},
           {"x_adv", tensor_to_json(r.x_adv)},
           {"x_noisy", tensor_to_json(r.x_noisy)}};
    if (!r.note.empty()) j["note"] = r.note;
    return j;
}

AttackResult attack_result_from_json(const json& j) {
    AttackResult r;
    r.kind = attack_kind_from_string(get_field<std::string>(j, "kind"));
    r.sample_id = get_field<std::size_t>(j, "sample_id");
    r.true_label = get_field<int>(j, "true_label");
    r.adv_label = get_field<int>(j, "adv_label");
    if (j.contains("target") && !j.at("target").is_null()) r.target = j.at("target").get<int>();
    r.success = get_field<bool>(j, "success");
    r.l2_norm = get_field<double>(j, "l2_norm");
    r.l0_count = get_field<std::size_t>(j, "l0_count");
    r.iterations = get_field<std::size_t>(j, "iterations");
    r.x = tensor_from_json(get_field<json>(j, "x"));
    r.x_adv = tensor_from_json(get_field<json>(j, "x_adv"));
    r.x_noisy = tensor_from_json(get_field<json>(j, "x_noisy"));
    r.note = j.value("note", std::string{});
    return r;
}

void write_attack_results(const std::filesystem::path& path, std::span<const AttackResult> results) {
    auto out = open_out(path);
    for (const auto& r : results) out << attack_result_to_json(r).dump() << '\n';
}

std::vector<AttackResult> read_attack_results(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    std::vector<AttackResult> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(attack_result_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            fail(ErrorCode::ParseError, path.filename().string() + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Text outputs

std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_json(const std::filesystem::path& path, const json& j) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorCode::ParseError, path.filename().string() + ": " + e.what());
    }
}

void write_feature_csv(const std::filesystem::path& path, std::span<const LabeledFeatures> rows) {
    auto out = open_out(path);
    out << "sample_id,set,attack_kind,predicted_class,uncertainty,neg_log_density\n";
    for (const auto& r : rows) {
        out << r.sample_id << ',' << to_string(r.set) << ',' << to_string(r.attack) << ',' << r.features.predicted_class
            << ',' << format_double(r.features.uncertainty) << ',' << format_double(r.features.neg_log_density) << '\n';
    }
}

std::vector<LabeledFeatures> read_feature_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    std::vector<LabeledFeatures> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (f.size() != 6) fail(ErrorCode::RaggedRows, path.filename().string() + ": expected 6 columns");
        LabeledFeatures r;
        try {
            r.sample_id = std::stoul(f[0]);
            r.set = sample_set_from_string(f[1]);
            r.attack = attack_kind_from_string(f[2]);
            r.features.predicted_class = std::stoi(f[3]);
            r.features.uncertainty = std::stod(f[4]);
            r.features.neg_log_density = std::stod(f[5]);
        } catch (const std::logic_error&) {
            fail(ErrorCode::ParseError, path.filename().string() + ": bad row '" + line + "'");
        }
        rows.push_back(r);
    }
    return rows;
}

void write_density_walk_csv(const std::filesystem::path& path,
                            std::span<const std::vector<DensityWalkRecord>> walks) {
    auto out = open_out(path);
    out << "walk_id,iteration,logK_source,logK_adv\n";
    for (std::size_t w = 0; w < walks.size(); ++w) {
        for (const auto& rec : walks[w]) {
            out << w << ',' << rec.iteration << ',' << format_double(rec.log_density_source) << ','
                << format_double(rec.log_density_adv) << '\n';
        }
    }
}

void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve) {
    auto out = open_out(path);
    out << "threshold,fpr,tpr\n";
    for (const auto& p : curve.points) {
        out << format_double(p.threshold) << ',' << format_double(p.fpr) << ',' << format_double(p.tpr) << '\n';
    }
}

}  // namespace advdet

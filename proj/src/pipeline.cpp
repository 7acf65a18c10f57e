#include "advdet/pipeline.hpp"

#include <algorithm>
#include <ctime>
#include <fstream>
#include <initializer_list>
#include <numeric>
#include <set>
#include <sstream>

#include <sodium.h>

#include "advdet/errors.hpp"
#include "advdet/rng.hpp"

namespace advdet {

namespace {

namespace fs = std::filesystem;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) fail(ErrorCode::ConfigError, where + " must be an object");
    for (const auto& [key, value] : j.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
        if (!known) fail(ErrorCode::ConfigError, "unknown key '" + key + "' in " + where);
    }
}

template <typename T>
T opt(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(ErrorCode::ConfigError, where + "." + key + ": " + e.what());
    }
}

json section(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return json::object();
    return j.at(key);
}

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

std::size_t kind_index(AttackKind kind) { return static_cast<std::size_t>(kind); }

/// Seeded permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    for (std::size_t k = n; k > 1; --k) std::swap(idx[k - 1], idx[rng.below(k)]);
    return idx;
}

std::uint64_t feature_seed(std::uint64_t base, std::size_t sample_id, std::uint64_t code) {
    return derive_seed(base, static_cast<std::uint64_t>(sample_id) * 16 + code);
}

std::string to_hex(const unsigned char* bytes, std::size_t n) {
    std::string hex(n * 2 + 1, '\0');
    sodium_bin2hex(hex.data(), hex.size(), bytes, n);
    hex.pop_back();
    return hex;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

ExperimentConfig config_from_json(const json& j, const fs::path& base_dir) {
    check_keys(j, {"name", "seed", "dataset", "model", "attacks", "features", "detector", "undecided"}, "config");
    ExperimentConfig c;
    c.source = j;
    c.name = opt<std::string>(j, "name", c.name, "config");
    c.seed = opt<std::uint64_t>(j, "seed", c.seed, "config");

    const json ds = section(j, "dataset");
    check_keys(ds, {"root", "images", "labels", "csv", "csv_shape", "train_size", "test_size", "stratified"}, "dataset");
    if (ds.contains("root")) {
        c.dataset.root = resolve(base_dir, opt<std::string>(ds, "root", "", "dataset"));
    } else {
        c.dataset.root = data_dir();
    }
    c.dataset.images = opt<std::string>(ds, "images", "mnist10k-images-idx3-ubyte", "dataset");
    c.dataset.labels = opt<std::string>(ds, "labels", "mnist10k-labels-idx1-ubyte", "dataset");
    c.dataset.csv = opt<std::string>(ds, "csv", "", "dataset");
    if (ds.contains("csv_shape")) c.dataset.csv_shape = opt<Shape>(ds, "csv_shape", {}, "dataset");
    c.dataset.train_size = opt(ds, "train_size", c.dataset.train_size, "dataset");
    c.dataset.test_size = opt(ds, "test_size", c.dataset.test_size, "dataset");
    c.dataset.stratified = opt(ds, "stratified", c.dataset.stratified, "dataset");

    const json m = section(j, "model");
    check_keys(m, {"architecture", "layers", "epochs", "batch_size", "rho", "epsilon", "learning_rate"}, "model");
    const auto arch = opt<std::string>(m, "architecture", m.contains("layers") ? "custom" : "lenet-small", "model");
    if (arch == "custom") {
        if (!m.contains("layers") || !m.at("layers").is_array() || m.at("layers").empty())
            fail(ErrorCode::ConfigError, "model.layers must be a non-empty array for a custom architecture");
        for (const auto& lj : m.at("layers")) {
            try {
                c.model.layers.push_back(layer_spec_from_json(lj));
            } catch (const Error& e) {
                fail(ErrorCode::ConfigError, std::string("model.layers: ") + e.what());
            }
        }
    } else if (arch != "lenet-small") {
        fail(ErrorCode::ConfigError, "unknown architecture '" + arch + "'");
    }
    auto& t = c.model.train;
    t.epochs = opt(m, "epochs", t.epochs, "model");
    t.batch_size = opt(m, "batch_size", t.batch_size, "model");
    t.adadelta_rho = opt(m, "rho", t.adadelta_rho, "model");
    t.adadelta_epsilon = opt(m, "epsilon", t.adadelta_epsilon, "model");
    t.learning_rate = opt(m, "learning_rate", t.learning_rate, "model");
    if (t.epochs == 0 || t.batch_size == 0) fail(ErrorCode::ConfigError, "model.epochs and model.batch_size must be positive");

    const json a = section(j, "attacks");
    check_keys(a, {"samples", "enabled", "fgsm", "bim-a", "bim-b", "jsma", "cw"}, "attacks");
    c.attacks.samples = opt(a, "samples", c.attacks.samples, "attacks");
    std::vector<std::string> enabled;
    for (AttackKind k : kAllAttacks) enabled.emplace_back(to_string(k));
    enabled = opt(a, "enabled", enabled, "attacks");
    for (AttackKind k : kAllAttacks) {
        const std::string name(to_string(k));
        if (std::find(enabled.begin(), enabled.end(), name) == enabled.end()) continue;
        c.attacks.attacks.push_back(attack_params_from_json(k, section(a, name.c_str())));
    }
    for (const auto& name : enabled) {
        try {
            attack_kind_from_string(name);
        } catch (const Error&) {
            fail(ErrorCode::ConfigError, "unknown attack '" + name + "'");
        }
    }

    const json f = section(j, "features");
    check_keys(f, {"mc_samples", "bandwidth_grid", "grid_count", "grid_lo", "grid_hi", "bank_cap", "walks", "walk"},
               "features");
    c.features.mc_samples = opt(f, "mc_samples", c.features.mc_samples, "features");
    c.features.bandwidth_grid = opt(f, "bandwidth_grid", c.features.bandwidth_grid, "features");
    c.features.grid_count = opt(f, "grid_count", c.features.grid_count, "features");
    c.features.grid_lo = opt(f, "grid_lo", c.features.grid_lo, "features");
    c.features.grid_hi = opt(f, "grid_hi", c.features.grid_hi, "features");
    c.features.bank_cap = opt(f, "bank_cap", c.features.bank_cap, "features");
    c.features.walks = opt(f, "walks", c.features.walks, "features");
    const json walk = f.contains("walk") ? f.at("walk") : section(a, "bim-b");
    c.features.walk = std::get<BimB>(attack_params_from_json(AttackKind::BimB, walk));
    if (c.features.mc_samples < 2) fail(ErrorCode::ConfigError, "features.mc_samples must be at least 2");

    const json d = section(j, "detector");
    check_keys(d, {"train_samples", "iters", "learning_rate", "l2_penalty"}, "detector");
    c.detector.train_samples = opt(d, "train_samples", c.detector.train_samples, "detector");
    c.detector.logreg.iters = opt(d, "iters", c.detector.logreg.iters, "detector");
    c.detector.logreg.learning_rate = opt(d, "learning_rate", c.detector.logreg.learning_rate, "detector");
    c.detector.logreg.l2_penalty = opt(d, "l2_penalty", c.detector.logreg.l2_penalty, "detector");

    const json u = section(j, "undecided");
    check_keys(u, {"percentile", "valid_samples", "eps"}, "undecided");
    c.undecided.percentile = opt(u, "percentile", c.undecided.percentile, "undecided");
    c.undecided.valid_samples = opt(u, "valid_samples", c.undecided.valid_samples, "undecided");
    c.undecided.attack.eps = opt(u, "eps", c.undecided.attack.eps, "undecided");
    if (!(c.undecided.percentile >= 0.0 && c.undecided.percentile <= 100.0))
        fail(ErrorCode::ConfigError, "undecided.percentile must lie in [0, 100]");
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::ConfigError, "cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorCode::ConfigError, path.filename().string() + ": " + e.what());
    }
    return config_from_json(j, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

void filter_attacks(ExperimentConfig& config, const std::vector<std::string>& names) {
    std::vector<AttackParams> kept;
    for (const auto& name : names) {
        AttackKind kind;
        try {
            kind = attack_kind_from_string(name);
        } catch (const Error&) {
            fail(ErrorCode::ConfigError, "unknown attack '" + name + "'");
        }
        auto it = std::find_if(config.attacks.attacks.begin(), config.attacks.attacks.end(),
                               [&](const AttackParams& p) { return kind_of(p) == kind; });
        if (it == config.attacks.attacks.end()) fail(ErrorCode::ConfigError, "attack '" + name + "' is not enabled");
        kept.push_back(*it);
    }
    std::sort(kept.begin(), kept.end(), [](const AttackParams& l, const AttackParams& r) {
        return kind_index(kind_of(l)) < kind_index(kind_of(r));
    });
    kept.erase(std::unique(kept.begin(), kept.end(),
                           [](const AttackParams& l, const AttackParams& r) { return kind_of(l) == kind_of(r); }),
               kept.end());
    config.attacks.attacks = std::move(kept);
}

std::uint64_t stage_seed(const ExperimentConfig& config, Stage stage) {
    return derive_seed(config.seed, static_cast<std::uint64_t>(stage));
}

// ---------------------------------------------------------------------------
// Stages

ExperimentData prepare_data(const ExperimentConfig& config) {
    const auto& dc = config.dataset;
    Dataset full = dc.csv.empty()
                       ? load_idx(resolve(dc.root, dc.images), resolve(dc.root, dc.labels))
                       : load_csv(resolve(dc.root, dc.csv), dc.csv_shape);
    const std::uint64_t seed = stage_seed(config, Stage::Data);
    auto [train, rest] = split(full, dc.train_size, seed, dc.stratified);
    ExperimentData data;
    data.train = std::move(train);
    data.test = dc.test_size == rest.size() ? std::move(rest)
                                            : subset(rest, dc.test_size, derive_seed(seed, 1), dc.stratified);
    data.train.split = "train";
    data.test.split = "test";
    const std::size_t classes = std::max(data.train.num_classes, data.test.num_classes);
    data.train.num_classes = classes;
    data.test.num_classes = classes;
    return data;
}

TrainingOutcome run_training(const ExperimentConfig& config, const ExperimentData& data) {
    const std::clock_t start = std::clock();
    const std::size_t classes = data.train.num_classes;
    const auto specs = config.model.layers.empty() ? lenet_small_specs(classes) : config.model.layers;
    TrainingOutcome out{build_model(specs, data.train.image_shape(), classes, stage_seed(config, Stage::Init)), {},
                        0.0, 0.0, 0.0};
    TrainConfig tc = config.model.train;
    tc.rng_seed = stage_seed(config, Stage::Train);
    out.report = train(out.model, data.train.images, one_hot(data.train.labels, classes), tc);
    out.train_accuracy = accuracy(out.model, data.train.images, data.train.labels);
    out.test_accuracy = accuracy(out.model, data.test.images, data.test.labels);
    out.cpu_seconds = static_cast<double>(std::clock() - start) / CLOCKS_PER_SEC;
    return out;
}

AttackOutcome run_attacks(const ExperimentConfig& config, const NetworkModel& model, const Dataset& test,
                          const std::function<void(AttackKind, std::size_t)>& progress) {
    if (config.attacks.attacks.empty()) fail(ErrorCode::ConfigError, "no attacks enabled");
    const std::uint64_t seed = stage_seed(config, Stage::Attack);
    AttackOutcome out;
    for (std::size_t i : permutation(test.size(), derive_seed(seed, 0))) {
        if (out.sample_ids.size() == config.attacks.samples) break;
        if (static_cast<int>(predict(model, test.image(i))) == test.labels[i]) {
            out.sample_ids.push_back(i);
        } else {
            out.skipped.push_back({i, "not correctly classified"});
        }
    }
    std::sort(out.sample_ids.begin(), out.sample_ids.end());
    std::sort(out.skipped.begin(), out.skipped.end(),
              [](const SkippedSample& l, const SkippedSample& r) { return l.sample_id < r.sample_id; });
    if (out.sample_ids.empty()) fail(ErrorCode::EmptyInput, "no correctly classified test samples to attack");

    for (const auto& params : config.attacks.attacks) {
        const AttackKind kind = kind_of(params);
        const std::uint64_t kind_seed = derive_seed(seed, kind_index(kind) + 1);
        for (std::size_t n = 0; n < out.sample_ids.size(); ++n) {
            const std::size_t id = out.sample_ids[n];
            AttackResult r = run_attack(model, test.image(id), test.labels[id], params, derive_seed(kind_seed, id));
            r.sample_id = id;
            out.results.push_back(std::move(r));
            if (progress) progress(kind, n + 1);
        }
    }
    return out;
}

ClassFeatureBank fit_feature_bank(const ExperimentConfig& config, const NetworkModel& model, const Dataset& train) {
    const auto& fc = config.features;
    ClassFeatureBank bank = build_feature_bank(model, train.images, train.labels)
                                .capped(fc.bank_cap, stage_seed(config, Stage::Bank));
    const auto grid = fc.bandwidth_grid.empty() ? default_bandwidth_grid(bank, fc.grid_count, fc.grid_lo, fc.grid_hi)
                                                : fc.bandwidth_grid;
    bank.set_bandwidth(fit_bandwidth(bank, grid));
    return bank;
}

std::vector<LabeledFeatures> extract_feature_rows(const ExperimentConfig& config, const NetworkModel& model,
                                                  const ClassFeatureBank& bank, const Dataset& test,
                                                  std::span<const AttackResult> results) {
    const std::uint64_t seed = stage_seed(config, Stage::Features);
    const std::size_t T = config.features.mc_samples;
    std::map<std::size_t, ArtifactFeatures> normal;
    std::vector<LabeledFeatures> rows;
    for (const auto& r : results) {
        if (r.sample_id >= test.size()) fail(ErrorCode::ShapeMismatch, "attack result refers to an unknown sample");
        auto it = normal.find(r.sample_id);
        if (it == normal.end()) {
            const auto f = extract_features(model, bank, test.image(r.sample_id), T, feature_seed(seed, r.sample_id, 0));
            it = normal.emplace(r.sample_id, f).first;
        }
        const std::uint64_t code = 1 + 2 * kind_index(r.kind);
        rows.push_back({r.sample_id, SampleSet::Normal, r.kind, it->second});
        rows.push_back({r.sample_id, SampleSet::Noisy, r.kind,
                        extract_features(model, bank, r.x_noisy.values(), T, feature_seed(seed, r.sample_id, code + 1))});
        rows.push_back({r.sample_id, SampleSet::Adversarial, r.kind,
                        extract_features(model, bank, r.x_adv.values(), T, feature_seed(seed, r.sample_id, code))});
    }
    return rows;
}

std::vector<std::vector<DensityWalkRecord>> run_density_walks(const ExperimentConfig& config,
                                                              const NetworkModel& model,
                                                              const ClassFeatureBank& bank, const Dataset& test,
                                                              std::span<const std::size_t> sample_ids) {
    std::vector<std::vector<DensityWalkRecord>> walks;
    const std::size_t n = std::min(config.features.walks, sample_ids.size());
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t id = sample_ids[k];
        walks.push_back(density_walk(model, bank, test.image(id), test.labels[id], config.features.walk));
    }
    return walks;
}

DetectorSplit split_for_detector(const ExperimentConfig& config, std::span<const LabeledFeatures> rows) {
    std::set<std::size_t> unique;
    for (const auto& r : rows) unique.insert(r.sample_id);
    const std::vector<std::size_t> ids(unique.begin(), unique.end());
    if (config.detector.train_samples >= ids.size())
        fail(ErrorCode::ConfigError, "detector.train_samples leaves no samples for evaluation");
    std::set<std::size_t> train_ids;
    const auto order = permutation(ids.size(), stage_seed(config, Stage::Detector));
    for (std::size_t k = 0; k < config.detector.train_samples; ++k) train_ids.insert(ids[order[k]]);
    DetectorSplit out;
    for (const auto& r : rows) (train_ids.count(r.sample_id) ? out.train : out.eval).push_back(r);
    return out;
}

DetectorModel train_detector(const ExperimentConfig& config, std::span<const LabeledFeatures> train_rows,
                             LogRegReport* report) {
    std::vector<FeaturePair> features;
    std::vector<int> labels;
    for (const auto& r : train_rows) {
        if (r.set == SampleSet::Noisy) continue;
        features.push_back(to_pair(r.features));
        labels.push_back(r.set == SampleSet::Adversarial ? 1 : 0);
    }
    return train_logreg(features, labels, config.detector.logreg, report);
}

EvaluationOutcome evaluate_all(std::span<const LabeledFeatures> eval_rows, const DetectorModel& detector) {
    EvaluationOutcome out;
    for (DetectorKind kind : kAllDetectors) out.by_kind[kind] = evaluate_detector(eval_rows, kind, &detector);
    return out;
}

json evaluation_summary(const std::string& dataset, const EvaluationOutcome& outcome) {
    json per_attack = json::object();
    json overall = json::object();
    for (const auto& [kind, eval] : outcome.by_kind) {
        const std::string key = "auc_" + std::string(to_string(kind));
        for (const auto& [attack, curve] : eval.per_attack) per_attack[std::string(to_string(attack))][key] = curve.auc;
        overall[key] = eval.overall.auc;
    }
    return json{{"dataset", dataset}, {"per_attack", per_attack}, {"overall", overall}};
}

DirectionalityReport feature_directionality(std::span<const LabeledFeatures> rows) {
    std::map<std::pair<AttackKind, std::size_t>, const LabeledFeatures*> normal;
    std::map<std::pair<AttackKind, std::size_t>, const LabeledFeatures*> noisy;
    for (const auto& r : rows) {
        if (r.set == SampleSet::Normal) normal[{r.attack, r.sample_id}] = &r;
        if (r.set == SampleSet::Noisy) noisy[{r.attack, r.sample_id}] = &r;
    }
    DirectionalityReport out;
    auto tally = [](Directionality& d, const ArtifactFeatures& adv, const ArtifactFeatures& ref) {
        ++d.count;
        d.uncertainty_up += adv.uncertainty > ref.uncertainty;
        d.density_down += adv.neg_log_density > ref.neg_log_density;
    };
    for (const auto& r : rows) {
        if (r.set != SampleSet::Adversarial) continue;
        const auto key = std::make_pair(r.attack, r.sample_id);
        if (auto it = normal.find(key); it != normal.end()) tally(out.vs_normal[r.attack], r.features, it->second->features);
        if (auto it = noisy.find(key); it != noisy.end()) tally(out.vs_noisy[r.attack], r.features, it->second->features);
    }
    for (auto* m : {&out.vs_normal, &out.vs_noisy}) {
        for (auto& [kind, d] : *m) {
            d.uncertainty_up /= static_cast<double>(d.count);
            d.density_down /= static_cast<double>(d.count);
        }
    }
    return out;
}

UndecidedOutcome run_undecided(const ExperimentConfig& config, const NetworkModel& model, const Dataset& test,
                               std::span<const std::size_t> attacked, std::span<const LabeledFeatures> rows) {
    const std::uint64_t seed = stage_seed(config, Stage::Undecided);
    const std::set<std::size_t> used(attacked.begin(), attacked.end());
    std::vector<std::size_t> pool;
    for (std::size_t i : permutation(test.size(), derive_seed(seed, 0))) {
        if (pool.size() == config.undecided.valid_samples) break;
        if (!used.count(i)) pool.push_back(i);
    }
    std::sort(pool.begin(), pool.end());
    const Dataset valid = take(test, pool);
    UndecidedOutcome out;
    out.validation_count = valid.size();
    out.cutoff = uncertainty_threshold(model, valid.images, valid.labels, config.undecided.percentile,
                                       config.undecided.attack, config.features.mc_samples, derive_seed(seed, 1));

    std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
    std::set<std::size_t> seen_normal;
    for (const auto& r : rows) {
        const bool undecided = r.features.uncertainty > out.cutoff;
        const std::string set(to_string(r.set));
        auto& per = counts[std::string(to_string(r.attack)) + "/" + set];
        per.first += undecided;
        ++per.second;
        if (r.set == SampleSet::Normal && !seen_normal.insert(r.sample_id).second) continue;
        auto& all = counts["overall/" + set];
        all.first += undecided;
        ++all.second;
    }
    for (const auto& [key, c] : counts) out.rates[key] = static_cast<double>(c.first) / static_cast<double>(c.second);
    return out;
}

json attack_stats_json(std::span<const AttackResult> results) {
    std::map<AttackKind, std::vector<AttackResult>> by_kind;
    for (const auto& r : results) by_kind[r.kind].push_back(r);
    json out = json::object();
    for (const auto& [kind, rs] : by_kind) {
        const auto s = perturbation_stats(rs);
        double l0 = 0.0, iters = 0.0, success = 0.0;
        for (const auto& r : rs) {
            l0 += static_cast<double>(r.l0_count);
            iters += static_cast<double>(r.iterations);
            success += r.success;
        }
        const auto n = static_cast<double>(rs.size());
        out[std::string(to_string(kind))] = {{"count", s.count},          {"adv_accuracy", s.adv_accuracy},
                                             {"success_rate", success / n}, {"mean_l2", s.mean_l2},
                                             {"mean_l0", l0 / n},          {"mean_iterations", iters / n}};
    }
    return out;
}

void write_attack_stats_csv(const fs::path& path, std::span<const AttackResult> results) {
    const json stats = attack_stats_json(results);
    std::ostringstream os;
    os << "attack_kind,count,adv_accuracy,success_rate,mean_l2,mean_l0,mean_iterations\n";
    for (AttackKind kind : kAllAttacks) {
        const std::string name(to_string(kind));
        if (!stats.contains(name)) continue;
        const auto& s = stats.at(name);
        os << name << ',' << s.at("count").get<std::size_t>() << ',' << format_double(s.at("adv_accuracy"))
           << ',' << format_double(s.at("success_rate")) << ',' << format_double(s.at("mean_l2")) << ','
           << format_double(s.at("mean_l0")) << ',' << format_double(s.at("mean_iterations")) << '\n';
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
    out << os.str();
}

// ---------------------------------------------------------------------------
// Manifest

std::string sha256_hex(const std::string& bytes) {
    if (sodium_init() < 0) fail(ErrorCode::IoError, "libsodium initialization failed");
    unsigned char digest[crypto_hash_sha256_BYTES];
    crypto_hash_sha256(digest, reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
    return to_hex(digest, sizeof(digest));
}

std::string file_sha256(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return sha256_hex(os.str());
}

void update_manifest(const fs::path& out_dir, const ExperimentConfig& config, const std::vector<fs::path>& outputs) {
    const fs::path path = out_dir / "manifest.json";
    const std::string config_hash = sha256_hex(config.source.dump());
    json manifest = json::object();
    if (fs::exists(path)) {
        manifest = read_json(path);
        // A different config invalidates everything recorded before.
        if (manifest.value("config_sha256", "") != config_hash) manifest = json::object();
    }
    manifest["format_version"] = kFormatVersion;
    manifest["config_sha256"] = config_hash;
    manifest["seed"] = config.seed;
    json seeds = json::object();
    const std::pair<const char*, Stage> stages[] = {
        {"data", Stage::Data},         {"init", Stage::Init},   {"train", Stage::Train},
        {"attack", Stage::Attack},     {"features", Stage::Features}, {"bank", Stage::Bank},
        {"detector", Stage::Detector}, {"undecided", Stage::Undecided}};
    for (const auto& [name, stage] : stages) seeds[name] = stage_seed(config, stage);
    manifest["stage_seeds"] = seeds;
    if (!manifest.contains("outputs")) manifest["outputs"] = json::object();
    for (const auto& p : outputs) manifest["outputs"][fs::relative(p, out_dir).generic_string()] = file_sha256(p);
    write_json(path, manifest);
}

}  // namespace advdet

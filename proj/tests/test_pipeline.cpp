#include <set>

#include "advdet/pipeline.hpp"
#include "test_util.hpp"

using namespace advdet;

namespace {

const std::filesystem::path kToyConfig = std::filesystem::path(ADVDET_FIXTURE_DIR) / "toy.json";

}  // namespace

TEST_CASE("config parsing") {
    const ExperimentConfig c = load_config(kToyConfig);
    CHECK(c.name == "mnist7x7-toy");
    CHECK(c.seed == 7);
    CHECK(c.model.layers.size() == 5);
    REQUIRE(c.attacks.attacks.size() == 5);
    CHECK(kind_of(c.attacks.attacks[4]) == AttackKind::CwL0);
    CHECK(std::get<CwL0>(c.attacks.attacks[4]).optimizer == CwOptimizer::Adam);
    // the walk defaults to the bim-b settings
    CHECK(c.features.walk.n_iters == 20);
    CHECK(c.features.walk.eps_step == 0.05);

    const auto base = std::filesystem::path(ADVDET_FIXTURE_DIR);
    CHECK_ERROR_CODE(config_from_json(json{{"colour", 1}}, base), ErrorCode::ConfigError);
    CHECK_ERROR_CODE(config_from_json(json{{"model", {{"architecture", "resnet"}}}}, base), ErrorCode::ConfigError);
    CHECK_ERROR_CODE(config_from_json(json{{"attacks", {{"fgsm", {{"eps", -1}}}}}}, base), ErrorCode::ConfigError);
    CHECK_ERROR_CODE(config_from_json(json{{"seed", "x"}}, base), ErrorCode::ConfigError);

    const ExperimentConfig d = config_from_json(json::object(), base);
    CHECK(d.attacks.attacks.size() == 5);
    CHECK(d.model.layers.empty());
    CHECK(d.undecided.percentile == 25.0);
}

TEST_CASE("attack filtering") {
    ExperimentConfig c = load_config(kToyConfig);
    filter_attacks(c, {"jsma", "fgsm"});
    REQUIRE(c.attacks.attacks.size() == 2);
    CHECK(kind_of(c.attacks.attacks[0]) == AttackKind::Fgsm);
    CHECK(kind_of(c.attacks.attacks[1]) == AttackKind::Jsma);
    CHECK_ERROR_CODE(filter_attacks(c, {"cw"}), ErrorCode::ConfigError);
    CHECK_ERROR_CODE(filter_attacks(c, {"nope"}), ErrorCode::ConfigError);
}

TEST_CASE("data preparation and stage seeds") {
    const ExperimentConfig c = load_config(kToyConfig);
    const ExperimentData d = prepare_data(c);
    CHECK(d.train.size() == 280);
    CHECK(d.test.size() == 120);
    CHECK(d.train.image_shape() == Shape{1, 7, 7});
    for (std::size_t n : d.train.class_counts()) CHECK(n == 28);

    std::set<std::uint64_t> seeds;
    for (auto s : {Stage::Data, Stage::Init, Stage::Train, Stage::Attack, Stage::Features, Stage::Bank,
                   Stage::Detector, Stage::Undecided})
        seeds.insert(stage_seed(c, s));
    CHECK(seeds.size() == 8);
    CHECK(stage_seed(c, Stage::Attack) == derive_seed(7, 4));
}

TEST_CASE("detector split keeps sample ids together") {
    const ExperimentConfig c = load_config(kToyConfig);
    std::vector<LabeledFeatures> rows;
    for (std::size_t id = 0; id < 30; ++id) {
        for (auto set : {SampleSet::Normal, SampleSet::Noisy, SampleSet::Adversarial})
            rows.push_back({id, set, AttackKind::Fgsm, {0.01 * static_cast<double>(id), 1.0, 0}});
    }
    const DetectorSplit s = split_for_detector(c, rows);
    std::set<std::size_t> train_ids, eval_ids;
    for (const auto& r : s.train) train_ids.insert(r.sample_id);
    for (const auto& r : s.eval) eval_ids.insert(r.sample_id);
    CHECK(train_ids.size() == 10);
    CHECK(eval_ids.size() == 20);
    for (std::size_t id : train_ids) CHECK(eval_ids.count(id) == 0);
    CHECK(s.train.size() + s.eval.size() == rows.size());
}

TEST_CASE("sha256") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

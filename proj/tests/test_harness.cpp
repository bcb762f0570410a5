#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "plab/harness.hpp"

using namespace plab;

namespace {

// Small configuration so harness-level tests stay fast.
RunConfig micro_run() {
    RunConfig run;
    run.encoder.d = 8;
    run.encoder.layers_f = 2;
    run.encoder.layers_g = 2;
    run.encoder.heads = 2;
    run.encoder.patch_count = 4;
    run.encoder.patch_dim = 3;
    run.encoder.vocab_size = 16;
    run.encoder.template_len = 2;
    run.encoder.max_seq = 12;
    run.dataset.num_classes = 4;
    run.dataset.base_count = 2;
    run.dataset.train_per_class = 6;
    run.dataset.test_per_class = 4;
    run.prompt.depth = 2;
    run.prompt.v_count = 2;
    run.prompt.t_count = 2;
    run.epochs = 3;
    run.batch_size = 4;
    run.shots = -1;
    run.template_count = 2;
    run.pretrain_epochs = 0;
    run.gpa_mu = 2.0;
    run.gpa_sigma2 = 1.0;
    run.seeds = {1, 2};
    return run;
}

struct MicroFixture {
    RunConfig run = micro_run();
    Dataset data;
    FrozenEncoderPair pair;
    Vocabulary vocab;
    TemplatePool pool;
    FrozenContext frozen;

    MicroFixture()
        : data(generate_dataset(run.encoder, run.dataset)),
          pair(init_encoder_pair(run.encoder, 1)),
          vocab(make_vocabulary(run)),
          pool(make_pool(run, vocab)),
          frozen((pair.freeze(), build_frozen_context(pair, pool, vocab, run.dataset.num_classes))) {}
};

}  // namespace

TEST_CASE("dataset generation is deterministic and respects noise_std = 0") {
    RunConfig run = micro_run();
    Dataset a = generate_dataset(run.encoder, run.dataset);
    Dataset b = generate_dataset(run.encoder, run.dataset);
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].label == b.train[i].label);
        CHECK(a.train[i].patches.data() == b.train[i].patches.data());
    }

    DatasetSpec clean = run.dataset;
    clean.noise_std = 0.0;
    Dataset c = generate_dataset(run.encoder, clean);
    const Example* first_of_class0 = nullptr;
    for (const Example& e : c.train) {
        if (e.label != 0) continue;
        if (!first_of_class0) first_of_class0 = &e;
        else CHECK(e.patches.data() == first_of_class0->patches.data());
    }

    // train and test draws differ (disjoint noise streams)
    Dataset d = generate_dataset(run.encoder, run.dataset);
    CHECK(d.train[0].patches.data() != d.test[0].patches.data());
}

TEST_CASE("dataset spec validation") {
    DatasetSpec spec;
    spec.base_count = spec.num_classes;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec = DatasetSpec{};
    spec.noise_std = -0.1;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec = DatasetSpec{};
    spec.test_per_class = 0;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("subsampling shots") {
    RunConfig run = micro_run();
    Dataset data = generate_dataset(run.encoder, run.dataset);

    SUBCASE("K equal to the full pool returns the full base split in order") {
        auto full = subsample_shots(data, run.dataset.train_per_class, 5);
        auto base = data.base_train();
        REQUIRE(full.size() == base.size());
        for (std::size_t i = 0; i < full.size(); ++i) {
            CHECK(full[i].label == base[i].label);
            CHECK(full[i].patches.data() == base[i].patches.data());
        }
    }

    SUBCASE("K per class, base classes only, deterministic per seed") {
        auto a = subsample_shots(data, 2, 5);
        auto b = subsample_shots(data, 2, 5);
        REQUIRE(a.size() == 2u * run.dataset.base_count);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].label < run.dataset.base_count);
            CHECK(a[i].patches.data() == b[i].patches.data());
        }
    }

    SUBCASE("K above the pool size is rejected") {
        CHECK_THROWS_AS(subsample_shots(data, run.dataset.train_per_class + 1, 5),
                        std::invalid_argument);
    }
}

TEST_CASE("harmonic mean values") {
    CHECK(std::fabs(harmonic_mean(84.26, 76.10) - 79.97) < 0.01);
    CHECK(std::fabs(harmonic_mean(77.60, 70.73) - 74.01) < 0.01);
    CHECK(harmonic_mean(42.0, 42.0) == doctest::Approx(42.0).epsilon(1e-12));
    CHECK(harmonic_mean(100.0, 0.0) == 0.0);
    long before = degenerate_warning_count();
    CHECK(harmonic_mean(0.0, 0.0) == 0.0);
    CHECK(degenerate_warning_count() == before + 1);
    CHECK_THROWS_AS(harmonic_mean(-1.0, 50.0), std::invalid_argument);
    CHECK_THROWS_AS(harmonic_mean(50.0, 101.0), std::invalid_argument);
}

TEST_CASE("config hash flips with any field change") {
    RunConfig base = micro_run();
    std::string h0 = base.config_hash();
    CHECK(h0 == micro_run().config_hash());

    auto flipped = [&](auto mutate) {
        RunConfig r = micro_run();
        mutate(r);
        return r.config_hash();
    };
    CHECK(flipped([](RunConfig& r) { r.learning_rate = 0.003; }) != h0);
    CHECK(flipped([](RunConfig& r) { r.epochs = 4; }) != h0);
    CHECK(flipped([](RunConfig& r) { r.use_scl = false; }) != h0);
    CHECK(flipped([](RunConfig& r) { r.use_gpa = false; }) != h0);
    CHECK(flipped([](RunConfig& r) { r.use_textual_diversity = false; }) != h0);
    CHECK(flipped([](RunConfig& r) { r.scl.lambda1 = 11.0; }) != h0);
    CHECK(flipped([](RunConfig& r) { r.scl.metric = MatchMetric::MSE; }) != h0);
    CHECK(flipped([](RunConfig& r) { r.scl.kl_direction = KlDirection::PromptedToFrozen; }) != h0);
    CHECK(flipped([](RunConfig& r) { r.scl.feature_stage = FeatureStage::PreNormalization; }) != h0);
    CHECK(flipped([](RunConfig& r) { r.agg_mode = AggMode::Ema; }) != h0);
    CHECK(flipped([](RunConfig& r) { r.gpa_mu = 3.0; }) != h0);
    CHECK(flipped([](RunConfig& r) { r.gpa_sigma2 = 2.0; }) != h0);
    CHECK(flipped([](RunConfig& r) { r.shots = 2; }) != h0);
    CHECK(flipped([](RunConfig& r) { r.template_count = 1; }) != h0);
    CHECK(flipped([](RunConfig& r) { r.prompt.depth = 1; }) != h0);
    CHECK(flipped([](RunConfig& r) { r.prompt.v_count = 3; }) != h0);
    CHECK(flipped([](RunConfig& r) { r.encoder.d = 16; }) != h0);
    CHECK(flipped([](RunConfig& r) { r.dataset.noise_std = 0.5; }) != h0);
    CHECK(flipped([](RunConfig& r) { r.seeds = {1}; }) != h0);
    CHECK(flipped([](RunConfig& r) { r.batch_size = 2; }) != h0);
    CHECK(flipped([](RunConfig& r) { r.pretrain_epochs = 1; }) != h0);
}

TEST_CASE("run config json round trip and partial override") {
    RunConfig base = micro_run();
    RunConfig parsed = RunConfig::from_json_text(base.canonical_json());
    CHECK(parsed.config_hash() == base.config_hash());

    RunConfig partial = RunConfig::from_json_text(R"({"epochs": 7, "scl": {"lambda1": 3.5}})");
    CHECK(partial.epochs == 7);
    CHECK(partial.scl.lambda1 == 3.5);
    CHECK(partial.scl.lambda2 == 25.0);    // untouched default
    CHECK(partial.learning_rate == 0.0025);
}

TEST_CASE("eval report json line round-trips and drops wall clock") {
    EvalReport r;
    r.base_acc = 81.25;
    r.novel_acc = 64.0625;
    r.hm = harmonic_mean(r.base_acc, r.novel_acc);
    r.per_epoch_losses = {2.5, 1.75, 1.125};
    r.shot_accuracies = {{1, 40.0}, {4, 55.5}};
    r.config_hash = "deadbeef";
    r.seed = 3;
    r.label = "fewshot";
    r.wall_clock_sec = 12.5;

    std::string line = r.to_json_line();
    EvalReport back = EvalReport::from_json_line(line);
    CHECK(back.base_acc == r.base_acc);
    CHECK(back.novel_acc == r.novel_acc);
    CHECK(back.hm == r.hm);
    CHECK(back.per_epoch_losses == r.per_epoch_losses);
    CHECK(back.shot_accuracies == r.shot_accuracies);
    CHECK(back.config_hash == r.config_hash);
    CHECK(back.seed == r.seed);
    CHECK(back.label == r.label);

    EvalReport other = r;
    other.wall_clock_sec = 99.0;
    CHECK(other.to_json_line() == line);
}

TEST_CASE("emit_report appends in order") {
    std::string dir = (std::filesystem::temp_directory_path() / "plab_test_out").string();
    std::filesystem::remove_all(dir);
    EvalReport a;
    a.config_hash = "aaaa";
    a.seed = 1;
    a.label = "first";
    EvalReport b = a;
    b.seed = 2;
    b.label = "second";
    emit_report(a, nullptr, dir);
    emit_report(b, nullptr, dir);
    std::ifstream in(dir + "/results.jsonl");
    std::string l1, l2;
    REQUIRE(std::getline(in, l1));
    REQUIRE(std::getline(in, l2));
    CHECK(l1 == a.to_json_line());
    CHECK(l2 == b.to_json_line());
    std::filesystem::remove_all(dir);
}

TEST_CASE_FIXTURE(MicroFixture, "train keeps novel classes out of every gradient") {
    TrainResult res = train(run, pair, data.base_train(), frozen, vocab, 1);
    CHECK(res.frozen_grad_tensors_touched == 0);
    for (int y : res.labels_in_gradient) CHECK(y < run.dataset.base_count);
    for (int tok : res.class_tokens_in_gradient) {
        CHECK(vocab.is_class_token(tok));
        CHECK(tok < 2 + run.dataset.base_count);
    }
    CHECK_FALSE(res.labels_in_gradient.empty());
}

TEST_CASE_FIXTURE(MicroFixture, "train rejects novel labels in the tuning data") {
    std::vector<Example> bad = data.base_train();
    bad.push_back(data.novel_test().front());
    CHECK_THROWS_AS(train(run, pair, bad, frozen, vocab, 1), std::invalid_argument);
}

TEST_CASE_FIXTURE(MicroFixture, "same config and seed give bit-identical loss traces") {
    TrainResult a = train(run, pair, data.base_train(), frozen, vocab, 1);
    TrainResult b = train(run, pair, data.base_train(), frozen, vocab, 1);
    CHECK(a.iteration_losses == b.iteration_losses);
    CHECK(a.epoch_losses == b.epoch_losses);
    CHECK(a.final_prompts.prompt_checksum() == b.final_prompts.prompt_checksum());
    REQUIRE(a.aggregated.has_value());
    CHECK(a.aggregated->prompt_checksum() == b.aggregated->prompt_checksum());

    TrainResult c = train(run, pair, data.base_train(), frozen, vocab, 2);
    CHECK(a.iteration_losses != c.iteration_losses);
}

TEST_CASE_FIXTURE(MicroFixture, "frozen weights carry the same checksum through training") {
    std::uint64_t before = pair.weight_checksum();
    train(run, pair, data.base_train(), frozen, vocab, 1);
    CHECK(pair.weight_checksum() == before);
}

TEST_CASE_FIXTURE(MicroFixture, "null prompts evaluate the frozen zero-shot path") {
    EvalReport zs = evaluate_base_to_novel(pair, nullptr, data, frozen, vocab);
    CHECK(zs.hm == doctest::Approx(harmonic_mean(zs.base_acc, zs.novel_acc)).epsilon(1e-9));

    PromptConfig pcfg;
    pcfg.depth = 0;
    pcfg.template_init = false;
    PromptSet empty = init_prompts(pair, pcfg, vocab, 1);
    EvalReport same = evaluate_base_to_novel(pair, &empty, data, frozen, vocab);
    CHECK(same.base_acc == zs.base_acc);
    CHECK(same.novel_acc == zs.novel_acc);
}

TEST_CASE_FIXTURE(MicroFixture, "run_tune emits a self-consistent report") {
    TrainResult result;
    EvalReport report = run_tune(run, 1, pair, data, pool, vocab, &result);
    CHECK(report.hm ==
          doctest::Approx(harmonic_mean(report.base_acc, report.novel_acc)).epsilon(1e-9));
    CHECK(report.seed == 1);
    CHECK(report.config_hash == run.config_hash());
    CHECK(static_cast<int>(report.per_epoch_losses.size()) == run.epochs);
    CHECK(static_cast<int>(result.epoch_curve.size()) == run.epochs);
    CHECK(result.aggregated.has_value());
}

TEST_CASE_FIXTURE(MicroFixture, "ablation rows share seeds and report every variant") {
    RunConfig fast = run;
    fast.epochs = 2;
    fast.seeds = {1};
    AblationReport rep = run_ablation(fast, "components");
    REQUIRE(rep.rows.size() == 4u);
    for (const AblationRow& row : rep.rows) {
        REQUIRE(row.per_seed.size() == 1u);
        CHECK(row.per_seed[0].seed == 1);
    }
    CHECK(rep.render_table().find(rep.rows[0].name) != std::string::npos);

    AblationReport metrics = run_ablation(fast, "matching_metric");
    CHECK(metrics.rows.size() == 3u);
    CHECK_THROWS_AS(run_ablation(fast, "bogus_axis"), std::invalid_argument);
}

TEST_CASE_FIXTURE(MicroFixture, "few shot evaluation covers each K with mean and spread") {
    RunConfig fast = run;
    fast.epochs = 2;
    fast.seeds = {1, 2};
    FewShotResult res = evaluate_few_shot(fast, pair, data, {1, 2}, pool, vocab);
    for (int k : {1, 2}) {
        REQUIRE(res.per_seed_acc.at(k).size() == 2u);
        double mn = std::min(res.per_seed_acc.at(k)[0], res.per_seed_acc.at(k)[1]);
        double mx = std::max(res.per_seed_acc.at(k)[0], res.per_seed_acc.at(k)[1]);
        CHECK(res.mean_acc.at(k) == doctest::Approx((mn + mx) / 2).epsilon(1e-12));
        CHECK(res.spread.at(k) == doctest::Approx(mx - mn).epsilon(1e-12));
    }
    CHECK_THROWS_AS(
        evaluate_few_shot(fast, pair, data, {fast.dataset.train_per_class + 1}, pool, vocab),
        std::invalid_argument);
}

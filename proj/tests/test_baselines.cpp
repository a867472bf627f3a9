#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include "amint/baselines.hpp"
#include "amint/datagen.hpp"
#include "test_util.hpp"

using namespace amint;
using amint::test::TempDir;
using amint::test::contains;
using amint::test::message_of;

namespace {

std::vector<AttackScore> make_scores(const std::vector<double>& member_scores,
                                     const std::vector<double>& external_scores,
                                     int64_t first_id = 0) {
    std::vector<AttackScore> scores;
    int64_t id = first_id;
    for (double s : member_scores) scores.push_back({id++, s, true});
    for (double s : external_scores) scores.push_back({id++, s, false});
    return scores;
}

// Direct enumeration over the same candidate family the sweep uses: one
// below-minimum threshold plus every midpoint between adjacent distinct
// scores, smaller threshold winning ties.
ThresholdRule oracle_calibrate(const std::vector<AttackScore>& scores) {
    std::vector<double> values;
    for (const auto& s : scores) values.push_back(s.score);
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());

    std::vector<double> candidates{values.front() - 1.0};
    for (size_t i = 0; i + 1 < values.size(); ++i)
        candidates.push_back(values[i] + 0.5 * (values[i + 1] - values[i]));

    auto acc_at = [&](double t) {
        double pos = 0, neg = 0, tp = 0, tn = 0;
        for (const auto& s : scores) {
            if (s.true_membership) {
                ++pos;
                if (s.score > t) ++tp;
            } else {
                ++neg;
                if (s.score <= t) ++tn;
            }
        }
        return 0.5 * (tp / pos + tn / neg);
    };

    ThresholdRule rule;
    rule.threshold = candidates.front();
    rule.calibration_accuracy = acc_at(candidates.front());
    for (double t : candidates) {
        double a = acc_at(t);
        if (a > rule.calibration_accuracy) {
            rule.calibration_accuracy = a;
            rule.threshold = t;
        }
    }
    return rule;
}

BackboneSpec tiny_spec() {
    BackboneSpec spec;
    spec.blocks = {{2, 4, true}, {2, 6, true}, {2, 8, true}};
    spec.num_classes = 10;
    spec.input_h = 28;
    spec.input_w = 28;
    spec.input_c = 1;
    return spec;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("calibration finds the separating threshold") {
    auto scores = make_scores({2.0, 3.0, 4.0}, {-1.0, 0.0, 1.0});
    ThresholdRule rule = calibrate_threshold(scores);
    CHECK(rule.threshold == 1.5);
    CHECK(rule.calibration_accuracy == 1.0);
    CHECK(!rule.degenerate);
    CHECK(rule.direction == ThresholdDirection::SCORE_ABOVE_IS_MEMBER);
}

TEST_CASE("calibration ties break toward the smaller threshold") {
    // 0.5 and 2.5 both reach balanced accuracy 0.75.
    auto scores = make_scores({1.0, 3.0}, {0.0, 2.0});
    ThresholdRule rule = calibrate_threshold(scores);
    CHECK(rule.calibration_accuracy == 0.75);
    CHECK(rule.threshold == 0.5);
}

TEST_CASE("single-valued calibration scores produce a flagged chance rule") {
    auto scores = make_scores({0.42, 0.42}, {0.42, 0.42, 0.42});
    ThresholdRule rule = calibrate_threshold(scores);
    CHECK(rule.degenerate);
    CHECK(rule.calibration_accuracy == 0.5);
    CHECK(rule.threshold == 0.42);
}

TEST_CASE("calibration and evaluation require both roles") {
    CHECK(contains(message_of<config_error>([] {
              calibrate_threshold(make_scores({1.0, 2.0}, {}));
          }),
          "both roles"));
    ThresholdRule rule;
    CHECK(contains(message_of<config_error>([&] {
              evaluate_attack(rule, make_scores({1.0, 2.0}, {}));
          }),
          "both roles"));
    CHECK_THROWS_AS(calibrate_threshold({}), config_error);
    CHECK(contains(message_of<config_error>([&] { evaluate_attack(rule, {}); }), "empty"));
}

TEST_CASE("the sweep matches an exhaustive midpoint oracle") {
    Rng rng(321);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> member_scores, external_scores;
        int n = 20 + static_cast<int>(rng.below(20));
        for (int i = 0; i < n; ++i) {
            // Coarse grid so duplicate scores appear across and within roles.
            double v = static_cast<double>(rng.below(12)) / 2.0;
            if (rng.next_double() < 0.5)
                member_scores.push_back(v);
            else
                external_scores.push_back(v);
        }
        if (member_scores.empty()) member_scores.push_back(1.0);
        if (external_scores.empty()) external_scores.push_back(2.0);
        auto scores = make_scores(member_scores, external_scores);

        ThresholdRule fast = calibrate_threshold(scores);
        ThresholdRule slow = oracle_calibrate(scores);
        CHECK(fast.calibration_accuracy == slow.calibration_accuracy);
        CHECK(fast.threshold == slow.threshold);
    }
}

TEST_CASE("attack evaluation matches a hand count on twenty samples") {
    ThresholdRule rule;
    rule.threshold = 0.5;
    auto scores = make_scores({0.9, 0.6, 0.4, 0.51, 0.55, 0.3, 0.8, 0.52},
                              {0.2, 0.49, 0.5, 0.7, 0.1, 0.3, 0.45, 0.6, 0.15, 0.25, 0.35, 0.05});
    // Members above 0.5: six of eight. Externals at or below 0.5: ten of twelve.
    CHECK(evaluate_attack(rule, scores) == 0.5 * (6.0 / 8.0 + 10.0 / 12.0));
}

TEST_CASE("constant scores evaluate to chance under any rule") {
    auto scores = make_scores({0.4, 0.4, 0.4}, {0.4, 0.4});
    for (double t : {-1.0, 0.4, 2.0}) {
        ThresholdRule rule;
        rule.threshold = t;
        CHECK(evaluate_attack(rule, scores) == 0.5);
    }
}

TEST_CASE("a perfect rule carries over to consistent evaluation scores") {
    auto fit = make_scores({2.0, 3.0}, {0.0, 1.0}, 0);
    auto eval = make_scores({2.5, 9.0}, {-3.0, 1.2}, 100);
    AttackOutcome outcome = run_threshold_attack(fit, eval);
    CHECK(outcome.rule.calibration_accuracy == 1.0);
    CHECK(outcome.eval_accuracy == 1.0);
}

TEST_CASE("calibration refuses evaluation ids it has already seen") {
    auto fit = make_scores({2.0, 3.0}, {0.0, 1.0}, 0);
    auto eval = make_scores({2.5}, {0.5}, 3);  // id 3 collides with fit
    CHECK(contains(message_of<config_error>([&] { run_threshold_attack(fit, eval); }),
                   "appears in both"));
}

TEST_CASE("balanced accuracy is invariant under monotone score transforms") {
    Rng rng(654);
    auto transform = [](const std::vector<AttackScore>& scores, auto&& f) {
        std::vector<AttackScore> out = scores;
        for (auto& s : out) s.score = f(s.score);
        return out;
    };
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> mf, ef, me, ee;
        for (int i = 0; i < 30; ++i) {
            double v = static_cast<double>(rng.below(16)) / 4.0 - 2.0;
            (i % 2 == 0 ? mf : ef).push_back(v);
        }
        for (int i = 0; i < 20; ++i) {
            double v = static_cast<double>(rng.below(16)) / 4.0 - 2.0;
            (i % 2 == 0 ? me : ee).push_back(v);
        }
        auto fit = make_scores(mf, ef, 0);
        auto eval = make_scores(me, ee, 1000);
        AttackOutcome base = run_threshold_attack(fit, eval);

        auto affine = [](double s) { return 3.0 * s + 1.0; };
        auto cubic = [](double s) { return s * s * s; };
        auto expo = [](double s) { return std::exp(s); };
        AttackOutcome a = run_threshold_attack(transform(fit, affine), transform(eval, affine));
        AttackOutcome c = run_threshold_attack(transform(fit, cubic), transform(eval, cubic));
        AttackOutcome e = run_threshold_attack(transform(fit, expo), transform(eval, expo));
        for (const AttackOutcome* o : {&a, &c, &e}) {
            CHECK(o->rule.calibration_accuracy == base.rule.calibration_accuracy);
            CHECK(o->eval_accuracy == base.eval_accuracy);
        }
    }
}

TEST_CASE("attack scores agree with direct per-sample arithmetic") {
    TempDir tmp;
    write_synthetic_dataset(tmp.path, "mnist", 40, 10, 5);
    DatasetHandle handle = load_dataset("mnist", tmp.path);
    SplitPlan plan;
    plan.seed = 5;
    SplitResult split = make_split(handle, plan);

    MintHeadSpec head;
    head.per_path_conv_channels = {4};
    head.hidden_dim = 8;
    EnhancedModel model(tiny_spec(), TapSetup::ENTRY, head, 61);

    std::vector<SplitRecord> records;
    for (size_t i = 0; i < 5; ++i) records.push_back(split.members[i]);
    for (size_t i = 0; i < 5; ++i) records.push_back(split.externals[i]);

    auto loss_scores = score_loss_attack(model, handle.train_pool, records);
    auto conf_scores = score_confidence_attack(model, handle.train_pool, records);
    REQUIRE(loss_scores.size() == 10);
    REQUIRE(conf_scores.size() == 10);

    for (size_t i = 1; i < loss_scores.size(); ++i)
        CHECK(loss_scores[i - 1].sample_id < loss_scores[i].sample_id);

    std::vector<int64_t> ids;
    for (const auto& s : loss_scores) ids.push_back(s.sample_id);
    Tensor logits = model.forward_audited(gather_images(handle.train_pool, ids), false);
    auto labels = gather_labels(handle.train_pool, ids);
    int classes = logits.dim(1);
    for (size_t i = 0; i < ids.size(); ++i) {
        const float* row = logits.data() + i * static_cast<size_t>(classes);
        double mx = row[0];
        for (int c = 1; c < classes; ++c) mx = std::max(mx, static_cast<double>(row[c]));
        double sum = 0.0;
        for (int c = 0; c < classes; ++c) sum += std::exp(static_cast<double>(row[c]) - mx);
        double lse = mx + std::log(sum);
        double ce = lse - static_cast<double>(row[labels[i]]);
        CHECK(loss_scores[i].score == doctest::Approx(-ce).epsilon(1e-12));
        CHECK(loss_scores[i].score <= 0.0);
        double max_prob = std::exp(mx - lse);
        CHECK(conf_scores[i].score == doctest::Approx(max_prob).epsilon(1e-12));
        CHECK(conf_scores[i].score > 0.0);
        CHECK(conf_scores[i].score <= 1.0);
        bool is_member = std::any_of(split.members.begin(), split.members.end(),
                                     [&](const SplitRecord& r) { return r.id == ids[i]; });
        CHECK(loss_scores[i].true_membership == is_member);
        CHECK(conf_scores[i].true_membership == is_member);
    }

    SUBCASE("a zeroed model yields uniform predictions") {
        for (auto& p : model.all_params()) p.value->zero();
        auto uniform = score_confidence_attack(model, handle.train_pool, records);
        auto chance = score_loss_attack(model, handle.train_pool, records);
        for (const auto& s : uniform) CHECK(s.score == doctest::Approx(0.1).epsilon(1e-15));
        for (const auto& s : chance)
            CHECK(s.score == doctest::Approx(-std::log(10.0)).epsilon(1e-15));
    }
    SUBCASE("duplicate and out-of-range records are rejected") {
        auto dupes = records;
        dupes.push_back(records.front());
        CHECK(contains(message_of<config_error>([&] {
                  score_loss_attack(model, handle.train_pool, dupes);
              }),
              "duplicate"));
        auto outside = records;
        outside[0].id = handle.train_pool.count() + 7;
        CHECK(contains(message_of<config_error>([&] {
                  score_confidence_attack(model, handle.train_pool, outside);
              }),
              "outside"));
        CHECK_THROWS_AS(score_loss_attack(model, handle.train_pool, {}), config_error);
    }
}

TEST_CASE("score csv round-trips exactly and is byte-stable") {
    TempDir tmp;
    std::vector<AttackScore> scores{
        {0, -2.3456789012345678, true},
        {17, 0.1, false},
        {123456789012LL, -0.0001, true},
    };
    auto a = tmp.path / "a.csv";
    auto b = tmp.path / "b.csv";
    write_scores_csv(a, scores);
    auto loaded = read_scores_csv(a);
    REQUIRE(loaded.size() == scores.size());
    for (size_t i = 0; i < scores.size(); ++i) {
        CHECK(loaded[i].sample_id == scores[i].sample_id);
        CHECK(loaded[i].score == scores[i].score);  // full-precision text
        CHECK(loaded[i].true_membership == scores[i].true_membership);
    }
    write_scores_csv(b, loaded);
    CHECK(slurp(a) == slurp(b));
    CHECK(contains(slurp(a), "sample_id,score,true_membership\n"));
}

TEST_CASE("score csv rejects malformed input") {
    TempDir tmp;
    auto path = tmp.path / "s.csv";
    SUBCASE("bad header") {
        std::ofstream(path) << "id,score\n";
        CHECK(contains(message_of<data_error>([&] { read_scores_csv(path); }), "bad header"));
    }
    SUBCASE("wrong field count") {
        std::ofstream(path) << "sample_id,score,true_membership\n1,0.5\n";
        CHECK(contains(message_of<data_error>([&] { read_scores_csv(path); }), "line 2"));
    }
    SUBCASE("membership flag is not binary") {
        std::ofstream(path) << "sample_id,score,true_membership\n1,0.5,yes\n";
        CHECK(contains(message_of<data_error>([&] { read_scores_csv(path); }), "0 or 1"));
    }
    SUBCASE("non-finite score") {
        std::ofstream(path) << "sample_id,score,true_membership\n1,inf,1\n";
        CHECK(contains(message_of<data_error>([&] { read_scores_csv(path); }), "non-finite"));
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(read_scores_csv(tmp.path / "gone.csv"), data_error);
    }
}

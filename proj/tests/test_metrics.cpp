#include "doctest.h"

#include "fedcap/errors.hpp"
#include "fedcap/metrics.hpp"

#include <algorithm>
#include <random>

using namespace fedcap;

namespace {

RoundReport make_report(std::size_t round, const std::vector<std::pair<double, double>>& acc) {
    RoundReport r;
    r.round = round;
    for (std::size_t i = 0; i < acc.size(); ++i) {
        ClientRoundRow row;
        row.id = static_cast<ClientId>(i);
        row.acc_customized = acc[i].first;
        row.acc_personalized = acc[i].second;
        r.rows.push_back(row);
    }
    return r;
}

}  // namespace

TEST_CASE("confusion counts") {
    const auto c = confusion({0, 1, 2}, {1, 2, 5}, 10);
    CHECK(c.tp == 2);
    CHECK(c.fn == 1);
    CHECK(c.fp == 1);
    CHECK(c.tn == 6);
}

TEST_CASE("detection metrics examples") {
    const auto all = detection_metrics(confusion({0, 1, 2}, {0, 1, 2}, 10));
    CHECK(*all.dacc == doctest::Approx(100.0));
    CHECK(*all.fpr == doctest::Approx(0.0));
    CHECK(*all.fnr == doctest::Approx(0.0));

    const auto lie = detection_metrics(confusion({0, 1, 2}, {}, 10));
    CHECK(*lie.dacc == doctest::Approx(70.0));
    CHECK(*lie.fpr == doctest::Approx(0.0));
    CHECK(*lie.fnr == doctest::Approx(100.0));

    const auto benign_only = detection_metrics(confusion({}, {}, 5));
    CHECK_FALSE(benign_only.fnr.has_value());
    CHECK(*benign_only.fpr == doctest::Approx(0.0));
}

TEST_CASE("DAcc is 100 exactly when FPR and FNR are 0") {
    std::mt19937 rng(1);
    for (int t = 0; t < 300; ++t) {
        std::set<ClientId> mal, flagged;
        for (ClientId i = 0; i < 8; ++i) {
            if (rng() % 3 == 0) mal.insert(i);
            if (rng() % 3 == 0) flagged.insert(i);
        }
        if (mal.empty() || mal.size() == 8) continue;
        const auto m = detection_metrics(confusion(mal, flagged, 8));
        CHECK((*m.dacc == 100.0) == (*m.fpr == 0.0 && *m.fnr == 0.0));
    }
}

TEST_CASE("tacc") {
    const auto r = make_report(3, {{0.9, 0.9}, {0.9, 0.9}, {0.1, 0.1}});
    CHECK(tacc(r, {0, 1}, ModelChoice::customized) == doctest::Approx(0.9));

    // Family averages: customized 0.6, personalized 0.55; per-client max would give 0.8.
    const auto mixed = make_report(0, {{1.0, 0.5}, {0.2, 0.6}});
    CHECK(tacc(mixed, {0, 1}, ModelChoice::best_of_both) == doctest::Approx(0.6));
    CHECK(tacc(mixed, {0, 1}, ModelChoice::personalized) == doctest::Approx(0.55));
    CHECK_THROWS_AS(tacc(mixed, {}, ModelChoice::customized), ConfigError);
    CHECK_THROWS_AS(tacc(std::vector<RoundReport>{}, {0}, ModelChoice::customized), ConfigError);
}

TEST_CASE("tacc of a run uses the final round") {
    std::vector<RoundReport> reports{make_report(0, {{0.2, 0.2}}), make_report(1, {{0.7, 0.4}})};
    CHECK(tacc(reports, {0}, ModelChoice::best_of_both) == doctest::Approx(0.7));
    CHECK(tacc_series(reports, {0}, ModelChoice::personalized) == std::vector<double>{0.2, 0.4});
}

TEST_CASE("r2acc") {
    std::vector<double> monotone;
    for (int i = 0; i < 15; ++i) monotone.push_back(0.1 * i * 0.9);
    const auto idx = r2acc(monotone, 0.8);
    REQUIRE(idx.has_value());
    CHECK(*idx == 9);
    CHECK_FALSE(r2acc(std::vector<double>{0.1, 0.5, 0.7}, 0.8).has_value());
    CHECK(*r2acc(std::vector<double>{0.5, 0.85, 0.6, 0.9}, 0.8) == 1);

    std::vector<RoundReport> reports;
    for (std::size_t t = 0; t < 5; ++t) reports.push_back(make_report(t, {{0.2 * static_cast<double>(t), 0.0}}));
    CHECK(*r2acc(reports, {0}, ModelChoice::customized, 0.6) == 3);
}

TEST_CASE("model choice parsing") {
    CHECK(parse_model_choice("best") == ModelChoice::best_of_both);
    CHECK(parse_model_choice("customized") == ModelChoice::customized);
    CHECK_THROWS_AS(parse_model_choice("other"), ConfigError);
}

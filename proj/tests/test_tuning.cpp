#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "tracer/tuning.hpp"

using namespace tracer;

namespace {

using L = ContaminationLabel;

std::vector<ScoredGold> dev_of(std::initializer_list<std::pair<double, L>> points) {
    std::vector<ScoredGold> dev;
    for (auto [s, g] : points) dev.push_back({s, g});
    return dev;
}

// ---- exhaustive oracles, written directly from the selection rules ----

std::vector<double> oracle_grid(double step) {
    std::vector<double> grid;
    for (std::size_t i = 0;; ++i) {
        double v = static_cast<double>(i) * step;
        if (v > 1.0 + 1e-12) break;
        grid.push_back(std::min(v, 1.0));
    }
    return grid;
}

std::pair<double, double> oracle_tune_triage(const std::vector<ScoredGold>& dev,
                                             double recall_floor, double precision_floor,
                                             double step) {
    auto grid = oracle_grid(step);
    double tau_low = -1.0, tau_high = -1.0;
    std::size_t contaminated = 0;
    for (const auto& d : dev) {
        if (d.gold != L::U) ++contaminated;
    }
    for (double g : grid) {
        std::size_t kept = 0;
        for (const auto& d : dev) {
            if (d.gold != L::U && d.sigma > g) ++kept;
        }
        double recall = contaminated == 0 ? 1.0 : double(kept) / contaminated;
        if (recall >= recall_floor) tau_low = g;
    }
    for (auto it = grid.begin(); it != grid.end(); ++it) {
        std::size_t region = 0, fi = 0;
        for (const auto& d : dev) {
            if (d.sigma >= *it) {
                ++region;
                if (d.gold == L::FI) ++fi;
            }
        }
        double precision = region == 0 ? 1.0 : double(fi) / region;
        if (precision >= precision_floor) {
            tau_high = *it;
            break;
        }
    }
    return {tau_low, tau_high};
}

double oracle_binary_f1(const std::vector<ScoredGold>& dev, double t) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& d : dev) {
        bool gc = d.gold != L::U;
        bool pc = d.sigma > t;
        if (pc && gc) ++tp;
        if (pc && !gc) ++fp;
        if (!pc && gc) ++fn;
    }
    double p = tp + fp == 0 ? 0.0 : double(tp) / (tp + fp);
    double r = tp + fn == 0 ? 0.0 : double(tp) / (tp + fn);
    return p + r == 0 ? 0.0 : 2 * p * r / (p + r);
}

double oracle_tune_binary(const std::vector<ScoredGold>& dev, double step) {
    double best_t = 0.0, best_f1 = -1.0;
    for (double g : oracle_grid(step)) {
        double f1 = oracle_binary_f1(dev, g);
        if (f1 > best_f1) {
            best_f1 = f1;
            best_t = g;
        }
    }
    return best_t;
}

double oracle_fine_macro_f1(const std::vector<ScoredGold>& dev, double t1, double t2, double t3) {
    double sum_f1 = 0.0;
    for (auto label : all_labels) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (const auto& d : dev) {
            L pred = d.sigma > t1   ? L::FI
                     : d.sigma > t2 ? L::NI
                     : d.sigma > t3 ? L::SL
                                    : L::U;
            if (pred == label && d.gold == label) ++tp;
            if (pred == label && d.gold != label) ++fp;
            if (pred != label && d.gold == label) ++fn;
        }
        double p = tp + fp == 0 ? 0.0 : double(tp) / (tp + fp);
        double r = tp + fn == 0 ? 0.0 : double(tp) / (tp + fn);
        sum_f1 += p + r == 0 ? 0.0 : 2 * p * r / (p + r);
    }
    return sum_f1 / 4.0;
}

std::tuple<double, double, double> oracle_tune_fine(const std::vector<ScoredGold>& dev,
                                                    double step) {
    auto grid = oracle_grid(step);
    std::tuple<double, double, double> best{2, 2, 2};
    double best_f1 = -1.0;
    for (std::size_t i1 = 0; i1 < grid.size(); ++i1) {
        for (std::size_t i2 = 0; i2 < i1; ++i2) {
            for (std::size_t i3 = 0; i3 < i2; ++i3) {
                double f1 = oracle_fine_macro_f1(dev, grid[i1], grid[i2], grid[i3]);
                auto key = std::make_tuple(grid[i1], grid[i2], grid[i3]);
                if (f1 > best_f1 || (f1 == best_f1 && key < best)) {
                    best_f1 = f1;
                    best = key;
                }
            }
        }
    }
    return best;
}

std::vector<ScoredGold> random_dev(std::mt19937_64& rng, std::size_t max_n) {
    std::vector<ScoredGold> dev;
    std::size_t n = 1 + rng() % max_n;
    auto unit = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    for (std::size_t i = 0; i < n; ++i) dev.push_back({unit(), all_labels[rng() % 4]});
    return dev;
}

}  // namespace

TEST_CASE("threshold grid spans [0,1] inclusive") {
    auto g = threshold_grid(0.05);
    REQUIRE(g.size() == 21);
    CHECK(g.front() == 0.0);
    CHECK(g.back() == 1.0);
    CHECK(threshold_grid(0.01).size() == 101);
    CHECK_THROWS_AS(threshold_grid(0.0), config_error);
    CHECK_THROWS_AS(threshold_grid(1.5), config_error);
}

TEST_CASE("triage tuner matches the separable synthetic fixture") {
    auto dev = dev_of({{0.75, L::NI}, {0.8, L::SL}, {0.9, L::FI}, {1.0, L::FI},
                       {0.0, L::U}, {0.1, L::U}, {0.2, L::U}, {0.3, L::U}});
    auto result = tune_triage({dev, 0.9, 0.9, 0.05});
    auto [olow, ohigh] = oracle_tune_triage(dev, 0.9, 0.9, 0.05);
    CHECK(result.thresholds.tau_low == olow);
    CHECK(result.thresholds.tau_high == ohigh);
    // tie toward more pruning: 0.65 and 0.7 both keep recall 1.0; 0.7 wins
    CHECK_THAT(result.thresholds.tau_low, Catch::Matchers::WithinAbs(0.7, 1e-9));
    CHECK(result.low_grid.size() == 21);
    CHECK(result.high_grid.size() == 21);
}

TEST_CASE("triage tuner accepts the reference thresholds on a consistent fixture") {
    // recall(0.6)=1, recall(0.65)=0.8; precision first reaches 0.9 at 0.9
    auto dev = dev_of({{0.62, L::NI}, {0.63, L::SL}, {0.7, L::NI}, {0.75, L::SL},
                       {0.8, L::NI}, {0.85, L::SL}, {0.88, L::NI}, {0.92, L::FI},
                       {0.95, L::FI}, {1.0, L::FI},
                       {0.1, L::U}, {0.2, L::U}, {0.3, L::U}, {0.5, L::U}});
    auto result = tune_triage({dev, 0.9, 0.9, 0.05});
    CHECK_THAT(result.thresholds.tau_low, Catch::Matchers::WithinAbs(0.6, 1e-9));
    CHECK_THAT(result.thresholds.tau_high, Catch::Matchers::WithinAbs(0.9, 1e-9));
    auto [olow, ohigh] = oracle_tune_triage(dev, 0.9, 0.9, 0.05);
    CHECK(result.thresholds.tau_low == olow);
    CHECK(result.thresholds.tau_high == ohigh);
}

TEST_CASE("zero recall floor prunes maximally") {
    auto dev = dev_of({{0.9, L::FI}, {0.1, L::U}});
    auto result = tune_triage({dev, 0.0, 0.0, 0.05});
    CHECK(result.thresholds.tau_low == 1.0);  // largest grid value
    CHECK(result.thresholds.tau_high == 0.0);  // smallest grid value satisfies floor 0
}

TEST_CASE("unreachable floors report the best achievable value") {
    // a contaminated pair at sigma 0 can never be kept
    auto dev = dev_of({{0.0, L::NI}, {0.9, L::FI}});
    CHECK_THROWS_MATCHES(tune_triage({dev, 1.0, 0.9, 0.05}), data_error,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("best achievable recall")));

    // a non-FI pair at sigma 1.0 keeps every auto-FI region impure
    auto dev2 = dev_of({{1.0, L::NI}, {0.9, L::SL}});
    CHECK_THROWS_MATCHES(tune_triage({dev2, 0.0, 0.5, 0.05}), data_error,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("best achievable precision")));

    // with no FI pairs but nothing at sigma 1.0, the first grid value whose
    // auto-FI region is empty is vacuously precise and tuning still succeeds
    auto dev3 = dev_of({{0.9, L::NI}, {0.95, L::SL}});
    auto ok = tune_triage({dev3, 0.0, 0.5, 0.05});
    CHECK(ok.thresholds.tau_high == oracle_tune_triage(dev3, 0.0, 0.5, 0.05).second);
    CHECK(ok.thresholds.tau_high > 0.9);
}

TEST_CASE("triage tuner matches the oracle on random dev sets") {
    std::mt19937_64 rng(31);
    int checked = 0;
    for (int trial = 0; trial < 60; ++trial) {
        auto dev = random_dev(rng, 200);
        double rf = 0.5 + 0.4 * (rng() % 5) / 5.0;
        double pf = 0.1 + 0.2 * (rng() % 4) / 4.0;
        auto [olow, ohigh] = oracle_tune_triage(dev, rf, pf, 0.05);
        try {
            auto result = tune_triage({dev, rf, pf, 0.05});
            CHECK(result.thresholds.tau_low == olow);
            CHECK(result.thresholds.tau_high == ohigh);
            ++checked;
        } catch (const data_error&) {
            CHECK((olow < 0.0 || ohigh < 0.0));  // oracle agrees no grid value works
        }
    }
    CHECK(checked > 10);
}

TEST_CASE("binary tuner picks the smallest grid point above the separation") {
    auto dev = dev_of({{0.8, L::NI}, {0.9, L::FI}, {0.1, L::U}, {0.2, L::U}});
    auto result = tune_binary_threshold(dev, 0.05);
    CHECK_THAT(result.threshold, Catch::Matchers::WithinAbs(0.2, 1e-9));
    CHECK(result.f1 == 1.0);
    CHECK(result.threshold == oracle_tune_binary(dev, 0.05));
    CHECK(result.grid.size() == 21);
}

TEST_CASE("binary tuner accepts the reference threshold on a consistent fixture") {
    auto dev = dev_of({{0.62, L::NI}, {0.7, L::SL}, {0.9, L::FI},
                       {0.1, L::U}, {0.55, L::U}, {0.6, L::U}});
    auto result = tune_binary_threshold(dev, 0.05);
    CHECK_THAT(result.threshold, Catch::Matchers::WithinAbs(0.6, 1e-9));
    CHECK(result.f1 == 1.0);
}

TEST_CASE("single contaminated dev pair tunes below its sigma") {
    auto dev = dev_of({{0.5, L::FI}});
    auto result = tune_binary_threshold(dev, 0.05);
    CHECK(result.threshold == 0.0);  // smallest grid point of the tie
    CHECK(result.f1 == 1.0);
    CHECK(result.threshold == oracle_tune_binary(dev, 0.05));
}

TEST_CASE("binary tuner matches the oracle on random dev sets") {
    std::mt19937_64 rng(32);
    for (int trial = 0; trial < 80; ++trial) {
        auto dev = random_dev(rng, 200);
        auto result = tune_binary_threshold(dev, 0.05);
        CHECK(result.threshold == oracle_tune_binary(dev, 0.05));
    }
    CHECK_THROWS_AS(tune_binary_threshold({}, 0.05), data_error);
}

TEST_CASE("fine tuner reproduces the reference triple on a consistent fixture") {
    auto dev = dev_of({{0.90, L::FI}, {0.87, L::FI}, {0.855, L::NI}, {0.76, L::NI},
                       {0.748, L::SL}, {0.72, L::SL}, {0.705, L::U}, {0.30, L::U}});
    auto result = tune_fine_thresholds(dev, 0.01, /*keep_grid=*/false);
    CHECK_THAT(result.thresholds.t1, Catch::Matchers::WithinAbs(0.86, 1e-9));
    CHECK_THAT(result.thresholds.t2, Catch::Matchers::WithinAbs(0.75, 1e-9));
    CHECK_THAT(result.thresholds.t3, Catch::Matchers::WithinAbs(0.71, 1e-9));
    CHECK(result.macro_f1 == 1.0);
    auto [o1, o2, o3] = oracle_tune_fine(dev, 0.01);
    CHECK(result.thresholds.t1 == o1);
    CHECK(result.thresholds.t2 == o2);
    CHECK(result.thresholds.t3 == o3);
}

TEST_CASE("four-point fixture ties resolve lexicographically") {
    auto dev = dev_of({{0.95, L::FI}, {0.80, L::NI}, {0.73, L::SL}, {0.2, L::U}});
    auto result = tune_fine_thresholds(dev, 0.05, /*keep_grid=*/true);
    CHECK(result.macro_f1 == 1.0);
    auto [o1, o2, o3] = oracle_tune_fine(dev, 0.05);
    CHECK(result.thresholds.t1 == o1);
    CHECK(result.thresholds.t2 == o2);
    CHECK(result.thresholds.t3 == o3);
    // grid table covers every ordered triple
    std::size_t n = threshold_grid(0.05).size();
    CHECK(result.grid.size() == n * (n - 1) * (n - 2) / 6);
}

TEST_CASE("all-U dev set pushes t3 above the largest sigma") {
    auto dev = dev_of({{0.2, L::U}, {0.5, L::U}, {0.9, L::U}});
    auto result = tune_fine_thresholds(dev, 0.05, /*keep_grid=*/false);
    CHECK(result.thresholds.t3 >= 0.9 - 1e-9);
    auto [o1, o2, o3] = oracle_tune_fine(dev, 0.05);
    CHECK(result.thresholds.t3 == o3);
}

TEST_CASE("fine tuner matches the oracle on random dev sets") {
    std::mt19937_64 rng(33);
    for (int trial = 0; trial < 15; ++trial) {
        auto dev = random_dev(rng, 60);
        auto result = tune_fine_thresholds(dev, 0.1, /*keep_grid=*/false);
        auto [o1, o2, o3] = oracle_tune_fine(dev, 0.1);
        CHECK(result.thresholds.t1 == o1);
        CHECK(result.thresholds.t2 == o2);
        CHECK(result.thresholds.t3 == o3);
    }
}

TEST_CASE("pr curve endpoints and monotone recall") {
    auto dev = dev_of({{0.9, L::FI}, {0.7, L::NI}, {0.4, L::SL}, {0.3, L::U}, {0.6, L::U}});
    auto curve = pr_curve(dev, 0.05);
    REQUIRE(curve.size() == 21);
    CHECK(curve.front().threshold == 0.0);
    CHECK(curve.front().recall == 1.0);  // every sigma > 0
    CHECK(curve.back().threshold == 1.0);
    CHECK(curve.back().recall == 0.0);  // strict >
    for (std::size_t i = 1; i < curve.size(); ++i) {
        CHECK(curve[i].recall <= curve[i - 1].recall + 1e-15);
    }
}

TEST_CASE("pr curve matches an exhaustive recount on random data") {
    std::mt19937_64 rng(34);
    for (int trial = 0; trial < 20; ++trial) {
        auto dev = random_dev(rng, 120);
        auto curve = pr_curve(dev, 0.05);
        auto grid = oracle_grid(0.05);
        REQUIRE(curve.size() == grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) {
            std::size_t tp = 0, fp = 0, fn = 0;
            for (const auto& d : dev) {
                bool gc = d.gold != L::U;
                bool pc = d.sigma > grid[i];
                if (pc && gc) ++tp;
                if (pc && !gc) ++fp;
                if (!pc && gc) ++fn;
            }
            double p = tp + fp == 0 ? 0.0 : double(tp) / (tp + fp);
            double r = tp + fn == 0 ? 0.0 : double(tp) / (tp + fn);
            CHECK_THAT(curve[i].precision, Catch::Matchers::WithinAbs(p, 1e-12));
            CHECK_THAT(curve[i].recall, Catch::Matchers::WithinAbs(r, 1e-12));
        }
    }
}

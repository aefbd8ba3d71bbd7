#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "finsent/event_study.hpp"
#include "finsent/rng.hpp"
#include "test_util.hpp"

using namespace finsent;

namespace {

Date d(int y, int m, int day) { return Date{y, m, day}; }

TradingCalendar make_calendar(int n, int year = 2021) {
    std::vector<Date> dates;
    int month = 1, day = 1;
    for (int i = 0; i < n; ++i) {
        dates.push_back(d(year, month, day));
        if (++day > days_in_month(year, month)) {
            day = 1;
            if (++month > 12) {
                month = 1;
                ++year;
            }
        }
    }
    return TradingCalendar(dates);
}

ReturnSeries series_on(const TradingCalendar& cal, const std::vector<double>& values,
                       std::size_t start = 0, const std::string& id = "T") {
    ReturnSeries out;
    out.instrument_id = id;
    for (std::size_t i = 0; i < values.size(); ++i) {
        out.observations.emplace_back(cal.dates()[start + i], values[i]);
    }
    return out;
}

std::vector<double> random_returns(int n, std::uint64_t stream) {
    auto gen = derive_stream(31, stream);
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out.push_back((uniform01(gen) - 0.5) * 0.04);
    return out;
}

} // namespace

TEST_CASE("resolve_event_date picks the first trading date after submission") {
    const TradingCalendar cal({d(2021, 1, 4), d(2021, 1, 5), d(2021, 1, 8)});
    CHECK(resolve_event_date(d(2021, 1, 4), cal) == d(2021, 1, 5));
    CHECK(resolve_event_date(d(2021, 1, 6), cal) == d(2021, 1, 8)); // weekend submission
    CHECK(resolve_event_date(d(2021, 1, 1), cal) == d(2021, 1, 4));
    CHECK_THROWS_AS(resolve_event_date(d(2021, 1, 8), cal), InsufficientDataError);
}

TEST_CASE("compute_ar basics") {
    const TradingCalendar cal = make_calendar(21);
    const std::vector<double> values = random_returns(21, 0);
    const ReturnSeries actual = series_on(cal, values);
    EventSpec event{"T", cal.dates()[9], cal.dates()[10], {3}};

    SECTION("prediction equal to actual gives zero abnormal returns") {
        // constant series, constant-mean model at that level
        const ReturnSeries flat = series_on(cal, std::vector<double>(21, 0.007));
        const AbnormalReturnSeries ar =
            compute_ar(event, 3, flat, ConstantMeanModel{0.007}, NormalModelInputs{}, cal);
        REQUIRE(ar.values.size() == 7);
        for (double v : ar.values) CHECK(v == Catch::Approx(0.0).margin(1e-18));
    }

    SECTION("zero-mean model returns the actual series") {
        const AbnormalReturnSeries ar =
            compute_ar(event, 3, actual, ConstantMeanModel{0.0}, NormalModelInputs{}, cal);
        REQUIRE(ar.values.size() == 7);
        for (int offset = -3; offset <= 3; ++offset) {
            CHECK(ar.at_offset(offset) == values[static_cast<std::size_t>(10 + offset)]);
        }
    }

    SECTION("market model subtracts alpha + beta * market") {
        const std::vector<double> mkt_values = random_returns(21, 1);
        const ReturnSeries market = series_on(cal, mkt_values, 0, "MKT");
        NormalModelInputs inputs;
        inputs.market = &market;
        const MarketModel model{0.001, 1.4};
        const AbnormalReturnSeries ar = compute_ar(event, 2, actual, model, inputs, cal);
        for (int offset = -2; offset <= 2; ++offset) {
            const auto i = static_cast<std::size_t>(10 + offset);
            const double expect = values[i] - (0.001 + 1.4 * mkt_values[i]);
            CHECK(ar.at_offset(offset) == Catch::Approx(expect).epsilon(1e-12));
        }
    }

    SECTION("window running off the calendar throws") {
        EventSpec early{"T", cal.dates()[0], cal.dates()[1], {3}};
        CHECK_THROWS_AS(
            compute_ar(early, 3, actual, ConstantMeanModel{0.0}, NormalModelInputs{}, cal),
            InsufficientDataError);
        EventSpec late{"T", cal.dates()[18], cal.dates()[19], {3}};
        CHECK_THROWS_AS(
            compute_ar(late, 3, actual, ConstantMeanModel{0.0}, NormalModelInputs{}, cal),
            InsufficientDataError);
    }

    SECTION("missing return inside the window throws") {
        std::vector<double> gappy = values;
        ReturnSeries with_gap = series_on(cal, gappy);
        // remove the observation at the event date itself
        with_gap.observations.erase(with_gap.observations.begin() + 10);
        CHECK_THROWS_AS(
            compute_ar(event, 3, with_gap, ConstantMeanModel{0.0}, NormalModelInputs{}, cal),
            InsufficientDataError);
    }

    SECTION("missing market input inside the window throws") {
        ReturnSeries market = series_on(cal, random_returns(21, 2), 0, "MKT");
        market.observations.erase(market.observations.begin() + 12);
        NormalModelInputs inputs;
        inputs.market = &market;
        CHECK_THROWS_AS(compute_ar(event, 3, actual, MarketModel{0.0, 1.0}, inputs, cal),
                        InsufficientDataError);
    }
}

TEST_CASE("car sums abnormal returns") {
    AbnormalReturnSeries ar;
    ar.firm_id = "T";
    ar.event_date = d(2021, 2, 1);
    ar.window = 1;
    ar.values = {0.01, -0.005, 0.002};
    const CARValue car = compute_car(ar);
    CHECK(car.car == Catch::Approx(0.007).epsilon(1e-14));
    CHECK(car.window == 1);
    CHECK(car.firm_id == "T");

    ar.values = {0.0, 0.0, 0.0};
    CHECK(compute_car(ar).car == 0.0);
}

TEST_CASE("car equals an independently ordered resummation") {
    auto gen = derive_stream(32, 0);
    AbnormalReturnSeries ar;
    ar.window = 3;
    for (int i = 0; i < 7; ++i) ar.values.push_back((uniform01(gen) - 0.5) * 0.05);
    const double car = compute_car(ar).car;

    std::vector<double> shuffled = ar.values;
    std::sort(shuffled.begin(), shuffled.end());
    double forward = 0.0;
    for (double v : shuffled) forward += v;
    CHECK(car == Catch::Approx(forward).margin(1e-15));
}

TEST_CASE("caar averages cars within a window") {
    auto make = [](double v) {
        return CARValue{"F", d(2021, 1, 5), 3, v};
    };
    SECTION("hand value") {
        const CAARValue caar = compute_caar({make(0.01), make(0.02), make(0.06)}, 3);
        CHECK(caar.caar == Catch::Approx(0.03).epsilon(1e-14));
        CHECK(caar.n_events == 3);
        CHECK(caar.window == 3);
    }
    SECTION("identical cars average to themselves") {
        const CAARValue caar = compute_caar({make(0.004), make(0.004)}, 3);
        CHECK(caar.caar == Catch::Approx(0.004).epsilon(1e-15));
    }
    SECTION("symmetric cars cancel") {
        const CAARValue caar = compute_caar({make(0.01), make(-0.01)}, 3);
        CHECK(caar.caar == Catch::Approx(0.0).margin(1e-18));
    }
    SECTION("empty input throws") {
        CHECK_THROWS_AS(compute_caar({}, 3), InsufficientDataError);
    }
    SECTION("mixed windows throw") {
        CARValue other{"F", d(2021, 1, 5), 5, 0.01};
        CHECK_THROWS_AS(compute_caar({make(0.01), other}, 3), std::invalid_argument);
    }
    SECTION("order invariance") {
        auto gen = derive_stream(33, 0);
        std::vector<CARValue> cars;
        for (int i = 0; i < 9; ++i) cars.push_back(make((uniform01(gen) - 0.5) * 0.1));
        const double a = compute_caar(cars, 3).caar;
        std::reverse(cars.begin(), cars.end());
        const double b = compute_caar(cars, 3).caar;
        CHECK(a == Catch::Approx(b).margin(1e-16));
    }
}

TEST_CASE("narrow windows nest inside wide ones") {
    const TradingCalendar cal = make_calendar(30);
    const ReturnSeries actual = series_on(cal, random_returns(30, 3));
    EventSpec event{"T", cal.dates()[14], cal.dates()[15], {1, 5}};
    const ConstantMeanModel model{0.0003};
    const AbnormalReturnSeries wide =
        compute_ar(event, 5, actual, model, NormalModelInputs{}, cal);
    const AbnormalReturnSeries narrow =
        compute_ar(event, 1, actual, model, NormalModelInputs{}, cal);
    for (int offset = -1; offset <= 1; ++offset) {
        CHECK(narrow.at_offset(offset) == wide.at_offset(offset));
    }
}

TEST_CASE("shifting returns and the model mean together leaves AR unchanged") {
    const TradingCalendar cal = make_calendar(30);
    const std::vector<double> values = random_returns(30, 4);
    const double shift = 0.0123;
    std::vector<double> shifted = values;
    for (double& v : shifted) v += shift;
    EventSpec event{"T", cal.dates()[14], cal.dates()[15], {4}};
    const AbnormalReturnSeries base = compute_ar(event, 4, series_on(cal, values),
                                                 ConstantMeanModel{0.001},
                                                 NormalModelInputs{}, cal);
    const AbnormalReturnSeries moved = compute_ar(event, 4, series_on(cal, shifted),
                                                  ConstantMeanModel{0.001 + shift},
                                                  NormalModelInputs{}, cal);
    REQUIRE(base.values.size() == moved.values.size());
    for (std::size_t i = 0; i < base.values.size(); ++i) {
        CHECK(moved.values[i] == Catch::Approx(base.values[i]).margin(1e-15));
    }
}

TEST_CASE("run_event_study constant-mean fixture matches manual computation") {
    const int n_days = 60;
    const TradingCalendar cal = make_calendar(n_days);
    const std::vector<double> ra = random_returns(n_days, 10);
    const std::vector<double> rb = random_returns(n_days, 11);

    std::map<std::string, ReturnSeries> firm_returns;
    firm_returns["A"] = series_on(cal, ra, 0, "A");
    firm_returns["B"] = series_on(cal, rb, 0, "B");

    EventStudyConfig config;
    config.model = ExpectedReturnKind::constant_mean;
    config.windows = {1, 3, 5};
    config.estimation_length = 30;
    config.min_observations = 20;

    // submissions on the trading day before the intended centers
    const std::size_t center_a = 45, center_b = 50;
    const std::vector<std::pair<std::string, Date>> events = {
        {"A", cal.dates()[center_a - 1]},
        {"B", cal.dates()[center_b - 1]},
    };

    const EventStudyResult result =
        run_event_study(firm_returns, nullptr, nullptr, cal, events, config);

    REQUIRE(result.dropped.empty());
    REQUIRE(result.events.size() == 2);
    CHECK(result.events[0].event_date == cal.dates()[center_a]);
    CHECK(result.events[1].event_date == cal.dates()[center_b]);
    REQUIRE(result.cars.size() == 6);

    // independent manual computation
    auto manual_car = [&](const std::vector<double>& r, std::size_t center, int w) {
        const std::size_t est_end = center - 5 - 1; // widest window is 5
        const std::size_t est_start = est_end + 1 - 30;
        double mu = 0.0;
        for (std::size_t i = est_start; i <= est_end; ++i) mu += r[i];
        mu /= 30.0;
        double car = 0.0;
        for (int k = -w; k <= w; ++k) {
            car += r[center + static_cast<std::size_t>(k + w) - static_cast<std::size_t>(w)] - mu;
        }
        return car;
    };

    std::map<std::pair<std::string, int>, double> got;
    for (const auto& c : result.cars) got[{c.firm_id, c.window}] = c.car;
    for (int w : {1, 3, 5}) {
        CHECK(got.at({"A", w}) == Catch::Approx(manual_car(ra, center_a, w)).margin(1e-14));
        CHECK(got.at({"B", w}) == Catch::Approx(manual_car(rb, center_b, w)).margin(1e-14));
        const double caar = (manual_car(ra, center_a, w) + manual_car(rb, center_b, w)) / 2.0;
        bool found = false;
        for (const auto& c : result.caars) {
            if (c.window == w) {
                CHECK(c.caar == Catch::Approx(caar).margin(1e-14));
                CHECK(c.n_events == 2);
                found = true;
            }
        }
        CHECK(found);
    }

    // mean AR at offset 0 for window 1 averages both firms' day-0 abnormal returns
    bool checked_offset0 = false;
    for (const auto& m : result.mean_ar) {
        if (m.window == 1 && m.offset == 0) {
            const double mu_a = manual_car(ra, center_a, 0);
            const double mu_b = manual_car(rb, center_b, 0);
            CHECK(m.mean_ar == Catch::Approx((mu_a + mu_b) / 2.0).margin(1e-14));
            CHECK(m.n_events == 2);
            checked_offset0 = true;
        }
    }
    CHECK(checked_offset0);
}

TEST_CASE("run_event_study market-model fixture matches manual computation") {
    const int n_days = 60;
    const TradingCalendar cal = make_calendar(n_days);
    const std::vector<double> rm = random_returns(n_days, 12);
    auto gen = derive_stream(31, 13);
    std::vector<double> rs;
    for (int i = 0; i < n_days; ++i) {
        rs.push_back(0.0005 + 1.2 * rm[static_cast<std::size_t>(i)] +
                     (uniform01(gen) - 0.5) * 0.01);
    }

    std::map<std::string, ReturnSeries> firm_returns;
    firm_returns["A"] = series_on(cal, rs, 0, "A");
    const ReturnSeries market = series_on(cal, rm, 0, "MKT");

    EventStudyConfig config;
    config.model = ExpectedReturnKind::market;
    config.windows = {3};
    config.estimation_length = 30;
    config.min_observations = 20;

    const std::size_t center = 45;
    const EventStudyResult result = run_event_study(
        firm_returns, &market, nullptr, cal, {{"A", cal.dates()[center - 1]}}, config);
    REQUIRE(result.dropped.empty());
    REQUIRE(result.cars.size() == 1);

    // independent fit over the window ending 4 days before the center
    const std::size_t est_end = center - 3 - 1;
    const std::size_t est_start = est_end + 1 - 30;
    testutil::Matrix X;
    std::vector<double> y;
    for (std::size_t i = est_start; i <= est_end; ++i) {
        X.push_back({1.0, rm[i]});
        y.push_back(rs[i]);
    }
    const std::vector<double> beta = testutil::normal_equation_ols(X, y);
    double car = 0.0;
    for (int k = -3; k <= 3; ++k) {
        const std::size_t i = center + static_cast<std::size_t>(k + 3) - 3;
        car += rs[i] - (beta[0] + beta[1] * rm[i]);
    }
    CHECK(result.cars[0].car == Catch::Approx(car).margin(1e-12));
}

TEST_CASE("run_event_study drop reasons") {
    const TradingCalendar cal = make_calendar(60);
    std::map<std::string, ReturnSeries> firm_returns;
    firm_returns["A"] = series_on(cal, random_returns(60, 14), 0, "A");

    EventStudyConfig config;
    config.model = ExpectedReturnKind::constant_mean;
    config.windows = {1, 3, 5};
    config.estimation_length = 30;
    config.min_observations = 20;

    SECTION("unknown firm") {
        const auto result = run_event_study(firm_returns, nullptr, nullptr, cal,
                                            {{"ZZZ", cal.dates()[44]}}, config);
        REQUIRE(result.dropped.size() == 1);
        CHECK(result.dropped[0].reason == "no return series for firm");
        CHECK(result.events.empty());
    }

    SECTION("submission after the last trading date") {
        const auto result = run_event_study(firm_returns, nullptr, nullptr, cal,
                                            {{"A", cal.dates()[59]}}, config);
        REQUIRE(result.dropped.size() == 1);
        CHECK_THAT(result.dropped[0].reason,
                   Catch::Matchers::ContainsSubstring("no trading date after"));
    }

    SECTION("event too close to the calendar edge") {
        const auto result = run_event_study(firm_returns, nullptr, nullptr, cal,
                                            {{"A", cal.dates()[0]}}, config);
        REQUIRE(result.dropped.size() == 1);
        CHECK(result.dropped[0].reason == "event window outside calendar bounds");
    }

    SECTION("estimation failure for a thin series") {
        // firm B only has returns inside the event window
        firm_returns["B"] = series_on(cal, std::vector<double>(11, 0.01), 40, "B");
        const auto result = run_event_study(firm_returns, nullptr, nullptr, cal,
                                            {{"B", cal.dates()[44]}}, config);
        REQUIRE(result.dropped.size() == 1);
        CHECK_THAT(result.dropped[0].reason,
                   Catch::Matchers::ContainsSubstring("estimation failed"));
    }

    SECTION("partial window drop keeps the narrow windows") {
        std::vector<double> values = random_returns(60, 15);
        ReturnSeries gappy = series_on(cal, values, 0, "C");
        // remove the observation at center + 5 so only window 5 fails
        const std::size_t center = 45;
        gappy.observations.erase(gappy.observations.begin() + static_cast<long>(center) + 5);
        firm_returns["C"] = gappy;
        const auto result = run_event_study(firm_returns, nullptr, nullptr, cal,
                                            {{"C", cal.dates()[center - 1]}}, config);
        REQUIRE(result.events.size() == 1);
        REQUIRE(result.cars.size() == 2); // windows 1 and 3 survive
        REQUIRE(result.dropped.size() == 1);
        CHECK_THAT(result.dropped[0].reason,
                   Catch::Matchers::ContainsSubstring("partial windows dropped"));
    }

    SECTION("no complete window drops the event entirely") {
        std::vector<double> values = random_returns(60, 16);
        ReturnSeries gappy = series_on(cal, values, 0, "D");
        const std::size_t center = 45;
        gappy.observations.erase(gappy.observations.begin() + static_cast<long>(center));
        firm_returns["D"] = gappy;
        const auto result = run_event_study(firm_returns, nullptr, nullptr, cal,
                                            {{"D", cal.dates()[center - 1]}}, config);
        CHECK(result.events.empty());
        REQUIRE(result.dropped.size() == 1);
        CHECK_THAT(result.dropped[0].reason,
                   Catch::Matchers::ContainsSubstring("no complete window"));
    }
}

TEST_CASE("run_event_study configuration errors and empty input") {
    const TradingCalendar cal = make_calendar(60);
    std::map<std::string, ReturnSeries> firm_returns;
    firm_returns["A"] = series_on(cal, random_returns(60, 17), 0, "A");

    EventStudyConfig config;
    config.model = ExpectedReturnKind::constant_mean;

    SECTION("no windows") {
        config.windows = {};
        CHECK_THROWS_AS(run_event_study(firm_returns, nullptr, nullptr, cal, {}, config),
                        std::invalid_argument);
    }
    SECTION("market model without a market series") {
        config.model = ExpectedReturnKind::market;
        CHECK_THROWS_AS(run_event_study(firm_returns, nullptr, nullptr, cal, {}, config),
                        std::invalid_argument);
    }
    SECTION("fama-french without factors") {
        config.model = ExpectedReturnKind::fama_french;
        CHECK_THROWS_AS(run_event_study(firm_returns, nullptr, nullptr, cal, {}, config),
                        std::invalid_argument);
    }
    SECTION("no events yields an empty result") {
        const auto result = run_event_study(firm_returns, nullptr, nullptr, cal, {}, config);
        CHECK(result.events.empty());
        CHECK(result.cars.empty());
        CHECK(result.caars.empty());
        CHECK(result.dropped.empty());
        CHECK(result.gap_counts.at("A") == 0);
    }
}

TEST_CASE("same-firm events with overlapping windows are flagged") {
    const TradingCalendar cal = make_calendar(80);
    std::map<std::string, ReturnSeries> firm_returns;
    firm_returns["A"] = series_on(cal, random_returns(80, 18), 0, "A");

    EventStudyConfig config;
    config.model = ExpectedReturnKind::constant_mean;
    config.windows = {1, 3, 5};
    config.estimation_length = 30;
    config.min_observations = 20;

    SECTION("centers 10 apart are flagged at widest window 5") {
        const auto result = run_event_study(
            firm_returns, nullptr, nullptr, cal,
            {{"A", cal.dates()[44]}, {"A", cal.dates()[54]}}, config);
        REQUIRE(result.events.size() == 2);
        REQUIRE(result.overlap_flags.size() == 1);
        CHECK_THAT(result.overlap_flags[0],
                   Catch::Matchers::ContainsSubstring("overlapping windows"));
    }
    SECTION("centers 11 apart are not flagged") {
        const auto result = run_event_study(
            firm_returns, nullptr, nullptr, cal,
            {{"A", cal.dates()[44]}, {"A", cal.dates()[55]}}, config);
        REQUIRE(result.events.size() == 2);
        CHECK(result.overlap_flags.empty());
    }
}

TEST_CASE("csv writers format event-study outputs") {
    std::vector<CARValue> cars = {{"A", d(2021, 3, 1), 3, 0.012345}};
    std::ostringstream car_out;
    write_car_csv(car_out, cars);
    CHECK(car_out.str() == "firm,event_date,window,car\nA,2021-03-01,3,0.012345\n");

    std::ostringstream caar_out;
    write_caar_csv(caar_out, {{3, -0.004, 7}});
    CHECK(caar_out.str() == "window,caar,n_events\n3,-0.004,7\n");

    std::ostringstream mar_out;
    write_mean_ar_csv(mar_out, {{1, -1, 0.25, 4}});
    CHECK(mar_out.str() == "window,offset,mean_ar,n_events\n1,-1,0.25,4\n");
}

TEST_CASE("events csv loader") {
    testutil::TempDir dir;
    const std::string path = dir.file("events.csv");
    testutil::write_file(path, "firm,submission_date\nA,2021-01-04\nB,2021-02-01\n");
    const auto events = load_events_csv(path);
    REQUIRE(events.size() == 2);
    CHECK(events[0].first == "A");
    CHECK(events[1].second == d(2021, 2, 1));

    testutil::write_file(path, "firm,submission_date\nA,2021-13-04\n");
    CHECK_THROWS_WITH(load_events_csv(path), Catch::Matchers::ContainsSubstring(":2"));

    testutil::write_file(path, "firm,when\nA,2021-01-04\n");
    CHECK_THROWS_AS(load_events_csv(path), DataError);
}

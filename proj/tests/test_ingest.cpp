#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "support.hpp"
#include "touchauth/error.hpp"
#include "touchauth/ingest.hpp"

using namespace touchauth;
using touchauth::testing::make_stroke;

namespace {

Corpus parse(const std::string& text, ParseReport* report = nullptr) {
    std::istringstream in(text);
    return parse_raw_events(in, InputFormat::Canonical, report);
}

} // namespace

TEST_CASE("canonical CSV groups rows into time-ordered strokes") {
    const std::string csv = "user_id,swipe_id,session,timestamp_ms,x,y,pressure,area\n"
                            "u2,s9,B,30,10,0,0.5,0.1\n"
                            "u1,s1,A,20,5,1,0.5,0.1\n"
                            "u1,s1,A,10,0,0,0.4,0.1\n"
                            "u2,s9,B,10,0,0,0.5,0.1\n";
    ParseReport report;
    const Corpus c = parse(csv, &report);
    CHECK(report.rows_read == 4);
    CHECK(report.rows_skipped == 0);
    REQUIRE(c.strokes.size() == 2);
    CHECK(c.users == std::vector<std::string>{"u1", "u2"});
    CHECK(c.strokes[0].user_id == "u1");
    CHECK(c.strokes[0].samples.front().timestamp_ms == 10);
    CHECK(c.strokes[0].samples.back().x == 5);
    CHECK(c.strokes[0].direction == Direction::Right);
    CHECK(c.strokes[1].session == Session::B);
}

TEST_CASE("columns may come in any order and a BOM is ignored") {
    const std::string csv = "\xEF\xBB\xBF"
                            "x,y,user_id,area,pressure,session,swipe_id,timestamp_ms\n"
                            "3,4,u1,0.2,0.6,A,s1,100\n";
    const Corpus c = parse(csv);
    REQUIRE(c.strokes.size() == 1);
    const auto& p = c.strokes[0].samples[0];
    CHECK(p.x == 3);
    CHECK(p.y == 4);
    CHECK(p.pressure == doctest::Approx(0.6));
    CHECK(p.area == doctest::Approx(0.2));
    CHECK(p.timestamp_ms == 100);
}

TEST_CASE("missing columns or header raise a schema error") {
    CHECK_THROWS_AS(parse("user_id,swipe_id,session,timestamp_ms,x,y,pressure\n"), SchemaError);
    CHECK_THROWS_AS(parse(""), SchemaError);
}

TEST_CASE("unreadable files raise an input error") {
    CHECK_THROWS_AS(parse_raw_events(std::filesystem::path("/nonexistent/strokes.csv"), InputFormat::Canonical),
                    InputError);
}

TEST_CASE("malformed rows are skipped and counted") {
    const std::string csv = "user_id,swipe_id,session,timestamp_ms,x,y,pressure,area\n"
                            "u1,s1,A,10,0,0,0.5,0.1\n"
                            "u1,s1,C,20,1,0,0.5,0.1\n"     // bad session
                            "u1,s1,A,2.5,1,0,0.5,0.1\n"    // fractional timestamp
                            "u1,s1,A,30,abc,0,0.5,0.1\n"   // non-numeric
                            "u1,s1,A,40,1,0,-0.5,0.1\n"    // negative pressure
                            "u1,s1,A,50,inf,0,0.5,0.1\n"   // non-finite
                            ",s1,A,60,1,0,0.5,0.1\n"       // empty user
                            "u1,s1,A,70\n"                 // short row
                            "u1,s1,B,80,1,0,0.5,0.1\n"     // session conflict
                            "u1,s1,A,90,2,0,0.5,0.1\n";
    ParseReport report;
    const Corpus c = parse(csv, &report);
    CHECK(report.rows_read == 10);
    CHECK(report.rows_skipped == 8);
    CHECK(report.problems.size() == 8);
    REQUIRE(c.strokes.size() == 1);
    CHECK(c.strokes[0].samples.size() == 2);
}

TEST_CASE("header-only input is an empty corpus") {
    const Corpus c = parse("user_id,swipe_id,session,timestamp_ms,x,y,pressure,area\n");
    CHECK(c.strokes.empty());
    CHECK(c.users.empty());
}

TEST_CASE("write then parse round-trips exactly") {
    const Corpus original = generate_synthetic_corpus({.n_users = 3, .train_per_direction = 4,
                                                       .test_per_direction = 3, .seed = 9});
    std::ostringstream out;
    write_canonical_csv(out, original);
    const Corpus back = parse(out.str());
    REQUIRE(back.strokes.size() == original.strokes.size());
    for (std::size_t i = 0; i < back.strokes.size(); ++i) {
        const auto& a = original.strokes[i];
        const auto& b = back.strokes[i];
        CHECK(a.swipe_id == b.swipe_id);
        REQUIRE(a.samples.size() == b.samples.size());
        for (std::size_t k = 0; k < a.samples.size(); ++k) {
            CHECK(a.samples[k].x == b.samples[k].x);
            CHECK(a.samples[k].y == b.samples[k].y);
            CHECK(a.samples[k].pressure == b.samples[k].pressure);
            CHECK(a.samples[k].timestamp_ms == b.samples[k].timestamp_ms);
        }
    }
}

TEST_CASE("click filter drops short and tiny strokes") {
    std::vector<Stroke> strokes;
    // Five samples: a click regardless of length.
    strokes.push_back(make_stroke({0, 1, 2, 3, 4}, {0, 10, 20, 30, 40}, {0, 0, 0, 0, 0}, "u", "five"));
    // Six samples over 2.5 px: too short.
    strokes.push_back(make_stroke({0, 1, 2, 3, 4, 5}, {0, 0.5, 1, 1.5, 2, 2.5}, {0, 0, 0, 0, 0, 0}, "u", "short"));
    // Six samples over exactly 3 px: kept.
    strokes.push_back(make_stroke({0, 1, 2, 3, 4, 5}, {0, 0.6, 1.2, 1.8, 2.4, 3.0}, {0, 0, 0, 0, 0, 0}, "u", "ok"));
    ClickFilterReport report;
    const Corpus kept = filter_clicks(make_corpus(strokes), &report);
    CHECK(report.removed_few_points == 1);
    CHECK(report.removed_short_path == 1);
    REQUIRE(kept.strokes.size() == 1);
    CHECK(kept.strokes[0].swipe_id == "ok");
}

TEST_CASE("direction follows the dominant axis of the chord") {
    auto dir = [](double dx, double dy) {
        return classify_direction(make_stroke({0, 10}, {100, 100 + dx}, {100, 100 + dy}));
    };
    CHECK(dir(10, 2) == Direction::Right);
    CHECK(dir(-10, 2) == Direction::Left);
    CHECK(dir(1, 10) == Direction::Down);
    CHECK(dir(1, -10) == Direction::Up);
    // Equal magnitudes go to the horizontal axis.
    CHECK(dir(5, 5) == Direction::Right);
    CHECK(dir(-5, -5) == Direction::Left);
    CHECK(dir(0, 0) == Direction::Right);
    Stroke one;
    one.samples.push_back({0, 1, 1, 0.5, 0.1});
    CHECK_THROWS_AS(classify_direction(one), InputError);
}

TEST_CASE("degenerate chords are flagged") {
    Corpus c = make_corpus({make_stroke({0, 1, 2}, {5, 9, 5}, {5, 5, 5})});
    c = label_directions(c);
    CHECK(c.strokes[0].degenerate_direction);
}

namespace {

Corpus quota_corpus(std::size_t a_per_dir, std::size_t b_per_dir, const std::string& user) {
    std::vector<Stroke> strokes;
    const std::array<std::pair<double, double>, 4> moves{{{-50, 0}, {50, 0}, {0, -50}, {0, 50}}};
    std::int64_t t = 0;
    int id = 0;
    for (Session session : {Session::A, Session::B}) {
        const std::size_t quota = session == Session::A ? a_per_dir : b_per_dir;
        for (std::size_t k = 0; k < quota; ++k) {
            for (const auto& [dx, dy] : moves) {
                t += 1000;
                auto s = make_stroke({t, t + 10, t + 20}, {500, 500 + dx / 2, 500 + dx}, {500, 500 + dy / 2, 500 + dy},
                                     user, fmt::format("{}-{:03}", user, id++), session);
                strokes.push_back(s);
            }
        }
    }
    return make_corpus(strokes);
}

} // namespace

TEST_CASE("eligibility needs both session quotas in every direction") {
    Corpus c = quota_corpus(3, 2, "ok");
    const Corpus few = quota_corpus(2, 2, "few");
    c.strokes.insert(c.strokes.end(), few.strokes.begin(), few.strokes.end());
    c = make_corpus(c.strokes);
    std::vector<ExclusionRecord> excluded;
    const auto users = select_eligible_users(c, {3, 2}, &excluded);
    REQUIRE(users.size() == 1);
    CHECK(users[0].user_id == "ok");
    REQUIRE(excluded.size() == 1);
    CHECK(excluded[0].user_id == "few");
    CHECK(excluded[0].reason.find("session A") != std::string::npos);
    for (Direction d : kAllDirections) {
        CHECK(users[0].train_for(d).size() == 3);
        CHECK(users[0].test_for(d).size() == 2);
        for (const auto& s : users[0].train_for(d)) {
            CHECK(s.direction == d);
            CHECK(s.session == Session::A);
        }
    }
}

TEST_CASE("eligible subsets take the earliest strokes") {
    const Corpus c = quota_corpus(5, 4, "u");
    const auto users = select_eligible_users(c, {2, 1});
    REQUIRE(users.size() == 1);
    const auto& left = users[0].train_for(Direction::Left);
    REQUIRE(left.size() == 2);
    CHECK(left[0].start_ms() < left[1].start_ms());
    // The earliest Left stroke of session A is the very first stroke.
    CHECK(left[0].start_ms() == c.strokes.front().start_ms());
}

TEST_CASE("synthetic corpus is seeded and direction-consistent") {
    const SyntheticSpec spec{.n_users = 4, .train_per_direction = 6, .test_per_direction = 5, .seed = 3};
    const Corpus a = generate_synthetic_corpus(spec);
    const Corpus b = generate_synthetic_corpus(spec);
    std::ostringstream sa;
    std::ostringstream sb;
    write_canonical_csv(sa, a);
    write_canonical_csv(sb, b);
    CHECK(sa.str() == sb.str());
    CHECK(a.users.size() == 4);
    CHECK(a.strokes.size() == 4 * 4 * (6 + 5));

    SyntheticSpec other = spec;
    other.seed = 4;
    std::ostringstream sc;
    write_canonical_csv(sc, generate_synthetic_corpus(other));
    CHECK(sc.str() != sa.str());

    std::map<std::pair<std::string, int>, std::array<int, 4>> counts;
    for (const auto& s : a.strokes) {
        CHECK(s.samples.size() > kMaxClickPoints);
        CHECK(classify_direction(s) == s.direction);
        for (std::size_t k = 1; k < s.samples.size(); ++k) {
            CHECK(s.samples[k].timestamp_ms > s.samples[k - 1].timestamp_ms);
        }
        counts[{s.user_id, static_cast<int>(s.session)}][static_cast<int>(s.direction)]++;
    }
    for (const auto& [key, per_dir] : counts) {
        for (int n : per_dir) {
            CHECK(n == (key.second == 0 ? 6 : 5));
        }
    }
}

TEST_CASE("synthetic corpus rejects fewer than two users") {
    CHECK_THROWS_AS(generate_synthetic_corpus({.n_users = 1}), InputError);
    CHECK_THROWS_AS(generate_synthetic_corpus({.n_users = 3, .separability = -1.0}), InputError);
}

TEST_CASE("single-sample strokes survive parsing and are flagged") {
    const Corpus c = parse("user_id,swipe_id,session,timestamp_ms,x,y,pressure,area\n"
                           "u1,tap,A,10,5,5,0.5,0.1\n");
    REQUIRE(c.strokes.size() == 1);
    const Corpus labelled = label_directions(c);
    CHECK(labelled.strokes[0].degenerate_direction);
    CHECK(filter_clicks(labelled).strokes.empty());
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "support.hpp"
#include "touchauth/error.hpp"
#include "touchauth/features.hpp"

using namespace touchauth;
using touchauth::testing::close;
using touchauth::testing::position_dependent;
using touchauth::testing::random_collinear_stroke;
using touchauth::testing::random_grid_stroke;
using touchauth::testing::translated;

namespace {

Stroke reference_stroke() {
    const std::vector<std::int64_t> t{1000, 1010, 1025, 1035, 1050, 1060, 1080, 1090};
    const std::vector<double> x{100, 104, 110, 118, 125, 131, 140, 143};
    const std::vector<double> y{200, 201, 203, 202, 206, 209, 208, 210};
    const std::vector<double> pressure{0.5, 0.55, 0.6, 0.62, 0.6, 0.58, 0.5, 0.45};
    const std::vector<double> area{0.1, 0.11, 0.12, 0.12, 0.13, 0.12, 0.11, 0.1};
    Stroke s;
    s.user_id = "u1";
    s.swipe_id = "s2";
    for (std::size_t i = 0; i < t.size(); ++i) {
        s.samples.push_back({t[i], x[i], y[i], pressure[i], area[i]});
    }
    s.direction = classify_direction(s);
    return s;
}

Stroke reference_previous() {
    Stroke s;
    s.user_id = "u1";
    s.swipe_id = "s1";
    s.samples = {{800, 90, 190, 0.5, 0.1}, {850, 95, 192, 0.5, 0.1}, {900, 99, 195, 0.5, 0.1}};
    s.direction = classify_direction(s);
    return s;
}

// Independently computed values for reference_stroke() preceded by
// reference_previous(), in catalogue order.
constexpr std::array<double, kFeatureCount> kReference{
    100.0, 90.0, 100.0, 200.0, 143.0, 210.0, 44.14748010928823, 0.9643350630842457, 1.0, 0.2284966392918623,
    414.1758543205696, 452.76925690687085, 644.1530845772636, -14536.742422871073, -2700.7459602550166,
    10666.923469069361, 452.76925690687085, 2.1292268498066154, 0.027181619359233397, 0.41904996512151477,
    1.553882573369509, 0.27335558208749494, 45.94131678865229, 0.9609537382740596, 523.1145694767403,
    -6147.608624031463, 0.6, 0.13, 0.0, 0.0, 149.34365789529085, 416.973791958775, 604.1521215682535,
    -0.5940986414778612, 17186.65469732189, -12439.45897316117, 8186.721777682378, 0.55, 0.05678908345800272,
    0.5, 0.565, 0.6, 0.11375, 0.009921567416492213, 0.1075, 0.11499999999999999, 0.12, 0.5, 0.45, 1.0, 110.0,
    140.0, 203.0, 208.0, 806.2257748298549, 360.5551275463989, 0.23255813953488372, 176.74418604651163, 118.0,
    202.0, 0.62, 533.3333333333334, 44.44444444444445, 454.1666666666667, 179.16666666666669, 0.5, 35.0, 10.0,
    10.0, 43.0, 10.0, 421.63702135578393, 537.4838498865699, 746.1167035214294, -6147.608624031463,
    10666.923469069361};

// Membership marks per catalogue row, one character per source set in the
// order TA, WVW, Syed, BS, Cheng.
constexpr std::array<std::string_view, kFeatureCount> kMembership{
    "x.x.x", "xxx.x", "xxxxx", "xxxxx", "xxxxx", "xxxxx", "xxx.x", "x...x", "x....", "xxx.x", // 1-10
    "x.x..", "xxx..", "x.x..", "x....", "xx...", "x....", "x...x", "x....", "x....", "x....", // 11-20
    "x....", "x....", "xxx.x", "x.x..", "xxx.x", "x....", "x.x.x", "x...x", "x....", "x....", // 21-30
    ".x..x", ".x...", ".x...", ".x...", ".x...", ".x...", ".x...", ".x..x", "....x", "x....", // 31-40
    "x....", "x....", "x...x", "x...x", "x....", "x....", "x....", ".xx.x", ".xx..", "..x..", // 41-50
    "...x.", "...x.", "...x.", "...x.", "..xx.", "...x.", "...x.", "...x.", "...x.", "...x.", // 51-60
    "...x.", "...x.", "...x.", "...x.", "...x.", "...x.", "...x.", "...x.", "...x.", "...x.", // 61-70
    "...x.", "...x.", "...x.", "...x.", "...x.", "...x."};                                   // 71-76

} // namespace

TEST_CASE("catalogue lists 76 uniquely indexed features") {
    const auto& cat = feature_catalogue();
    for (std::size_t i = 0; i < cat.size(); ++i) {
        CHECK(cat[i].index == static_cast<int>(i) + 1);
        CHECK(!cat[i].name.empty());
    }
    CHECK(cat[23].name == "Ratio length E2E-to-trajectory");
    REQUIRE(feature_by_name("Mean resultant length"));
    CHECK(feature_by_name("Mean resultant length")->index == 8);
    CHECK_FALSE(feature_by_name("no such feature"));
}

TEST_CASE("schemas match the published overlap table") {
    const std::array<std::size_t, 5> sizes{38, 21, 19, 30, 20};
    for (std::size_t set = 0; set < kAllFeatureSets.size(); ++set) {
        const auto& sch = schema(kAllFeatureSets[set]);
        CHECK(sch.name == kAllFeatureSets[set]);
        CHECK(sch.members.size() == sizes[set]);
        CHECK(std::is_sorted(sch.members.begin(), sch.members.end()));
        std::vector<int> expected;
        for (int row = 1; row <= static_cast<int>(kFeatureCount); ++row) {
            if (kMembership[static_cast<std::size_t>(row - 1)][set] == 'x') {
                expected.push_back(row);
            }
        }
        CHECK(sch.members == expected);
    }
    CHECK(parse_feature_set("Cheng") == FeatureSet::Cheng);
    CHECK_FALSE(parse_feature_set("cheng-ish"));
    // Every catalogue row is used by at least one set.
    CHECK(all_schema_members().size() == kFeatureCount);
}

TEST_CASE("reference stroke reproduces independently computed features") {
    const Stroke prev = reference_previous();
    const FeatureVector fv = extract_features(reference_stroke(), &prev);
    CHECK(fv.stroke.swipe_id == "s2");
    CHECK(fv.stroke.direction == Direction::Right);
    CHECK(fv.stroke.start_ms == 1000);
    for (int i = 1; i <= static_cast<int>(kFeatureCount); ++i) {
        INFO("feature ", i, " ", feature_catalogue()[static_cast<std::size_t>(i - 1)].name);
        CHECK(close(fv.at(i), kReference[static_cast<std::size_t>(i - 1)], 1e-12, 1e-12));
    }
}

TEST_CASE("inter-stroke features are NaN without a predecessor") {
    const FeatureVector fv = extract_features(reference_stroke(), nullptr);
    CHECK(std::isnan(fv.at(1)));
    CHECK(std::isnan(fv.at(68)));
    CHECK(std::isnan(fv.at(69)));
    CHECK(fv.at(2) == 90.0);
}

TEST_CASE("extraction rejects strokes with fewer than three samples") {
    Stroke s = reference_stroke();
    s.samples.resize(2);
    CHECK_THROWS_AS(extract_features(s, nullptr), InputError);
}

TEST_CASE("projection follows schema order") {
    const Stroke prev = reference_previous();
    const FeatureVector fv = extract_features(reference_stroke(), &prev);
    const auto& sch = schema(FeatureSet::Syed);
    const auto row = project(fv, sch);
    REQUIRE(row.size() == sch.members.size());
    for (std::size_t i = 0; i < row.size(); ++i) {
        CHECK(row[i] == fv.at(sch.members[i]));
    }
}

TEST_CASE("features are invariant to translation and time shift") {
    Rng rng(2024);
    for (int trial = 0; trial < 500; ++trial) {
        const Stroke s = random_grid_stroke(rng);
        const Stroke prev = translated(random_grid_stroke(rng, 0), 0, 0, 0);
        const auto dx = static_cast<double>(static_cast<int>(rng.below(400)) - 200);
        const auto dy = static_cast<double>(static_cast<int>(rng.below(400)) - 200);
        const auto dt = static_cast<std::int64_t>(rng.below(100000));
        const Stroke moved = translated(s, dx, dy, 0);
        const Stroke moved_prev = translated(prev, dx, dy, 0);
        const Stroke later = translated(s, 0, 0, dt);
        const Stroke later_prev = translated(prev, 0, 0, dt);

        const FeatureVector base = extract_features(s, &prev);
        const FeatureVector shifted = extract_features(moved, &moved_prev);
        const FeatureVector delayed = extract_features(later, &later_prev);
        for (int i = 1; i <= static_cast<int>(kFeatureCount); ++i) {
            INFO("trial ", trial, " feature ", i);
            CHECK(close(base.at(i), delayed.at(i)));
            if (!position_dependent(i)) {
                CHECK(close(base.at(i), shifted.at(i)));
            }
        }
        CHECK(shifted.at(3) == base.at(3) + dx);
        CHECK(shifted.at(6) == base.at(6) + dy);
    }
}

TEST_CASE("bounded features stay in range") {
    Rng rng(77);
    for (int trial = 0; trial < 2000; ++trial) {
        const FeatureVector fv = extract_features(random_grid_stroke(rng), nullptr);
        const double ratio = fv.at(24);
        const double mrl = fv.at(8);
        CHECK(ratio > 0.0);
        CHECK(ratio <= 1.0 + 1e-12);
        CHECK(mrl >= 0.0);
        CHECK(mrl <= 1.0 + 1e-12);
        CHECK(fv.at(18) >= 0.0);
        CHECK(fv.at(23) >= fv.at(7) - 1e-9);
    }
}

TEST_CASE("collinear strokes have zero deviation") {
    Rng rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
        const Stroke s = random_collinear_stroke(rng);
        const FeatureVector fv = extract_features(s, nullptr);
        INFO("trial ", trial);
        for (int i : {18, 19, 20, 21}) {
            CHECK(std::abs(fv.at(i)) <= 1e-9);
        }
        CHECK(fv.at(24) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(fv.at(8) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("kinematics use per-gap velocity and midpoint-spaced acceleration") {
    const Stroke s = touchauth::testing::make_stroke({0, 100, 300}, {0, 3, 3}, {0, 4, 12});
    const KinematicsSeries k = compute_kinematics(s);
    REQUIRE(k.velocity.size() == 2);
    CHECK(k.velocity[0] == doctest::Approx(50.0));
    CHECK(k.velocity[1] == doctest::Approx(40.0));
    REQUIRE(k.acceleration.size() == 1);
    CHECK(k.acceleration[0] == doctest::Approx(-10.0 / 0.15));
    CHECK(k.deviation.front() == 0.0);
    CHECK(k.deviation.back() == 0.0);
}

TEST_CASE("corpus extraction links predecessors within a session") {
    Rng rng(9);
    std::vector<Stroke> strokes;
    for (int i = 0; i < 4; ++i) {
        Stroke s = random_grid_stroke(rng, 10'000 * (i + 1));
        s.swipe_id = "s" + std::to_string(i);
        s.session = i < 2 ? Session::A : Session::B;
        strokes.push_back(s);
    }
    const Corpus corpus = make_corpus(strokes);
    const auto vectors = extract_corpus(corpus, 2);
    REQUIRE(vectors.size() == 4);
    CHECK(std::isnan(vectors[0].at(1)));
    CHECK_FALSE(std::isnan(vectors[1].at(1)));
    // The first stroke of session B has no predecessor.
    CHECK(std::isnan(vectors[2].at(1)));
    CHECK_FALSE(std::isnan(vectors[3].at(1)));
    CHECK(vectors[1].at(1) == static_cast<double>(corpus.strokes[1].start_ms() - corpus.strokes[0].end_ms()));

    const auto kept = clean_nonfinite(vectors);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].stroke.swipe_id == vectors[1].stroke.swipe_id);
    CHECK(kept[1].stroke.swipe_id == vectors[3].stroke.swipe_id);
}

TEST_CASE("feature CSV writes non-finite values as empty cells") {
    const FeatureVector fv = extract_features(reference_stroke(), nullptr);
    std::ostringstream out;
    write_feature_csv(out, std::span<const FeatureVector>(&fv, 1));
    std::istringstream in(out.str());
    std::string header;
    std::string row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header.rfind("user_id,swipe_id,session,direction,f1,f2,", 0) == 0);
    CHECK(row.rfind("u1,s2,A,Right,,90,", 0) == 0);
    CHECK(std::count(row.begin(), row.end(), ',') == 4 + 75);
}

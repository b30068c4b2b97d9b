#include "touchauth/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include <fmt/format.h>

#include "touchauth/error.hpp"
#include "touchauth/parallel.hpp"
#include "touchauth/stats.hpp"

namespace touchauth {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

constexpr std::array<FeatureId, kFeatureCount> kCatalogue{{
    {1, "Inter-stroke time"},
    {2, "Stroke duration"},
    {3, "Start X"},
    {4, "Start Y"},
    {5, "Stop X"},
    {6, "Stop Y"},
    {7, "Length E2E"},
    {8, "Mean resultant length"},
    {9, "Numeric direction"},
    {10, "Direction E2E"},
    {11, "20% velocity"},
    {12, "50% velocity"},
    {13, "80% velocity"},
    {14, "20% acceleration"},
    {15, "50% acceleration"},
    {16, "80% acceleration"},
    {17, "Median velocity last 3 pts"},
    {18, "Largest deviation from E2E"},
    {19, "20% deviation"},
    {20, "50% deviation"},
    {21, "80% deviation"},
    {22, "Average direction"},
    {23, "Length of trajectory"},
    {24, "Ratio length E2E-to-trajectory"},
    {25, "Mean velocity"},
    {26, "Median acceleration last 5 pts"},
    {27, "Mid-stroke pressure"},
    {28, "Mid-stroke area"},
    {29, "Mid-stroke finger orientation"},
    {30, "Phone orientation (label)"},
    {31, "Standard deviation velocity"},
    {32, "25% velocity"},
    {33, "75% velocity"},
    {34, "Mean acceleration"},
    {35, "Standard deviation acceleration"},
    {36, "25% acceleration"},
    {37, "75% acceleration"},
    {38, "Mean pressure"},
    {39, "Standard deviation pressure"},
    {40, "25% pressure"},
    {41, "50% pressure"},
    {42, "75% pressure"},
    {43, "Mean area"},
    {44, "Standard deviation area"},
    {45, "25% area"},
    {46, "50% area"},
    {47, "75% area"},
    {48, "Start pressure"},
    {49, "Stop pressure"},
    {50, "Categorical direction"},
    {51, "X @ max velocity"},
    {52, "X @ min velocity"},
    {53, "Y @ max velocity"},
    {54, "Y @ min velocity"},
    {55, "Max velocity"},
    {56, "Min velocity"},
    {57, "Slope of E2E line"},
    {58, "Intercept of E2E line"},
    {59, "X @ LDP"},
    {60, "Y @ LDP"},
    {61, "LDP pressure"},
    {62, "Mean velocity X-axis prev to LDP"},
    {63, "Mean velocity Y-axis prev to LDP"},
    {64, "Mean velocity X-axis post to LDP"},
    {65, "Mean velocity Y-axis post to LDP"},
    {66, "Start pressure"},
    {67, "Time to reach max velocity"},
    {68, "X displacement finger down-down"},
    {69, "Y displacement finger down-down"},
    {70, "X displacement finger down-up"},
    {71, "Y displacement finger down-up"},
    {72, "Median velocity first 3 pts"},
    {73, "Mid-stroke velocity"},
    {74, "Median acceleration first 3 pts"},
    {75, "Median acceleration last 3 pts"},
    {76, "Mid-stroke acceleration"},
}};

std::vector<int> range(int first, int last) {
    std::vector<int> out;
    for (int i = first; i <= last; ++i) {
        out.push_back(i);
    }
    return out;
}

std::vector<int> concat(std::vector<int> a, const std::vector<int>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

// Marked cells of each source column of the feature overview table.
const std::array<FeatureSetSchema, 5>& schemas() {
    static const std::array<FeatureSetSchema, 5> table{{
        {FeatureSet::TA, concat(range(1, 30), range(40, 47))},
        {FeatureSet::WVW, {2, 3, 4, 5, 6, 7, 10, 12, 15, 23, 25, 31, 32, 33, 34, 35, 36, 37, 38, 48, 49}},
        {FeatureSet::Syed, {1, 2, 3, 4, 5, 6, 7, 10, 11, 12, 13, 23, 24, 25, 27, 48, 49, 50, 55}},
        {FeatureSet::BS, concat({3, 4, 5, 6}, range(51, 76))},
        {FeatureSet::Cheng, {1, 2, 3, 4, 5, 6, 7, 8, 10, 17, 23, 25, 27, 28, 31, 38, 39, 43, 44, 48}},
    }};
    return table;
}

bool any_nan(std::span<const double> v) {
    return std::any_of(v.begin(), v.end(), [](double x) { return std::isnan(x); });
}

double pct(std::span<const double> v, double q) { return any_nan(v) ? kNaN : stats::percentile(v, q); }

std::span<const double> head(const std::vector<double>& v, std::size_t k) {
    return {v.data(), std::min(k, v.size())};
}

std::span<const double> tail(const std::vector<double>& v, std::size_t k) {
    const std::size_t m = std::min(k, v.size());
    return {v.data() + v.size() - m, m};
}

double at_mid(const std::vector<double>& v) { return v.empty() ? kNaN : v[v.size() / 2]; }

// Index of the max (or min) element, lowest index on ties; npos on NaN.
std::size_t arg_extreme(const std::vector<double>& v, bool want_max) {
    if (v.empty() || any_nan(v)) {
        return std::string::npos;
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (want_max ? v[i] > v[best] : v[i] < v[best]) {
            best = i;
        }
    }
    return best;
}

// Quadrant of an angle in screen coordinates, coded 1..4.
double quadrant_code(double angle) {
    if (std::isnan(angle)) {
        return kNaN;
    }
    if (angle >= 0.0) {
        return angle < std::numbers::pi / 2 ? 1.0 : 2.0;
    }
    return angle < -std::numbers::pi / 2 ? 3.0 : 4.0;
}

} // namespace

const std::array<FeatureId, kFeatureCount>& feature_catalogue() { return kCatalogue; }

std::optional<FeatureId> feature_by_name(std::string_view name) {
    for (const auto& f : kCatalogue) {
        if (f.name == name) {
            return f;
        }
    }
    return std::nullopt;
}

const char* to_string(FeatureSet s) {
    switch (s) {
    case FeatureSet::TA:
        return "TA";
    case FeatureSet::WVW:
        return "WVW";
    case FeatureSet::Syed:
        return "Syed";
    case FeatureSet::BS:
        return "BS";
    case FeatureSet::Cheng:
        return "Cheng";
    }
    return "?";
}

std::optional<FeatureSet> parse_feature_set(std::string_view s) {
    for (FeatureSet f : kAllFeatureSets) {
        if (s == to_string(f)) {
            return f;
        }
    }
    return std::nullopt;
}

const FeatureSetSchema& schema(FeatureSet set) { return schemas()[static_cast<std::size_t>(set)]; }

const std::vector<int>& all_schema_members() {
    static const std::vector<int> members = [] {
        std::vector<int> all;
        for (const auto& s : schemas()) {
            all.insert(all.end(), s.members.begin(), s.members.end());
        }
        std::sort(all.begin(), all.end());
        all.erase(std::unique(all.begin(), all.end()), all.end());
        return all;
    }();
    return members;
}

KinematicsSeries compute_kinematics(const Stroke& stroke) {
    const auto& p = stroke.samples;
    const std::size_t n = p.size();
    KinematicsSeries k;
    if (n < 2) {
        throw InputError("kinematics need at least two samples");
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double dx = p[i + 1].x - p[i].x;
        const double dy = p[i + 1].y - p[i].y;
        const double dt = static_cast<double>(p[i + 1].timestamp_ms - p[i].timestamp_ms) / 1000.0;
        k.gap_seconds.push_back(dt);
        k.velocity.push_back(std::hypot(dx, dy) / dt);
        k.angle.push_back(std::atan2(dy, dx));
    }
    // Each gap velocity belongs to the gap midpoint, so the derivative uses
    // the midpoint-to-midpoint interval.
    for (std::size_t j = 0; j + 1 < k.velocity.size(); ++j) {
        const double dt = 0.5 * (k.gap_seconds[j] + k.gap_seconds[j + 1]);
        k.acceleration.push_back((k.velocity[j + 1] - k.velocity[j]) / dt);
    }

    const double cx = p.back().x - p.front().x;
    const double cy = p.back().y - p.front().y;
    const double chord = std::hypot(cx, cy);
    for (const auto& s : p) {
        const double rx = s.x - p.front().x;
        const double ry = s.y - p.front().y;
        k.deviation.push_back(chord > 0.0 ? std::abs(cx * ry - cy * rx) / chord : std::hypot(rx, ry));
    }
    return k;
}

FeatureVector extract_features(const Stroke& stroke, const Stroke* prev) {
    const auto& p = stroke.samples;
    const std::size_t n = p.size();
    if (n < 3) {
        throw InputError("feature extraction needs at least three samples");
    }
    const KinematicsSeries k = compute_kinematics(stroke);

    FeatureVector fv;
    fv.stroke = {stroke.user_id, stroke.swipe_id, stroke.session, stroke.direction, stroke.start_ms()};
    auto set = [&fv](int index, double value) { fv.values[static_cast<std::size_t>(index - 1)] = value; };

    std::vector<double> pressure;
    std::vector<double> area;
    for (const auto& s : p) {
        pressure.push_back(s.pressure);
        area.push_back(s.area);
    }

    const double dx = p.back().x - p.front().x;
    const double dy = p.back().y - p.front().y;
    const double e2e = std::hypot(dx, dy);
    double path = 0.0;
    double sum_cos = 0.0;
    double sum_sin = 0.0;
    std::size_t moving_gaps = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double step = std::hypot(p[i + 1].x - p[i].x, p[i + 1].y - p[i].y);
        path += step;
        if (step > 0.0) {
            sum_cos += std::cos(k.angle[i]);
            sum_sin += std::sin(k.angle[i]);
            ++moving_gaps;
        }
    }
    const double mean_cos = moving_gaps ? sum_cos / static_cast<double>(moving_gaps) : kNaN;
    const double mean_sin = moving_gaps ? sum_sin / static_cast<double>(moving_gaps) : kNaN;
    const double direction_e2e = std::atan2(dy, dx);

    set(1, prev ? static_cast<double>(stroke.start_ms() - prev->end_ms()) : kNaN);
    set(2, static_cast<double>(stroke.end_ms() - stroke.start_ms()));
    set(3, p.front().x);
    set(4, p.front().y);
    set(5, p.back().x);
    set(6, p.back().y);
    set(7, e2e);
    set(8, std::min(1.0, std::hypot(mean_cos, mean_sin)));
    set(9, quadrant_code(direction_e2e));
    set(10, direction_e2e);
    set(11, pct(k.velocity, 20));
    set(12, pct(k.velocity, 50));
    set(13, pct(k.velocity, 80));
    set(14, pct(k.acceleration, 20));
    set(15, pct(k.acceleration, 50));
    set(16, pct(k.acceleration, 80));
    set(17, pct(tail(k.velocity, 3), 50));
    set(18, *std::max_element(k.deviation.begin(), k.deviation.end()));
    set(19, pct(k.deviation, 20));
    set(20, pct(k.deviation, 50));
    set(21, pct(k.deviation, 80));
    set(22, std::atan2(mean_sin, mean_cos));
    set(23, path);
    set(24, path > 0.0 ? std::min(1.0, e2e / path) : kNaN);
    set(25, stats::mean(k.velocity));
    set(26, pct(tail(k.acceleration, 5), 50));
    set(27, p[n / 2].pressure);
    set(28, p[n / 2].area);
    set(29, 0.0);
    set(30, 0.0);
    set(31, stats::stddev(k.velocity));
    set(32, pct(k.velocity, 25));
    set(33, pct(k.velocity, 75));
    set(34, stats::mean(k.acceleration));
    set(35, stats::stddev(k.acceleration));
    set(36, pct(k.acceleration, 25));
    set(37, pct(k.acceleration, 75));
    set(38, stats::mean(pressure));
    set(39, stats::stddev(pressure));
    set(40, pct(pressure, 25));
    set(41, pct(pressure, 50));
    set(42, pct(pressure, 75));
    set(43, stats::mean(area));
    set(44, stats::stddev(area));
    set(45, pct(area, 25));
    set(46, pct(area, 50));
    set(47, pct(area, 75));
    set(48, p.front().pressure);
    set(49, p.back().pressure);
    set(50, static_cast<double>(static_cast<int>(stroke.direction)));

    // Gap-indexed positions refer to the gap's starting sample.
    const std::size_t vmax = arg_extreme(k.velocity, true);
    const std::size_t vmin = arg_extreme(k.velocity, false);
    const bool have_v = vmax != std::string::npos;
    set(51, have_v ? p[vmax].x : kNaN);
    set(52, have_v ? p[vmin].x : kNaN);
    set(53, have_v ? p[vmax].y : kNaN);
    set(54, have_v ? p[vmin].y : kNaN);
    set(55, have_v ? k.velocity[vmax] : kNaN);
    set(56, have_v ? k.velocity[vmin] : kNaN);

    const double slope = dx != 0.0 ? dy / dx : kNaN;
    set(57, slope);
    set(58, p.front().y - slope * p.front().x);

    const std::size_t ldp = arg_extreme(k.deviation, true);
    set(59, p[ldp].x);
    set(60, p[ldp].y);
    set(61, p[ldp].pressure);
    double pre_vx = 0.0, pre_vy = 0.0, post_vx = 0.0, post_vy = 0.0;
    std::size_t pre_n = 0, post_n = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double vx = (p[i + 1].x - p[i].x) / k.gap_seconds[i];
        const double vy = (p[i + 1].y - p[i].y) / k.gap_seconds[i];
        if (i < ldp) {
            pre_vx += vx;
            pre_vy += vy;
            ++pre_n;
        } else {
            post_vx += vx;
            post_vy += vy;
            ++post_n;
        }
    }
    set(62, pre_n ? pre_vx / static_cast<double>(pre_n) : 0.0);
    set(63, pre_n ? pre_vy / static_cast<double>(pre_n) : 0.0);
    set(64, post_n ? post_vx / static_cast<double>(post_n) : 0.0);
    set(65, post_n ? post_vy / static_cast<double>(post_n) : 0.0);
    set(66, p.front().pressure);
    set(67, have_v ? static_cast<double>(p[vmax + 1].timestamp_ms - p.front().timestamp_ms) : kNaN);
    set(68, prev ? p.front().x - prev->samples.front().x : kNaN);
    set(69, prev ? p.front().y - prev->samples.front().y : kNaN);
    set(70, dx);
    set(71, dy);
    set(72, pct(head(k.velocity, 3), 50));
    set(73, at_mid(k.velocity));
    set(74, pct(head(k.acceleration, 3), 50));
    set(75, pct(tail(k.acceleration, 3), 50));
    set(76, at_mid(k.acceleration));
    return fv;
}

std::vector<FeatureVector> extract_corpus(const Corpus& corpus, unsigned workers) {
    const auto& strokes = corpus.strokes;
    std::vector<FeatureVector> out(strokes.size());
    parallel_for(strokes.size(), workers, [&](std::size_t i) {
        const Stroke* prev = nullptr;
        if (i > 0 && strokes[i - 1].user_id == strokes[i].user_id && strokes[i - 1].session == strokes[i].session) {
            prev = &strokes[i - 1];
        }
        out[i] = extract_features(strokes[i], prev);
    });
    return out;
}

std::vector<double> project(const FeatureVector& fv, const FeatureSetSchema& schema) {
    std::vector<double> out;
    out.reserve(schema.members.size());
    for (int index : schema.members) {
        out.push_back(fv.at(index));
    }
    return out;
}

std::vector<FeatureVector> clean_nonfinite(std::span<const FeatureVector> vectors) {
    const auto& members = all_schema_members();
    std::vector<FeatureVector> out;
    out.reserve(vectors.size());
    for (const auto& fv : vectors) {
        if (std::all_of(members.begin(), members.end(), [&](int i) { return std::isfinite(fv.at(i)); })) {
            out.push_back(fv);
        }
    }
    return out;
}

void write_feature_csv(std::ostream& out, std::span<const FeatureVector> vectors) {
    out << "user_id,swipe_id,session,direction";
    for (std::size_t i = 1; i <= kFeatureCount; ++i) {
        out << ",f" << i;
    }
    out << '\n';
    std::string buf;
    for (const auto& fv : vectors) {
        buf.clear();
        fmt::format_to(std::back_inserter(buf), "{},{},{},{}", fv.stroke.user_id, fv.stroke.swipe_id,
                       to_string(fv.stroke.session), to_string(fv.stroke.direction));
        for (double v : fv.values) {
            if (std::isfinite(v)) {
                fmt::format_to(std::back_inserter(buf), ",{}", v);
            } else {
                buf += ',';
            }
        }
        buf += '\n';
        out << buf;
    }
}

} // namespace touchauth

#include "touchauth/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string_view>

#include <fmt/format.h>

#include "touchauth/error.hpp"
#include "touchauth/random.hpp"

namespace touchauth {

const char* to_string(Session s) { return s == Session::A ? "A" : "B"; }

const char* to_string(Direction d) {
    switch (d) {
    case Direction::Left:
        return "Left";
    case Direction::Right:
        return "Right";
    case Direction::Up:
        return "Up";
    case Direction::Down:
        return "Down";
    }
    return "?";
}

std::optional<Session> parse_session(std::string_view s) {
    if (s == "A" || s == "a") {
        return Session::A;
    }
    if (s == "B" || s == "b") {
        return Session::B;
    }
    return std::nullopt;
}

std::optional<Direction> parse_direction(std::string_view s) {
    for (Direction d : kAllDirections) {
        if (s == to_string(d)) {
            return d;
        }
    }
    return std::nullopt;
}

namespace {

bool stroke_order(const Stroke& a, const Stroke& b) {
    if (a.user_id != b.user_id) {
        return a.user_id < b.user_id;
    }
    if (a.session != b.session) {
        return a.session < b.session;
    }
    if (a.start_ms() != b.start_ms()) {
        return a.start_ms() < b.start_ms();
    }
    return a.swipe_id < b.swipe_id;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            return out;
        }
        out.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    if (s.empty()) {
        return false;
    }
    if (s.front() == '+') {
        s.remove_prefix(1);
    }
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

constexpr std::array<std::string_view, 8> kColumns{"user_id", "swipe_id", "session", "timestamp_ms",
                                                   "x",       "y",        "pressure", "area"};
constexpr std::size_t kMaxReportedProblems = 20;

} // namespace

Corpus make_corpus(std::vector<Stroke> strokes) {
    std::sort(strokes.begin(), strokes.end(), stroke_order);
    Corpus corpus;
    for (const auto& s : strokes) {
        if (corpus.users.empty() || corpus.users.back() != s.user_id) {
            corpus.users.push_back(s.user_id);
        }
    }
    corpus.strokes = std::move(strokes);
    return corpus;
}

Corpus parse_raw_events(const std::filesystem::path& path, InputFormat format, ParseReport* report) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot open input file: " + path.string());
    }
    return parse_raw_events(in, format, report);
}

Corpus parse_raw_events(std::istream& in, InputFormat /*format*/, ParseReport* report) {
    ParseReport local;
    ParseReport& rep = report ? *report : local;
    rep = {};

    std::string line;
    if (!std::getline(in, line)) {
        throw SchemaError("missing header row");
    }
    if (line.starts_with("\xEF\xBB\xBF")) {
        line.erase(0, 3);
    }
    const auto header = split_fields(line);
    std::array<std::size_t, kColumns.size()> column{};
    std::string missing;
    for (std::size_t c = 0; c < kColumns.size(); ++c) {
        auto it = std::find(header.begin(), header.end(), kColumns[c]);
        if (it == header.end()) {
            missing += missing.empty() ? "" : ", ";
            missing += kColumns[c];
        } else {
            column[c] = static_cast<std::size_t>(it - header.begin());
        }
    }
    if (!missing.empty()) {
        throw SchemaError("missing required column(s): " + missing);
    }

    std::map<std::pair<std::string, std::string>, Stroke> grouped;
    std::size_t line_no = 1;
    auto reject = [&](std::string reason) {
        ++rep.rows_skipped;
        if (rep.problems.size() < kMaxReportedProblems) {
            rep.problems.push_back(fmt::format("line {}: {}", line_no, reason));
        }
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        ++rep.rows_read;
        const auto fields = split_fields(line);
        if (fields.size() < header.size()) {
            reject("expected " + std::to_string(header.size()) + " fields");
            continue;
        }
        const std::string_view user = fields[column[0]];
        const std::string_view swipe = fields[column[1]];
        if (user.empty() || swipe.empty()) {
            reject("empty identifier");
            continue;
        }
        const auto session = parse_session(fields[column[2]]);
        if (!session) {
            reject("session must be A or B");
            continue;
        }
        TouchSample sample;
        if (!parse_number(fields[column[3]], sample.timestamp_ms)) {
            reject("non-integer timestamp");
            continue;
        }
        if (!parse_number(fields[column[4]], sample.x) || !parse_number(fields[column[5]], sample.y) ||
            !parse_number(fields[column[6]], sample.pressure) || !parse_number(fields[column[7]], sample.area)) {
            reject("non-numeric field");
            continue;
        }
        if (!std::isfinite(sample.x) || !std::isfinite(sample.y) || !std::isfinite(sample.pressure) ||
            !std::isfinite(sample.area)) {
            reject("non-finite field");
            continue;
        }
        if (sample.pressure < 0.0 || sample.area < 0.0) {
            reject("negative pressure or area");
            continue;
        }

        auto [it, inserted] = grouped.try_emplace({std::string(user), std::string(swipe)});
        Stroke& stroke = it->second;
        if (inserted) {
            stroke.user_id = user;
            stroke.swipe_id = swipe;
            stroke.session = *session;
        } else if (stroke.session != *session) {
            reject("session differs from earlier rows of the same swipe");
            continue;
        }
        stroke.samples.push_back(sample);
    }

    std::vector<Stroke> strokes;
    strokes.reserve(grouped.size());
    for (auto& [key, stroke] : grouped) {
        std::stable_sort(stroke.samples.begin(), stroke.samples.end(),
                         [](const TouchSample& a, const TouchSample& b) { return a.timestamp_ms < b.timestamp_ms; });
        // Single-sample strokes keep the default direction; click
        // filtering removes them.
        if (stroke.samples.size() >= 2) {
            stroke.direction = classify_direction(stroke);
        }
        strokes.push_back(std::move(stroke));
    }
    return make_corpus(std::move(strokes));
}

void write_canonical_csv(std::ostream& out, const Corpus& corpus) {
    out << "user_id,swipe_id,session,timestamp_ms,x,y,pressure,area\n";
    std::string buf;
    for (const auto& s : corpus.strokes) {
        for (const auto& p : s.samples) {
            buf.clear();
            fmt::format_to(std::back_inserter(buf), "{},{},{},{},{},{},{},{}\n", s.user_id, s.swipe_id,
                           to_string(s.session), p.timestamp_ms, p.x, p.y, p.pressure, p.area);
            out << buf;
        }
    }
}

double trajectory_length(const Stroke& stroke) {
    double len = 0.0;
    for (std::size_t i = 1; i < stroke.samples.size(); ++i) {
        len += std::hypot(stroke.samples[i].x - stroke.samples[i - 1].x, stroke.samples[i].y - stroke.samples[i - 1].y);
    }
    return len;
}

Corpus filter_clicks(const Corpus& corpus, ClickFilterReport* report) {
    ClickFilterReport local;
    ClickFilterReport& rep = report ? *report : local;
    rep = {};
    std::vector<Stroke> kept;
    kept.reserve(corpus.strokes.size());
    for (const auto& s : corpus.strokes) {
        if (s.samples.size() <= kMaxClickPoints) {
            ++rep.removed_few_points;
        } else if (trajectory_length(s) < kMinStrokePathPx) {
            ++rep.removed_short_path;
        } else {
            kept.push_back(s);
        }
    }
    return make_corpus(std::move(kept));
}

Direction classify_direction(const Stroke& stroke) {
    if (stroke.samples.size() < 2) {
        throw InputError("direction needs at least two samples");
    }
    const double dx = stroke.samples.back().x - stroke.samples.front().x;
    const double dy = stroke.samples.back().y - stroke.samples.front().y;
    if (std::abs(dx) >= std::abs(dy)) {
        return dx >= 0.0 ? Direction::Right : Direction::Left;
    }
    return dy > 0.0 ? Direction::Down : Direction::Up;
}

Corpus label_directions(Corpus corpus) {
    for (auto& s : corpus.strokes) {
        if (s.samples.size() < 2) {
            s.degenerate_direction = true;
            continue;
        }
        s.direction = classify_direction(s);
        s.degenerate_direction = s.samples.back().x == s.samples.front().x && s.samples.back().y == s.samples.front().y;
    }
    return corpus;
}

std::vector<UserSubset> select_eligible_users(const Corpus& corpus, Quotas quotas,
                                              std::vector<ExclusionRecord>* excluded) {
    std::map<std::string, std::array<std::array<std::vector<const Stroke*>, 4>, 2>> by_user;
    for (const auto& s : corpus.strokes) {
        by_user[s.user_id][static_cast<int>(s.session)][static_cast<int>(s.direction)].push_back(&s);
    }

    auto chronological = [](const Stroke* a, const Stroke* b) {
        if (a->start_ms() != b->start_ms()) {
            return a->start_ms() < b->start_ms();
        }
        return a->swipe_id < b->swipe_id;
    };

    std::vector<UserSubset> out;
    for (auto& [user, sessions] : by_user) {
        std::string reason;
        for (Direction d : kAllDirections) {
            const auto di = static_cast<int>(d);
            const std::size_t have_a = sessions[0][di].size();
            const std::size_t have_b = sessions[1][di].size();
            if (reason.empty() && have_a < quotas.train_per_direction) {
                reason = fmt::format("session A {}: {} < {}", to_string(d), have_a, quotas.train_per_direction);
            }
            if (reason.empty() && have_b < quotas.test_per_direction) {
                reason = fmt::format("session B {}: {} < {}", to_string(d), have_b, quotas.test_per_direction);
            }
        }
        if (!reason.empty()) {
            if (excluded) {
                excluded->push_back({user, reason});
            }
            continue;
        }
        UserSubset subset;
        subset.user_id = user;
        for (Direction d : kAllDirections) {
            const auto di = static_cast<int>(d);
            for (int sess = 0; sess < 2; ++sess) {
                auto& pool = sessions[sess][di];
                std::sort(pool.begin(), pool.end(), chronological);
                const std::size_t quota = sess == 0 ? quotas.train_per_direction : quotas.test_per_direction;
                auto& dest = sess == 0 ? subset.train[di] : subset.test[di];
                for (std::size_t i = 0; i < quota; ++i) {
                    dest.push_back(*pool[i]);
                }
            }
        }
        out.push_back(std::move(subset));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace {

// One behavioural trait: population mean, how far users spread per unit of
// separability, and the stroke-to-stroke noise around a user's own value.
struct Trait {
    double mean;
    double user_spread;
    double stroke_noise;
};

enum TraitId : std::size_t {
    kLengthH,
    kLengthV,
    kLogSpeed,
    kBend,
    kBendAsym,
    kPeak,
    kStartX,
    kStartY,
    kLateral,
    kPressure,
    kPressureSlope,
    kArea,
    kAreaSlope,
    kIntervalMs,
    kLogGapMs,
    kTraitCount
};

// Lengths in px, speed as log(px/s), bend as a fraction of stroke length,
// pressure/area in device units.
constexpr std::array<Trait, kTraitCount> kTraits{{
    {380.0, 40.0, 45.0},   // kLengthH
    {620.0, 60.0, 70.0},   // kLengthV
    {7.3, 0.12, 0.14},     // kLogSpeed
    {0.0, 0.035, 0.035},   // kBend
    {1.0, 0.25, 0.25},     // kBendAsym
    {0.45, 0.05, 0.06},    // kPeak
    {0.0, 45.0, 50.0},     // kStartX
    {0.0, 60.0, 70.0},     // kStartY
    {0.0, 0.025, 0.03},    // kLateral
    {0.50, 0.06, 0.05},    // kPressure
    {0.0, 0.06, 0.05},     // kPressureSlope
    {0.30, 0.035, 0.03},   // kArea
    {0.0, 0.04, 0.03},     // kAreaSlope
    {16.0, 1.5, 0.8},      // kIntervalMs
    {7.2, 0.20, 0.45},     // kLogGapMs
}};

constexpr double kSessionDrift = 0.2;

using Profile = std::array<double, kTraitCount>;

Profile draw_profile(Rng& rng, double separability) {
    Profile p{};
    for (std::size_t k = 0; k < kTraitCount; ++k) {
        p[k] = kTraits[k].mean + separability * kTraits[k].user_spread * rng.normal();
    }
    return p;
}

Profile drift_profile(const Profile& base, Rng& rng, double separability) {
    Profile p = base;
    for (std::size_t k = 0; k < kTraitCount; ++k) {
        p[k] += separability * kSessionDrift * kTraits[k].user_spread * rng.normal();
    }
    return p;
}

struct Vec2 {
    double x;
    double y;
};

Vec2 unit_vector(Direction d) {
    switch (d) {
    case Direction::Left:
        return {-1.0, 0.0};
    case Direction::Right:
        return {1.0, 0.0};
    case Direction::Up:
        return {0.0, -1.0};
    case Direction::Down:
        return {0.0, 1.0};
    }
    return {1.0, 0.0};
}

Vec2 start_anchor(Direction d) {
    switch (d) {
    case Direction::Left:
        return {820.0, 1150.0};
    case Direction::Right:
        return {260.0, 1150.0};
    case Direction::Up:
        return {540.0, 1500.0};
    case Direction::Down:
        return {540.0, 650.0};
    }
    return {540.0, 960.0};
}

double round_to(double v, double step) { return std::round(v / step) * step; }

std::vector<TouchSample> draw_stroke_samples(const Profile& user, Direction dir, std::int64_t t0, Rng& rng) {
    auto jitter = [&](std::size_t k) { return user[k] + kTraits[k].stroke_noise * rng.normal(); };

    const bool horizontal = dir == Direction::Left || dir == Direction::Right;
    const double length = std::max(120.0, jitter(horizontal ? kLengthH : kLengthV));
    const double speed = std::exp(jitter(kLogSpeed));
    const double bend = jitter(kBend);
    const double bend_asym = jitter(kBendAsym);
    const double peak = std::clamp(jitter(kPeak), 0.2, 0.8);
    const double lateral = jitter(kLateral);
    const double pressure = jitter(kPressure);
    const double pressure_slope = jitter(kPressureSlope);
    const double area = jitter(kArea);
    const double area_slope = jitter(kAreaSlope);
    const double interval = std::max(5.0, jitter(kIntervalMs));

    const Vec2 e = unit_vector(dir);
    const Vec2 n{-e.y, e.x};
    const Vec2 anchor = start_anchor(dir);
    const Vec2 p0{anchor.x + jitter(kStartX), anchor.y + jitter(kStartY)};
    const Vec2 p3{p0.x + length * (e.x + lateral * n.x), p0.y + length * (e.y + lateral * n.y)};
    const Vec2 chord{p3.x - p0.x, p3.y - p0.y};
    const Vec2 p1{p0.x + chord.x / 3.0 + bend * length * n.x, p0.y + chord.y / 3.0 + bend * length * n.y};
    const Vec2 p2{p0.x + 2.0 * chord.x / 3.0 + bend * bend_asym * length * n.x,
                  p0.y + 2.0 * chord.y / 3.0 + bend * bend_asym * length * n.y};

    const double duration_ms = 1000.0 * length / speed;
    const auto count = static_cast<std::size_t>(std::clamp(std::round(duration_ms / interval) + 1.0, 8.0, 80.0));

    // Time warp puts the velocity peak near `peak` of the stroke duration.
    const double warp = std::log(0.5) / std::log(peak);

    std::vector<TouchSample> samples;
    samples.reserve(count);
    std::int64_t t = t0;
    for (std::size_t k = 0; k < count; ++k) {
        if (k > 0) {
            t += std::max<std::int64_t>(1, std::llround(interval + 0.6 * rng.normal()));
        }
        const double u = static_cast<double>(k) / static_cast<double>(count - 1);
        const double tau = 0.5 * (1.0 - std::cos(std::numbers::pi * std::pow(u, warp)));
        const double a = 1.0 - tau;
        const double x = a * a * a * p0.x + 3 * a * a * tau * p1.x + 3 * a * tau * tau * p2.x + tau * tau * tau * p3.x;
        const double y = a * a * a * p0.y + 3 * a * a * tau * p1.y + 3 * a * tau * tau * p2.y + tau * tau * tau * p3.y;
        TouchSample s;
        s.timestamp_ms = t;
        s.x = round_to(x + 0.3 * rng.normal(), 0.01);
        s.y = round_to(y + 0.3 * rng.normal(), 0.01);
        s.pressure = round_to(std::clamp(pressure + pressure_slope * (u - 0.5) + 0.01 * rng.normal(), 0.01, 1.0), 1e-4);
        s.area = round_to(std::clamp(area + area_slope * (u - 0.5) + 0.005 * rng.normal(), 0.001, 2.0), 1e-4);
        samples.push_back(s);
    }
    return samples;
}

constexpr std::int64_t kSessionAStartMs = 1'600'000'000'000;
constexpr std::int64_t kSessionGapMs = 2 * 86'400'000;

} // namespace

Corpus generate_synthetic_corpus(const SyntheticSpec& spec) {
    if (spec.n_users < 2) {
        throw InputError("synthetic corpus needs at least two users");
    }
    if (!(spec.separability >= 0.0)) {
        throw InputError("separability must be non-negative");
    }

    std::vector<Stroke> strokes;
    const int width = static_cast<int>(std::to_string(spec.n_users).size());
    for (std::size_t u = 0; u < spec.n_users; ++u) {
        const std::string user_id = fmt::format("u{:0{}}", u + 1, width);
        Rng rng(SeedBuilder(spec.seed).add("synthetic-user").add(std::uint64_t{u}).seed());
        const Profile base = draw_profile(rng, spec.separability);

        for (Session session : {Session::A, Session::B}) {
            const Profile user = session == Session::A ? base : drift_profile(base, rng, spec.separability);
            const std::size_t per_dir = session == Session::A ? spec.train_per_direction : spec.test_per_direction;
            std::vector<Direction> order;
            for (Direction d : kAllDirections) {
                order.insert(order.end(), per_dir, d);
            }
            rng.shuffle(order);

            std::int64_t t = session == Session::A ? kSessionAStartMs : kSessionAStartMs + kSessionGapMs;
            for (std::size_t k = 0; k < order.size(); ++k) {
                Stroke stroke;
                stroke.user_id = user_id;
                stroke.swipe_id = fmt::format("{}-{}-{:05}", user_id, to_string(session), k);
                stroke.session = session;
                // Redraw until the geometry lands in the intended direction.
                for (int attempt = 0; attempt < 16; ++attempt) {
                    stroke.samples = draw_stroke_samples(user, order[k], t, rng);
                    if (classify_direction(stroke) == order[k]) {
                        break;
                    }
                }
                stroke.direction = classify_direction(stroke);
                t = stroke.end_ms() +
                    std::max<std::int64_t>(50, std::llround(std::exp(user[kLogGapMs] + kTraits[kLogGapMs].stroke_noise * rng.normal())));
                strokes.push_back(std::move(stroke));
            }
        }
    }
    return make_corpus(std::move(strokes));
}

} // namespace touchauth

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace touchauth {

enum class Session : std::uint8_t { A, B };

// Screen coordinates: y grows downward, so an upward swipe has negative dy.
enum class Direction : std::uint8_t { Left = 0, Right = 1, Up = 2, Down = 3 };

inline constexpr std::array<Direction, 4> kAllDirections{Direction::Left, Direction::Right, Direction::Up,
                                                        Direction::Down};

enum class Orientation : std::uint8_t { Portrait };

const char* to_string(Session s);
const char* to_string(Direction d);
std::optional<Session> parse_session(std::string_view s);
std::optional<Direction> parse_direction(std::string_view s);

struct TouchSample {
    std::int64_t timestamp_ms = 0;
    double x = 0.0;
    double y = 0.0;
    double pressure = 0.0;
    double area = 0.0;
};

struct Stroke {
    std::string user_id;
    std::string swipe_id;
    Session session = Session::A;
    std::vector<TouchSample> samples;
    Direction direction = Direction::Right;
    Orientation orientation = Orientation::Portrait;
    /// Set when the end-to-end displacement is exactly zero.
    bool degenerate_direction = false;

    std::int64_t start_ms() const { return samples.front().timestamp_ms; }
    std::int64_t end_ms() const { return samples.back().timestamp_ms; }
};

struct Corpus {
    std::vector<Stroke> strokes;
    std::vector<std::string> users;
};

/// Strokes sorted by (user, session, start time, swipe id) and the sorted
/// set of users they reference.
Corpus make_corpus(std::vector<Stroke> strokes);

enum class InputFormat { Canonical };

struct ParseReport {
    std::size_t rows_read = 0;
    std::size_t rows_skipped = 0;
    /// First few row-level problems, "line N: reason".
    std::vector<std::string> problems;
};

/// Reads the canonical stroke CSV:
/// `user_id,swipe_id,session,timestamp_ms,x,y,pressure,area`.
/// Column order may vary; a missing column raises SchemaError, an
/// unreadable file InputError. Bad rows are skipped and counted.
Corpus parse_raw_events(const std::filesystem::path& path, InputFormat format, ParseReport* report = nullptr);
Corpus parse_raw_events(std::istream& in, InputFormat format, ParseReport* report = nullptr);

/// Writes the canonical CSV (one row per sample, LF line endings).
void write_canonical_csv(std::ostream& out, const Corpus& corpus);

/// Polyline length of the stroke's sample trajectory.
double trajectory_length(const Stroke& stroke);

struct ClickFilterReport {
    std::size_t removed_few_points = 0;
    std::size_t removed_short_path = 0;
};

inline constexpr std::size_t kMaxClickPoints = 5;
inline constexpr double kMinStrokePathPx = 3.0;

/// Removes clicks: strokes with at most five samples or a trajectory
/// shorter than three pixels.
Corpus filter_clicks(const Corpus& corpus, ClickFilterReport* report = nullptr);

/// Dominant axis of the end-to-end displacement; |dx| == |dy| goes to the
/// horizontal axis and a zero component to the positive direction.
Direction classify_direction(const Stroke& stroke);

/// Applies classify_direction to every stroke.
Corpus label_directions(Corpus corpus);

struct UserSubset {
    std::string user_id;
    /// Indexed by Direction; strokes in chronological order.
    std::array<std::vector<Stroke>, 4> train;
    std::array<std::vector<Stroke>, 4> test;

    const std::vector<Stroke>& train_for(Direction d) const { return train[static_cast<int>(d)]; }
    const std::vector<Stroke>& test_for(Direction d) const { return test[static_cast<int>(d)]; }
};

struct ExclusionRecord {
    std::string user_id;
    std::string reason;
};

struct Quotas {
    std::size_t train_per_direction = 50;
    std::size_t test_per_direction = 30;
};

/// Keeps users whose session A holds at least `train_per_direction`
/// strokes in every direction and whose session B holds at least
/// `test_per_direction`; the earliest strokes fill each quota.
std::vector<UserSubset> select_eligible_users(const Corpus& corpus, Quotas quotas = {},
                                              std::vector<ExclusionRecord>* excluded = nullptr);

struct SyntheticSpec {
    std::size_t n_users = 10;
    std::size_t train_per_direction = 60;
    std::size_t test_per_direction = 40;
    std::uint64_t seed = 1;
    double separability = 3.0;
};

/// Seeded corpus of smooth swipe arcs. Each user draws kinematic,
/// geometric, pressure and area parameters around a shared population
/// mean; `separability` scales how far apart users sit.
Corpus generate_synthetic_corpus(const SyntheticSpec& spec);

} // namespace touchauth

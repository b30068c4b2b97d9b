#include "touchauth/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "touchauth/error.hpp"
#include "touchauth/stats.hpp"

namespace touchauth {

std::vector<double> ScoreStream::probabilities() const {
    std::vector<double> out;
    out.reserve(scores.size());
    for (const auto& s : scores) {
        out.push_back(s.probability);
    }
    return out;
}

ScoreStream score_test_strokes(const SlotModels& models, Approach approach, const FeatureSetSchema& schema,
                               const std::string& owner, const std::string& identity,
                               std::span<const FeatureVector* const> test) {
    std::vector<const FeatureVector*> ordered(test.begin(), test.end());
    std::stable_sort(ordered.begin(), ordered.end(), [](const FeatureVector* a, const FeatureVector* b) {
        if (a->stroke.start_ms != b->stroke.start_ms) {
            return a->stroke.start_ms < b->stroke.start_ms;
        }
        return a->stroke.swipe_id < b->stroke.swipe_id;
    });

    std::map<Slot, std::vector<std::size_t>> routed;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        const Slot slot = slot_for(approach, ordered[i]->stroke.direction);
        if (!models.contains(slot)) {
            throw InputError(fmt::format("no {} model to score a {} stroke", to_string(slot),
                                         to_string(ordered[i]->stroke.direction)));
        }
        routed[slot].push_back(i);
    }

    ScoreStream stream;
    stream.identity = identity;
    stream.owner = owner;
    stream.scores.resize(ordered.size());
    for (const auto& [slot, rows] : routed) {
        Matrix x(0, schema.members.size());
        for (std::size_t i : rows) {
            x.append_row(project(*ordered[i], schema));
        }
        const auto proba = predict_proba(models.at(slot), x);
        for (std::size_t j = 0; j < rows.size(); ++j) {
            const FeatureVector& fv = *ordered[rows[j]];
            stream.scores[rows[j]] = {fv.stroke.swipe_id, fv.stroke.start_ms, fv.stroke.direction, proba[j]};
        }
    }
    return stream;
}

std::vector<double> fuse_moving_average(std::span<const double> probabilities, int n) {
    if (n < 1) {
        throw InputError("fusion window must be at least 1");
    }
    const auto window = static_cast<std::size_t>(n);
    if (probabilities.size() < window) {
        return {};
    }
    std::vector<double> out(probabilities.size() - window + 1);
    for (std::size_t i = 0; i < out.size(); ++i) {
        // Summed afresh per window so results never depend on history.
        double sum = 0.0;
        for (std::size_t j = i; j < i + window; ++j) {
            sum += probabilities[j];
        }
        out[i] = sum / static_cast<double>(window);
    }
    return out;
}

double auc(std::span<const double> genuine, std::span<const double> impostor) {
    if (genuine.empty() || impostor.empty()) {
        throw MetricError("AUC needs genuine and impostor scores");
    }
    struct Item {
        double score;
        bool genuine;
    };
    std::vector<Item> all;
    all.reserve(genuine.size() + impostor.size());
    for (double g : genuine) {
        all.push_back({g, true});
    }
    for (double i : impostor) {
        all.push_back({i, false});
    }
    std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

    // Twice the genuine rank sum is an integer, so the count stays exact.
    double doubled_rank_sum = 0.0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        std::size_t n_genuine = 0;
        while (j < all.size() && all[j].score == all[i].score) {
            n_genuine += all[j].genuine ? 1 : 0;
            ++j;
        }
        // Ranks i+1 .. j share the average (i + 1 + j) / 2.
        doubled_rank_sum += static_cast<double>(n_genuine) * static_cast<double>(i + 1 + j);
        i = j;
    }
    const auto ng = static_cast<double>(genuine.size());
    const auto ni = static_cast<double>(impostor.size());
    const double doubled_u = doubled_rank_sum - ng * (ng + 1.0);
    return doubled_u / (2.0 * ng * ni);
}

std::vector<RocPoint> roc_curve(std::span<const double> genuine, std::span<const double> impostor) {
    if (genuine.empty() || impostor.empty()) {
        throw MetricError("ROC needs genuine and impostor scores");
    }
    std::vector<double> g(genuine.begin(), genuine.end());
    std::vector<double> im(impostor.begin(), impostor.end());
    std::sort(g.begin(), g.end(), std::greater<>());
    std::sort(im.begin(), im.end(), std::greater<>());
    std::vector<double> thresholds(g);
    thresholds.insert(thresholds.end(), im.begin(), im.end());
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    std::vector<RocPoint> curve{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
    std::size_t gi = 0;
    std::size_t ii = 0;
    for (double t : thresholds) {
        while (gi < g.size() && g[gi] >= t) {
            ++gi;
        }
        while (ii < im.size() && im[ii] >= t) {
            ++ii;
        }
        curve.push_back({static_cast<double>(ii) / static_cast<double>(im.size()),
                         static_cast<double>(gi) / static_cast<double>(g.size()), t});
    }
    return curve;
}

double eer(std::span<const double> genuine, std::span<const double> impostor) {
    const auto curve = roc_curve(genuine, impostor);
    // FAR - FRR rises from -1 at the first point to +1 at the last.
    double prev_far = curve.front().fpr;
    double prev_diff = curve.front().fpr - (1.0 - curve.front().tpr);
    for (std::size_t k = 1; k < curve.size(); ++k) {
        const double far = curve[k].fpr;
        const double frr = 1.0 - curve[k].tpr;
        const double diff = far - frr;
        if (diff >= 0.0) {
            if (diff == 0.0) {
                return far;
            }
            const double s = -prev_diff / (diff - prev_diff);
            return prev_far + s * (far - prev_far);
        }
        prev_far = far;
        prev_diff = diff;
    }
    return curve.back().fpr;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw InputError("paired samples differ in length");
    }
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::isnan(a[i]) || std::isnan(b[i])) {
            throw InputError("paired samples contain NaN");
        }
        if (a[i] != b[i]) {
            d.push_back(a[i] - b[i]);
        }
    }
    WilcoxonResult out;
    out.n_nonzero = d.size();
    if (d.empty()) {
        out.degenerate = true;
        return out;
    }

    const std::size_t n = d.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return std::abs(d[x]) < std::abs(d[y]); });
    // Doubled average ranks are integers.
    std::vector<std::uint64_t> doubled_rank(n);
    double tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && std::abs(d[order[j]]) == std::abs(d[order[i]])) {
            ++j;
        }
        for (std::size_t k = i; k < j; ++k) {
            doubled_rank[order[k]] = i + 1 + j;
        }
        const auto t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        i = j;
    }
    std::uint64_t doubled_plus = 0;
    std::uint64_t doubled_total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        doubled_total += doubled_rank[i];
        if (d[i] > 0) {
            doubled_plus += doubled_rank[i];
        }
    }
    const std::uint64_t doubled_stat = std::min(doubled_plus, doubled_total - doubled_plus);
    out.w_plus = static_cast<double>(doubled_plus) / 2.0;
    out.w_minus = static_cast<double>(doubled_total - doubled_plus) / 2.0;
    out.statistic = static_cast<double>(doubled_stat) / 2.0;

    if (n <= kWilcoxonExactLimit) {
        // ways[s]: sign assignments whose doubled positive rank sum is s.
        std::vector<double> ways(doubled_total + 1, 0.0);
        ways[0] = 1.0;
        std::uint64_t reach = 0;
        for (std::uint64_t r : doubled_rank) {
            reach += r;
            for (std::uint64_t s = reach; s >= r; --s) {
                ways[s] += ways[s - r];
                if (s == r) {
                    break;
                }
            }
        }
        double lower = 0.0;
        for (std::uint64_t s = 0; s <= doubled_stat; ++s) {
            lower += ways[s];
        }
        out.exact = true;
        out.p_value = std::min(1.0, 2.0 * lower / std::ldexp(1.0, static_cast<int>(n)));
    } else {
        const auto nn = static_cast<double>(n);
        const double mean = nn * (nn + 1.0) / 4.0;
        const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
        const double z = (out.statistic - mean) / std::sqrt(var);
        out.p_value = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
    }
    out.reject_at_5pct = out.p_value < 0.05;
    return out;
}

// ---------------------------------------------------------------------------
// Reports

std::string ConfigKey::label() const {
    return fmt::format("{}/{}/{}", to_string(family), to_string(schema), to_string(approach));
}

namespace {

bool ranks_before(const AggregateMetrics& a, const AggregateMetrics& b) {
    if (a.mean_auc != b.mean_auc) {
        return a.mean_auc > b.mean_auc;
    }
    return a.config < b.config;
}

} // namespace

MetricsReport aggregate_report(std::span<const ConfigScores> scores, std::span<const int> windows) {
    MetricsReport report;
    report.windows.assign(windows.begin(), windows.end());
    std::sort(report.windows.begin(), report.windows.end());
    report.windows.erase(std::unique(report.windows.begin(), report.windows.end()), report.windows.end());
    for (int w : report.windows) {
        if (w < 1) {
            throw InputError("fusion windows must be positive");
        }
    }

    std::set<std::string> all_users;
    std::map<ConfigKey, std::set<std::string>> users_per_config;
    for (const auto& cs : scores) {
        all_users.insert(cs.owner);
        if (!users_per_config[cs.config].insert(cs.owner).second) {
            throw InputError(fmt::format("duplicate scores for {} under {}", cs.owner, cs.config.label()));
        }
        const auto genuine = std::count_if(cs.streams.begin(), cs.streams.end(),
                                           [](const ScoreStream& s) { return s.genuine(); });
        if (genuine != 1) {
            throw InputError(fmt::format("{} under {} needs exactly one genuine stream", cs.owner,
                                         cs.config.label()));
        }
    }
    for (const auto& [config, users] : users_per_config) {
        if (users.size() != all_users.size()) {
            report.partial = true;
            report.warnings.push_back(
                fmt::format("{} covers {} of {} users", config.label(), users.size(), all_users.size()));
        }
    }

    for (const auto& cs : scores) {
        for (int w : report.windows) {
            std::vector<double> genuine;
            std::vector<double> impostor;
            std::size_t short_streams = 0;
            for (const auto& stream : cs.streams) {
                const auto fused = fuse_moving_average(stream.probabilities(), w);
                if (fused.empty() && !stream.scores.empty()) {
                    ++short_streams;
                }
                auto& dest = stream.genuine() ? genuine : impostor;
                dest.insert(dest.end(), fused.begin(), fused.end());
            }
            if (short_streams > 0) {
                report.warnings.push_back(fmt::format("{} {} window {}: {} streams shorter than the window",
                                                      cs.owner, cs.config.label(), w, short_streams));
            }
            if (genuine.empty() || impostor.empty()) {
                report.partial = true;
                report.warnings.push_back(
                    fmt::format("{} {} window {}: no metrics, a class is empty", cs.owner, cs.config.label(), w));
                continue;
            }
            report.rows.push_back(
                {cs.owner, cs.config, w, auc(genuine, impostor), eer(genuine, impostor), genuine.size(),
                 impostor.size()});
        }
    }
    std::sort(report.rows.begin(), report.rows.end(), [](const UserWindowMetrics& a, const UserWindowMetrics& b) {
        return std::tie(a.config, a.user_id, a.window) < std::tie(b.config, b.user_id, b.window);
    });

    // (config, window) -> per-user values keyed by user for pairing.
    std::map<std::pair<ConfigKey, int>, std::map<std::string, std::pair<double, double>>> cells;
    for (const auto& row : report.rows) {
        cells[{row.config, row.window}][row.user_id] = {row.auc, row.eer};
    }
    for (const auto& [key, per_user] : cells) {
        std::vector<double> aucs;
        std::vector<double> eers;
        for (const auto& [user, m] : per_user) {
            aucs.push_back(m.first);
            eers.push_back(m.second);
        }
        AggregateMetrics agg;
        agg.config = key.first;
        agg.window = key.second;
        agg.n_users = per_user.size();
        agg.mean_auc = stats::mean(aucs);
        agg.mean_eer = stats::mean(eers);
        const double nan = std::numeric_limits<double>::quiet_NaN();
        agg.std_auc = aucs.size() > 1 ? stats::stddev(aucs, 1) : nan;
        agg.std_eer = eers.size() > 1 ? stats::stddev(eers, 1) : nan;
        report.aggregates.push_back(agg);
    }

    for (int w : kRankingWindows) {
        if (!std::binary_search(report.windows.begin(), report.windows.end(), w)) {
            continue;
        }
        auto& ranking = report.rankings[w];
        for (const auto& agg : report.aggregates) {
            if (agg.window == w) {
                ranking.push_back(agg);
            }
        }
        std::sort(ranking.begin(), ranking.end(), ranks_before);
        if (ranking.empty()) {
            continue;
        }
        const auto& top = cells[{ranking.front().config, w}];
        for (std::size_t r = 1; r < ranking.size(); ++r) {
            const auto& other = cells[{ranking[r].config, w}];
            std::vector<double> a;
            std::vector<double> b;
            for (const auto& [user, m] : top) {
                const auto it = other.find(user);
                if (it != other.end()) {
                    a.push_back(m.first);
                    b.push_back(it->second.first);
                }
            }
            report.significance.push_back({w, ranking.front().config, ranking[r].config, wilcoxon_signed_rank(a, b)});
        }
    }
    return report;
}

void write_metrics_csv(std::ostream& out, const MetricsReport& report) {
    out << "user_id,family,schema,approach,window,auc,eer,n_genuine,n_impostor\n";
    for (const auto& r : report.rows) {
        fmt::print(out, "{},{},{},{},{},{},{},{},{}\n", r.user_id, to_string(r.config.family),
                   to_string(r.config.schema), to_string(r.config.approach), r.window, r.auc, r.eer, r.n_genuine,
                   r.n_impostor);
    }
}

void write_plot_csv(std::ostream& out, const MetricsReport& report) {
    out << "family,schema,approach,window,n_users,mean_auc,std_auc,mean_eer,std_eer\n";
    for (const auto& a : report.aggregates) {
        fmt::print(out, "{},{},{},{},{},{},{},{},{}\n", to_string(a.config.family), to_string(a.config.schema),
                   to_string(a.config.approach), a.window, a.n_users, a.mean_auc, a.std_auc, a.mean_eer, a.std_eer);
    }
}

namespace {

nlohmann::ordered_json config_json(const ConfigKey& c) {
    return {{"label", c.label()},
            {"family", to_string(c.family)},
            {"schema", to_string(c.schema)},
            {"approach", to_string(c.approach)}};
}

nlohmann::ordered_json aggregate_json(const AggregateMetrics& a) {
    auto j = config_json(a.config);
    j["window"] = a.window;
    j["n_users"] = a.n_users;
    j["mean_auc"] = a.mean_auc;
    j["std_auc"] = a.std_auc;
    j["mean_eer"] = a.mean_eer;
    j["std_eer"] = a.std_eer;
    return j;
}

} // namespace

void write_summary_json(std::ostream& out, const MetricsReport& report) {
    nlohmann::ordered_json j;
    j["windows"] = report.windows;
    j["partial"] = report.partial;
    j["warnings"] = report.warnings;
    auto& rankings = j["rankings"] = nlohmann::ordered_json::object();
    for (const auto& [w, ranking] : report.rankings) {
        auto& table = rankings[std::to_string(w)] = nlohmann::ordered_json::array();
        for (std::size_t r = 0; r < ranking.size(); ++r) {
            auto entry = aggregate_json(ranking[r]);
            entry["rank"] = r + 1;
            table.push_back(entry);
        }
    }
    auto& sig = j["significance"] = nlohmann::ordered_json::array();
    for (const auto& s : report.significance) {
        sig.push_back({{"window", s.window},
                       {"reference", s.reference.label()},
                       {"config", s.config.label()},
                       {"n_nonzero", s.test.n_nonzero},
                       {"w_plus", s.test.w_plus},
                       {"w_minus", s.test.w_minus},
                       {"statistic", s.test.statistic},
                       {"p_value", s.test.p_value},
                       {"exact", s.test.exact},
                       {"degenerate", s.test.degenerate},
                       {"reject_at_5pct", s.test.reject_at_5pct}});
    }
    auto& aggs = j["aggregates"] = nlohmann::ordered_json::array();
    for (const auto& a : report.aggregates) {
        aggs.push_back(aggregate_json(a));
    }
    out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Score ledger

void write_scores_csv(std::ostream& out, std::span<const ConfigScores> scores) {
    out << "family,schema,approach,owner,identity,swipe_id,timestamp_ms,direction,probability\n";
    for (const auto& cs : scores) {
        for (const auto& stream : cs.streams) {
            for (const auto& s : stream.scores) {
                fmt::print(out, "{},{},{},{},{},{},{},{},{}\n", to_string(cs.config.family),
                           to_string(cs.config.schema), to_string(cs.config.approach), cs.owner, stream.identity,
                           s.swipe_id, s.timestamp_ms, to_string(s.direction), s.probability);
            }
        }
    }
}

namespace {

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma - start));
        if (comma == std::string_view::npos) {
            return out;
        }
        start = comma + 1;
    }
}

template <typename T>
T parse_number(std::string_view s, std::size_t line_no) {
    T value{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw InputError(fmt::format("scores line {}: bad number '{}'", line_no, s));
    }
    return value;
}

} // namespace

std::vector<ConfigScores> read_scores_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) ||
        line != "family,schema,approach,owner,identity,swipe_id,timestamp_ms,direction,probability") {
        throw SchemaError("scores file lacks the expected header");
    }
    std::vector<ConfigScores> out;
    std::map<std::pair<ConfigKey, std::string>, std::size_t> index;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto f = split_csv(line);
        if (f.size() != 9) {
            throw InputError(fmt::format("scores line {}: expected 9 fields", line_no));
        }
        const auto family = parse_family(f[0]);
        const auto schema = parse_feature_set(f[1]);
        const auto approach = parse_approach(f[2]);
        const auto direction = parse_direction(f[7]);
        if (!family || !schema || !approach || !direction) {
            throw InputError(fmt::format("scores line {}: unknown label", line_no));
        }
        const ConfigKey key{*family, *schema, *approach};
        const std::string owner(f[3]);
        auto [it, inserted] = index.try_emplace({key, owner}, out.size());
        if (inserted) {
            out.push_back({key, owner, {}});
        }
        auto& streams = out[it->second].streams;
        if (streams.empty() || streams.back().identity != f[4]) {
            streams.push_back({std::string(f[4]), owner, {}});
        }
        streams.back().scores.push_back({std::string(f[5]), parse_number<std::int64_t>(f[6], line_no), *direction,
                                         parse_number<double>(f[8], line_no)});
    }
    return out;
}

} // namespace touchauth

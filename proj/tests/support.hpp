#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "touchauth/features.hpp"
#include "touchauth/ingest.hpp"
#include "touchauth/random.hpp"

namespace touchauth::testing {

inline Stroke make_stroke(std::vector<std::int64_t> t, std::vector<double> x, std::vector<double> y,
                          std::string user = "u1", std::string swipe = "s1", Session session = Session::A) {
    Stroke s;
    s.user_id = std::move(user);
    s.swipe_id = std::move(swipe);
    s.session = session;
    for (std::size_t i = 0; i < t.size(); ++i) {
        s.samples.push_back({t[i], x[i], y[i], 0.5, 0.1});
    }
    s.direction = classify_direction(s);
    return s;
}

/// Random stroke whose coordinates lie on a 1/64 px grid, so integer
/// translations are exact in floating point. Always moves at least a few
/// pixels and has strictly increasing timestamps.
inline Stroke random_grid_stroke(Rng& rng, std::int64_t t0 = 1'000'000) {
    Stroke s;
    s.user_id = "u";
    s.swipe_id = "s";
    const std::size_t n = 6 + rng.below(40);
    double x = static_cast<double>(rng.below(1000)) + static_cast<double>(rng.below(64)) / 64.0;
    double y = static_cast<double>(rng.below(2000)) + static_cast<double>(rng.below(64)) / 64.0;
    const double heading = rng.uniform(-3.14159, 3.14159);
    std::int64_t t = t0;
    for (std::size_t i = 0; i < n; ++i) {
        s.samples.push_back({t, x, y, 0.2 + rng.uniform() * 0.6, 0.05 + rng.uniform() * 0.1});
        t += 1 + static_cast<std::int64_t>(rng.below(30));
        const double step = 2.0 + rng.uniform() * 20.0;
        const double wobble = rng.uniform(-0.6, 0.6);
        x += std::round(step * std::cos(heading + wobble) * 64.0) / 64.0;
        y += std::round(step * std::sin(heading + wobble) * 64.0) / 64.0;
    }
    // Guarantee a non-zero chord.
    s.samples.back().x += 3.0;
    s.direction = classify_direction(s);
    return s;
}

/// Integer points p0 + k_i * (ux, uy) with increasing k_i: exactly collinear.
inline Stroke random_collinear_stroke(Rng& rng) {
    Stroke s;
    s.user_id = "u";
    s.swipe_id = "s";
    const auto ux = static_cast<double>(static_cast<int>(rng.below(9)) - 4);
    auto uy = static_cast<double>(static_cast<int>(rng.below(9)) - 4);
    if (ux == 0.0 && uy == 0.0) {
        uy = 1.0;
    }
    const auto x0 = static_cast<double>(rng.below(800));
    const auto y0 = static_cast<double>(rng.below(1600));
    const std::size_t n = 6 + rng.below(30);
    double k = 0.0;
    std::int64_t t = 5000;
    for (std::size_t i = 0; i < n; ++i) {
        s.samples.push_back({t, x0 + k * ux, y0 + k * uy, 0.5, 0.1});
        k += 1.0 + static_cast<double>(rng.below(5));
        t += 1 + static_cast<std::int64_t>(rng.below(20));
    }
    s.direction = classify_direction(s);
    return s;
}

inline Stroke translated(Stroke s, double dx, double dy, std::int64_t dt) {
    for (auto& p : s.samples) {
        p.x += dx;
        p.y += dy;
        p.timestamp_ms += dt;
    }
    return s;
}

/// Rows that read absolute screen positions.
inline bool position_dependent(int index) {
    switch (index) {
    case 3:
    case 4:
    case 5:
    case 6:
    case 51:
    case 52:
    case 53:
    case 54:
    case 58: // intercept of the chord line
    case 59:
    case 60:
        return true;
    default:
        return false;
    }
}

inline bool close(double a, double b, double rel = 1e-9, double abs = 1e-9) {
    if (std::isnan(a) || std::isnan(b)) {
        return std::isnan(a) && std::isnan(b);
    }
    return std::abs(a - b) <= abs + rel * std::max(std::abs(a), std::abs(b));
}

} // namespace touchauth::testing

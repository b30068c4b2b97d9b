#include "svm_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "touchauth/error.hpp"

namespace touchauth::detail {

namespace {
constexpr double kTau = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();
} // namespace

double svm_gamma_scale(const Matrix& x) {
    const auto& d = x.data();
    if (d.empty() || x.cols() == 0) {
        return 1.0;
    }
    double mean = 0.0;
    for (double v : d) {
        mean += v;
    }
    mean /= static_cast<double>(d.size());
    double var = 0.0;
    for (double v : d) {
        var += (v - mean) * (v - mean);
    }
    var /= static_cast<double>(d.size());
    return var > 0.0 ? 1.0 / (static_cast<double>(x.cols()) * var) : 1.0;
}

double rbf_kernel(std::span<const double> a, std::span<const double> b, double gamma) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        d2 += d * d;
    }
    return std::exp(-gamma * d2);
}

SvmState train_svm(const Matrix& x, std::span<const int> y, double C, double tol) {
    const std::size_t n = x.rows();
    SvmState state;
    state.gamma = svm_gamma_scale(x);

    std::vector<double> ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        ys[i] = y[i] == 1 ? 1.0 : -1.0;
    }
    // Q_ij = y_i y_j K_ij, kept in full; training sets here are a few
    // hundred rows.
    std::vector<double> q(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        q[i * n + i] = 1.0;
        for (std::size_t j = 0; j < i; ++j) {
            const double k = rbf_kernel(x.row(i), x.row(j), state.gamma);
            q[i * n + j] = q[j * n + i] = ys[i] * ys[j] * k;
        }
    }

    std::vector<double> alpha(n, 0.0);
    std::vector<double> grad(n, -1.0);
    auto at_upper = [&](std::size_t t) { return alpha[t] >= C; };
    auto at_lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

    const std::size_t max_iter = std::max<std::size_t>(10'000'000, 100 * n);
    std::size_t iter = 0;
    for (; iter < max_iter; ++iter) {
        double g_max = -kInf;
        std::size_t i = n;
        for (std::size_t t = 0; t < n; ++t) {
            if (ys[t] > 0) {
                if (!at_upper(t) && -grad[t] >= g_max) {
                    g_max = -grad[t];
                    i = t;
                }
            } else if (!at_lower(t) && grad[t] >= g_max) {
                g_max = grad[t];
                i = t;
            }
        }
        if (i == n) {
            break;
        }
        double g_max2 = -kInf;
        double obj_min = kInf;
        std::size_t j = n;
        const double* q_i = &q[i * n];
        for (std::size_t t = 0; t < n; ++t) {
            double grad_diff;
            double quad;
            if (ys[t] > 0) {
                if (at_lower(t)) {
                    continue;
                }
                grad_diff = g_max + grad[t];
                g_max2 = std::max(g_max2, grad[t]);
                quad = 2.0 - 2.0 * ys[i] * q_i[t];
            } else {
                if (at_upper(t)) {
                    continue;
                }
                grad_diff = g_max - grad[t];
                g_max2 = std::max(g_max2, -grad[t]);
                quad = 2.0 + 2.0 * ys[i] * q_i[t];
            }
            if (grad_diff > 0.0) {
                const double obj = -(grad_diff * grad_diff) / (quad > 0.0 ? quad : kTau);
                if (obj <= obj_min) {
                    obj_min = obj;
                    j = t;
                }
            }
        }
        if (g_max + g_max2 < tol || j == n) {
            break;
        }

        const double* q_j = &q[j * n];
        const double old_i = alpha[i];
        const double old_j = alpha[j];
        if (ys[i] != ys[j]) {
            double quad = 2.0 + 2.0 * q_i[j];
            if (quad <= 0.0) {
                quad = kTau;
            }
            const double delta = (-grad[i] - grad[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0.0) {
                if (alpha[j] < 0.0) {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if (diff > 0.0) {
                if (alpha[i] > C) {
                    alpha[i] = C;
                    alpha[j] = C - diff;
                }
            } else if (alpha[j] > C) {
                alpha[j] = C;
                alpha[i] = C + diff;
            }
        } else {
            double quad = 2.0 - 2.0 * q_i[j];
            if (quad <= 0.0) {
                quad = kTau;
            }
            const double delta = (grad[i] - grad[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > C) {
                if (alpha[i] > C) {
                    alpha[i] = C;
                    alpha[j] = sum - C;
                }
            } else if (alpha[j] < 0.0) {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if (sum > C) {
                if (alpha[j] > C) {
                    alpha[j] = C;
                    alpha[i] = sum - C;
                }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        const double d_i = alpha[i] - old_i;
        const double d_j = alpha[j] - old_j;
        for (std::size_t t = 0; t < n; ++t) {
            grad[t] += q_i[t] * d_i + q_j[t] * d_j;
        }
    }
    state.iterations = iter;

    // Offset from free vectors, or the midpoint of the feasible interval.
    double ub = kInf;
    double lb = -kInf;
    double sum_free = 0.0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = ys[t] * grad[t];
        if (at_upper(t)) {
            if (ys[t] < 0) {
                ub = std::min(ub, yg);
            } else {
                lb = std::max(lb, yg);
            }
        } else if (at_lower(t)) {
            if (ys[t] > 0) {
                ub = std::min(ub, yg);
            } else {
                lb = std::max(lb, yg);
            }
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    state.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;

    state.alpha = alpha;
    state.y_signed.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
        state.y_signed[t] = ys[t] > 0 ? 1 : -1;
        if (alpha[t] > 0.0) {
            state.support_vectors.append_row(x.row(t));
            state.coef.push_back(alpha[t] * ys[t]);
        }
    }
    if (state.support_vectors.rows() == 0) {
        state.support_vectors = Matrix(0, x.cols());
    }

    std::vector<double> decision(n);
    for (std::size_t r = 0; r < n; ++r) {
        double f = -state.rho;
        for (std::size_t s = 0; s < state.coef.size(); ++s) {
            f += state.coef[s] * rbf_kernel(state.support_vectors.row(s), x.row(r), state.gamma);
        }
        decision[r] = f;
    }
    std::tie(state.platt_a, state.platt_b) = fit_platt(decision, y);
    return state;
}

std::pair<double, double> fit_platt(std::span<const double> decision, std::span<const int> y) {
    const std::size_t n = decision.size();
    double prior1 = 0.0;
    for (int v : y) {
        prior1 += v == 1 ? 1.0 : 0.0;
    }
    const double prior0 = static_cast<double>(n) - prior1;
    const double hi_target = (prior1 + 1.0) / (prior1 + 2.0);
    const double lo_target = 1.0 / (prior0 + 2.0);
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) {
        t[i] = y[i] == 1 ? hi_target : lo_target;
    }

    constexpr int kMaxIter = 100;
    constexpr double kMinStep = 1e-10;
    constexpr double kSigma = 1e-12;
    constexpr double kEps = 1e-5;

    auto objective = [&](double a, double b) {
        double f = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = decision[i] * a + b;
            f += z >= 0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1.0) * z + std::log1p(std::exp(z));
        }
        return f;
    };

    double a = 0.0;
    double b = std::log((prior0 + 1.0) / (prior1 + 1.0));
    double fval = objective(a, b);
    for (int it = 0; it < kMaxIter; ++it) {
        double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = decision[i] * a + b;
            double p, q;
            if (z >= 0) {
                p = std::exp(-z) / (1.0 + std::exp(-z));
                q = 1.0 / (1.0 + std::exp(-z));
            } else {
                p = 1.0 / (1.0 + std::exp(z));
                q = std::exp(z) / (1.0 + std::exp(z));
            }
            const double d2 = p * q;
            h11 += decision[i] * decision[i] * d2;
            h22 += d2;
            h21 += decision[i] * d2;
            const double d1 = t[i] - p;
            g1 += decision[i] * d1;
            g2 += d1;
        }
        if (std::abs(g1) < kEps && std::abs(g2) < kEps) {
            break;
        }
        const double det = h11 * h22 - h21 * h21;
        const double da = -(h22 * g1 - h21 * g2) / det;
        const double db = -(-h21 * g1 + h11 * g2) / det;
        const double gd = g1 * da + g2 * db;
        double step = 1.0;
        while (step >= kMinStep) {
            const double na = a + step * da;
            const double nb = b + step * db;
            const double nf = objective(na, nb);
            if (nf < fval + 1e-4 * step * gd) {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if (step < kMinStep) {
            break;
        }
    }
    return {a, b};
}

double platt_probability(double decision, double a, double b) {
    const double z = decision * a + b;
    return z >= 0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
}

} // namespace touchauth::detail

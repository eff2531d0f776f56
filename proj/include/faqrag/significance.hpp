#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"

namespace faqrag {

namespace quadrature {

struct Rule {
    std::vector<double> nodes;    // on [-1, 1]
    std::vector<double> weights;
};

// n-point Gauss-Legendre rule by Newton iteration on P_n.
inline Rule gauss_legendre(int n) {
    Rule rule;
    rule.nodes.resize(static_cast<std::size_t>(n));
    rule.weights.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[static_cast<std::size_t>(i)] = -x;
        rule.nodes[static_cast<std::size_t>(n - 1 - i)] = x;
        rule.weights[static_cast<std::size_t>(i)] = w;
        rule.weights[static_cast<std::size_t>(n - 1 - i)] = w;
    }
    return rule;
}

inline const Rule& gl16() {
    static const Rule rule = gauss_legendre(16);
    return rule;
}

// Composite rule: `panels` equal panels, 16 Gauss-Legendre nodes each.
template <typename F>
double integrate(F&& f, double a, double b, int panels) {
    const auto& rule = gl16();
    const double h = (b - a) / panels;
    double total = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double lo = a + p * h;
        const double mid = lo + 0.5 * h;
        double s = 0.0;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) s += rule.weights[i] * f(mid + 0.5 * h * rule.nodes[i]);
        total += 0.5 * h * s;
    }
    return total;
}

}  // namespace quadrature

namespace detail {

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Phi(a) - Phi(b) for a >= b, evaluated on whichever tail avoids cancellation.
inline double normal_interval(double a, double b) {
    if (b > 0.0) return 0.5 * (std::erfc(b / std::numbers::sqrt2) - std::erfc(a / std::numbers::sqrt2));
    return normal_cdf(a) - normal_cdf(b);
}

}  // namespace detail

// Node counts for the studentized range integrals. Inner: 24 panels over z in [-8.5, 8.5];
// outer: 32 panels over the support of the scaled chi density, trimmed where its log
// density falls 40 below the mode.
struct StudentizedRangeQuadrature {
    int inner_panels = 24;
    int outer_panels = 32;
    double z_limit = 8.5;
    double log_tail = 40.0;
};

// P(range of k iid standard normals <= w) = k * Int phi(z) [Phi(z) - Phi(z - w)]^(k-1) dz.
inline double normal_range_cdf(double w, int k, const StudentizedRangeQuadrature& quad = {}) {
    if (w <= 0.0) return 0.0;
    const double v = k * quadrature::integrate(
                             [&](double z) {
                                 const double inside = detail::normal_interval(z, z - w);
                                 return detail::normal_pdf(z) * std::pow(inside, k - 1);
                             },
                             -quad.z_limit, quad.z_limit, quad.inner_panels);
    return std::clamp(v, 0.0, 1.0);
}

// df at or above this is treated as infinite.
inline constexpr double kInfiniteDf = 1e7;

// P(Q <= q) for the studentized range with k groups and df error degrees of freedom:
// Int_0^inf f_df(s) W(q s) ds, where s = sqrt(chi2_df / df).
inline double studentized_range_cdf(double q, int k, double df, const StudentizedRangeQuadrature& quad = {}) {
    if (k < 2) throw Error("studentized range needs k >= 2");
    if (!(df >= 1.0)) throw Error("studentized range needs df >= 1");
    if (q <= 0.0) return 0.0;
    if (df >= kInfiniteDf) return normal_range_cdf(q, k, quad);

    const double log_c = 0.5 * df * std::log(df) - std::lgamma(0.5 * df) - (0.5 * df - 1.0) * std::log(2.0);
    const auto log_density = [&](double s) { return log_c + (df - 1.0) * std::log(s) - 0.5 * df * s * s; };
    const double mode = df > 1.0 ? std::sqrt((df - 1.0) / df) : 0.0;
    const double spread = 1.0 / std::sqrt(2.0 * df);
    const double peak = mode > 0.0 ? log_density(mode) : log_c;

    double hi = std::max(mode, spread);
    while (log_density(hi) > peak - quad.log_tail) hi += spread;
    double lo = mode;
    while (lo > 0.0 && log_density(lo) > peak - quad.log_tail) lo = std::max(0.0, lo - spread);

    const double v = quadrature::integrate(
        [&](double s) {
            if (s <= 0.0) return 0.0;
            return std::exp(log_density(s)) * normal_range_cdf(q * s, k, quad);
        },
        lo, hi, quad.outer_panels);
    return std::clamp(v, 0.0, 1.0);
}

// Critical value q with P(Q <= q) = 1 - alpha, by bracketing and Illinois regula falsi.
inline double studentized_range_quantile(double alpha, int k, double df, const StudentizedRangeQuadrature& quad = {}) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must lie in (0, 1)");
    if (k < 2) throw Error("studentized range needs k >= 2");
    if (!(df >= 1.0)) throw Error("studentized range needs df >= 1");
    const double target = 1.0 - alpha;
    const auto f = [&](double q) { return studentized_range_cdf(q, k, df, quad) - target; };

    double a = 0.0, fa = -target;
    double b = 2.0, fb = f(b);
    int expansions = 0;
    while (fb < 0.0) {
        a = b;
        fa = fb;
        b *= 2.0;
        fb = f(b);
        if (++expansions > 60) throw NumericError("studentized range quantile: could not bracket the root");
    }
    int side = 0;
    for (int iter = 0; iter < 200; ++iter) {
        const double c = (a * fb - b * fa) / (fb - fa);
        const double fc = f(c);
        if (std::abs(fc) < 1e-13 || std::abs(b - a) < 1e-10 * std::max(1.0, std::abs(c))) return c;
        if (fc * fb > 0.0) {
            b = c;
            fb = fc;
            if (side == -1) fa *= 0.5;
            side = -1;
        } else {
            a = c;
            fa = fc;
            if (side == 1) fb *= 0.5;
            side = 1;
        }
    }
    std::ostringstream os;
    os << "studentized range quantile did not converge (alpha=" << alpha << ", k=" << k << ", df=" << df
       << ", bracket=[" << a << ", " << b << "], residuals=[" << fa << ", " << fb << "])";
    throw NumericError(os.str());
}

struct PooledVariance {
    double mse = 0.0;
    double df = 0.0;
};

inline void check_groups(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw Error("need at least two groups");
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].size() < 2) throw Error("group " + std::to_string(g) + " has fewer than two observations");
        for (double x : groups[g])
            if (!std::isfinite(x)) throw Error("group " + std::to_string(g) + " holds a non-finite value");
    }
}

inline double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

// Within-group mean square of a one-way ANOVA: SS_within / (N - k).
inline PooledVariance pooled_mse(const std::vector<std::vector<double>>& groups) {
    check_groups(groups);
    double ss = 0.0;
    std::size_t n = 0;
    for (const auto& g : groups) {
        const double m = mean_of(g);
        for (double x : g) ss += (x - m) * (x - m);
        n += g.size();
    }
    PooledVariance out;
    out.df = static_cast<double>(n - groups.size());
    out.mse = ss / out.df;
    return out;
}

struct HsdPair {
    std::size_t i = 0;
    std::size_t j = 0;
    double mean_difference = 0.0;  // mean_i - mean_j
    double q = 0.0;
    double critical_q = 0.0;
    bool significant = false;
};

struct HsdResult {
    std::vector<std::string> labels;
    std::vector<double> means;
    std::vector<std::size_t> sizes;
    double mse = 0.0;
    double df = 0.0;
    double alpha = 0.01;
    double critical_q = 0.0;
    std::vector<HsdPair> pairs;  // i < j

    const HsdPair& pair(std::size_t a, std::size_t b) const {
        const auto lo = std::min(a, b), hi = std::max(a, b);
        for (const auto& p : pairs)
            if (p.i == lo && p.j == hi) return p;
        throw Error("no such pair");
    }

    // True when group g differs significantly from every other group.
    bool separated(std::size_t g) const {
        for (std::size_t o = 0; o < means.size(); ++o)
            if (o != g && !pair(g, o).significant) return false;
        return true;
    }
};

// Tukey-Kramer: q_ij = |m_i - m_j| / sqrt(mse / 2 * (1/n_i + 1/n_j)).
inline double tukey_q(double mean_difference, double mse, std::size_t n_i, std::size_t n_j) {
    const double se = std::sqrt(mse / 2.0 * (1.0 / static_cast<double>(n_i) + 1.0 / static_cast<double>(n_j)));
    const double diff = std::abs(mean_difference);
    if (diff == 0.0) return 0.0;
    if (se == 0.0) return std::numeric_limits<double>::infinity();
    return diff / se;
}

inline HsdResult tukey_hsd(const std::vector<std::vector<double>>& groups, double alpha = 0.01,
                           std::vector<std::string> labels = {}) {
    const auto pooled = pooled_mse(groups);
    HsdResult r;
    r.alpha = alpha;
    r.mse = pooled.mse;
    r.df = pooled.df;
    r.labels = std::move(labels);
    if (r.labels.empty())
        for (std::size_t g = 0; g < groups.size(); ++g) r.labels.push_back("g" + std::to_string(g));
    if (r.labels.size() != groups.size()) throw Error("one label per group required");
    for (const auto& g : groups) {
        r.means.push_back(mean_of(g));
        r.sizes.push_back(g.size());
    }
    r.critical_q = studentized_range_quantile(alpha, static_cast<int>(groups.size()), r.df);
    for (std::size_t i = 0; i < groups.size(); ++i) {
        for (std::size_t j = i + 1; j < groups.size(); ++j) {
            HsdPair p;
            p.i = i;
            p.j = j;
            p.mean_difference = r.means[i] - r.means[j];
            p.q = tukey_q(p.mean_difference, r.mse, r.sizes[i], r.sizes[j]);
            p.critical_q = r.critical_q;
            p.significant = p.q > r.critical_q;
            r.pairs.push_back(p);
        }
    }
    return r;
}

}  // namespace faqrag

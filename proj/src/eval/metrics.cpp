#include "fae/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "fae/common.hpp"

namespace fae::eval {

namespace {

struct ClassCounts {
    std::int64_t positives = 0;
    std::int64_t negatives = 0;
};

ClassCounts check_scored_labels(const std::vector<double>& scores,
                                const std::vector<std::uint8_t>& labels) {
    if (scores.empty()) throw ContractError("metrics: empty input");
    if (scores.size() != labels.size()) throw ContractError("metrics: scores/labels length mismatch");
    ClassCounts counts;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i])) throw ContractError("metrics: non-finite score");
        if (labels[i] > 1) throw ContractError("metrics: labels must be 0 or 1");
        if (labels[i] == 1)
            ++counts.positives;
        else
            ++counts.negatives;
    }
    return counts;
}

// (score, label) pairs sorted by score descending; label order within a tie
// group is irrelevant to every metric below.
std::vector<std::pair<double, std::uint8_t>> sorted_descending(
    const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
    std::vector<std::pair<double, std::uint8_t>> pairs(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) pairs[i] = {scores[i], labels[i]};
    std::sort(pairs.begin(), pairs.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    return pairs;
}

}  // namespace

double pixel_ap(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
    const ClassCounts counts = check_scored_labels(scores, labels);
    if (counts.positives == 0) throw ContractError("average precision: no positive labels");
    const auto pairs = sorted_descending(scores, labels);

    std::int64_t tp = 0;
    std::int64_t fp = 0;
    double ap = 0.0;
    double prev_recall = 0.0;
    std::size_t i = 0;
    while (i < pairs.size()) {
        std::size_t j = i;
        while (j < pairs.size() && pairs[j].first == pairs[i].first) {
            if (pairs[j].second == 1)
                ++tp;
            else
                ++fp;
            ++j;
        }
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        const double recall = static_cast<double>(tp) / static_cast<double>(counts.positives);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

double dice_at_fpr(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels,
                   double fpr) {
    const ClassCounts counts = check_scored_labels(scores, labels);
    if (counts.positives == 0 || counts.negatives == 0)
        throw ContractError("dice: both classes must be present");
    if (!(fpr >= 0.0 && fpr <= 1.0)) throw RangeError("dice: fpr must lie in [0, 1]");
    const auto pairs = sorted_descending(scores, labels);

    // Walking the descending order keeps running counts of items with
    // score >= current group's value; candidates are visited largest first, so
    // remember the *last* (smallest) candidate that still meets the budget.
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    bool found = false;
    std::int64_t best_tp = 0;
    std::int64_t best_fp = 0;
    std::size_t i = 0;
    while (i < pairs.size()) {
        std::size_t j = i;
        while (j < pairs.size() && pairs[j].first == pairs[i].first) {
            if (pairs[j].second == 1)
                ++tp;
            else
                ++fp;
            ++j;
        }
        const double rate = static_cast<double>(fp) / static_cast<double>(counts.negatives);
        if (rate <= fpr) {
            found = true;
            best_tp = tp;
            best_fp = fp;
        }
        i = j;
    }
    if (!found) {
        // +infinity threshold: nothing predicted positive.
        best_tp = 0;
        best_fp = 0;
    }
    const std::int64_t fn = counts.positives - best_tp;
    return static_cast<double>(2 * best_tp) / static_cast<double>(2 * best_tp + best_fp + fn);
}

double image_auroc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
    const ClassCounts counts = check_scored_labels(scores, labels);
    if (counts.positives == 0 || counts.negatives == 0)
        throw ContractError("auroc: both classes must be present");
    const auto pairs = sorted_descending(scores, labels);

    // Every positive contributes 1 per negative ranked strictly below it and
    // 1/2 per tied negative; all partial sums are exact multiples of 1/2.
    double sum = 0.0;
    std::int64_t negatives_seen = 0;
    std::size_t i = 0;
    while (i < pairs.size()) {
        std::size_t j = i;
        std::int64_t group_pos = 0;
        std::int64_t group_neg = 0;
        while (j < pairs.size() && pairs[j].first == pairs[i].first) {
            if (pairs[j].second == 1)
                ++group_pos;
            else
                ++group_neg;
            ++j;
        }
        const std::int64_t negatives_below = counts.negatives - negatives_seen - group_neg;
        sum += static_cast<double>(group_pos) * static_cast<double>(negatives_below) +
               0.5 * static_cast<double>(group_pos) * static_cast<double>(group_neg);
        negatives_seen += group_neg;
        i = j;
    }
    return sum /
           (static_cast<double>(counts.positives) * static_cast<double>(counts.negatives));
}

namespace {

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_variance(const std::vector<double>& v, double mean) {
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / static_cast<double>(v.size() - 1);
}

// Continued fraction for the regularized incomplete beta (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
    constexpr double kTiny = 1e-300;
    constexpr double kEps = 3e-16;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw ContractError("incomplete beta: a, b must be positive");
    if (std::isnan(x)) throw ContractError("incomplete beta: x is NaN");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    // Evaluate the continued fraction on the side where it converges fast.
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
    if (!(df > 0.0)) throw ContractError("t-test: degrees of freedom must be positive");
    if (std::isinf(t)) return 0.0;
    const double p = regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
    return std::clamp(p, 0.0, 1.0);
}

WelchResult welch_t_test(const std::vector<double>& sample_a,
                         const std::vector<double>& sample_b) {
    if (sample_a.size() < 2 || sample_b.size() < 2)
        throw ContractError("t-test: each sample needs at least 2 values");
    for (double x : sample_a)
        if (!std::isfinite(x)) throw ContractError("t-test: non-finite value");
    for (double x : sample_b)
        if (!std::isfinite(x)) throw ContractError("t-test: non-finite value");

    const double na = static_cast<double>(sample_a.size());
    const double nb = static_cast<double>(sample_b.size());
    const double mean_a = mean_of(sample_a);
    const double mean_b = mean_of(sample_b);
    const double var_a = sample_variance(sample_a, mean_a);
    const double var_b = sample_variance(sample_b, mean_b);

    const double va_n = var_a / na;
    const double vb_n = var_b / nb;
    const double se2 = va_n + vb_n;

    WelchResult result;
    if (se2 == 0.0) {
        // Both samples are constant. Equal means: no evidence of difference.
        result.df = na + nb - 2.0;
        if (mean_a == mean_b) {
            result.t = 0.0;
            result.p = 1.0;
        } else {
            result.t = mean_a > mean_b ? std::numeric_limits<double>::infinity()
                                       : -std::numeric_limits<double>::infinity();
            result.p = 0.0;
        }
        return result;
    }
    result.t = (mean_a - mean_b) / std::sqrt(se2);
    // Welch–Satterthwaite; a zero-variance side drops out and the formula
    // degrades to (n - 1) of the other sample on its own.
    result.df = se2 * se2 /
                (va_n * va_n / (na - 1.0) + vb_n * vb_n / (nb - 1.0));
    result.p = student_t_two_sided_p(result.t, result.df);
    return result;
}

}  // namespace fae::eval

#pragma once

#include <cstdint>
#include <vector>

namespace fae::eval {

// Area under the precision-recall curve via a step-wise sum: walk the distinct
// score values in descending order (tied scores form one group), and add
// (recall - previous_recall) * precision after each group.
//
// Preconditions: scores/labels same nonzero length, labels binary, scores
// finite, at least one positive label. Violations throw ContractError.
double pixel_ap(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

// Sørensen–Dice coefficient at a false-positive-rate budget. The threshold is
// the smallest candidate value (distinct observed scores, then +infinity) whose
// false positive rate over the negatives is <= fpr, with predictions
// score >= threshold. Requires at least one positive and one negative label.
double dice_at_fpr(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels,
                   double fpr = 0.05);

// Area under the ROC curve as the rank statistic: the probability that a
// uniformly random positive outranks a uniformly random negative, ties
// counted 1/2. Requires both classes present.
double image_auroc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

struct WelchResult {
    double t = 0.0;
    double p = 1.0;
    double df = 0.0;
};

// Welch's unequal-variance t-test with Welch–Satterthwaite degrees of freedom
// and a two-sided p-value. Each sample must contain at least two values.
// When both samples have zero variance: equal means give t = 0, p = 1; unequal
// means give t = +/-infinity, p = 0.
WelchResult welch_t_test(const std::vector<double>& sample_a, const std::vector<double>& sample_b);

// Regularized incomplete beta function I_x(a, b), evaluated with a Lentz
// continued fraction; absolute accuracy well under 1e-8 for the arguments used
// by the t-distribution CDF. Exposed for direct numerical testing.
double regularized_incomplete_beta(double a, double b, double x);

// Two-sided p-value for a t statistic with df degrees of freedom.
double student_t_two_sided_p(double t, double df);

}  // namespace fae::eval

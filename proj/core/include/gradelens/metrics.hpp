#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradelens/store.hpp"

namespace gradelens {

struct LabeledPair {
    int gold = 0;
    int predicted = 0;
};

// Marks in [0, num_classes - 1].
struct LabeledPairSet {
    std::vector<LabeledPair> pairs;
    int num_classes = 0;
};

// O[i][j] = number of pairs with gold i and prediction j.
using ConfusionMatrix = std::vector<std::vector<std::int64_t>>;

// Throws Error(out_of_range) for a value outside the class range and
// Error(bad_request) for num_classes < 1.
ConfusionMatrix confusion_matrix(const LabeledPairSet& set);

// All three throw Error(empty_pair_set) on an empty set.
double accuracy(const LabeledPairSet& set);

// Averaged over the classes that occur in gold or predicted; classes present
// in neither are left out. 0/0 precision or recall counts as 0.
double macro_f1(const LabeledPairSet& set);

// Quadratic weighted kappa. When the expected weighted disagreement is zero
// the result is 1 if the observed one is zero too, else 0. Throws
// Error(single_class_range) when num_classes < 2.
double qwk(const LabeledPairSet& set);

struct MetricsReport {
    std::string question_id;
    std::string provider_id;
    ConfusionMatrix confusion;
    double accuracy = 0;
    double macro_f1 = 0;
    // absent for a question whose only valid mark is 0
    std::optional<double> qwk;
    std::size_t n_pairs = 0;
    // latest records that are not completed or whose answer has no gold mark
    std::size_t n_excluded = 0;
};

// Uses, per answer, the latest batch record of the provider and the
// effective gold mark. Chat regenerations and human records are ignored.
// Throws Error(question_not_found | no_evaluable_records).
MetricsReport build_report(const Store& store, std::string_view question_id,
                           std::string_view provider_id);

// One report per provider with at least one evaluable record, ordered by
// provider id. Throws Error(question_not_found | no_evaluable_records).
std::vector<MetricsReport> build_reports(const Store& store, std::string_view question_id);

nlohmann::json report_to_json(const MetricsReport& report);
// Header plus one row per report.
std::string reports_to_csv(std::span<const MetricsReport> reports);

} // namespace gradelens

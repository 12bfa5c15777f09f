#include "gradelens/metrics.hpp"

#include <cstdio>
#include <map>
#include <set>

#include "gradelens/annotations.hpp"
#include "gradelens/error.hpp"

namespace gradelens {

namespace {

void require_pairs(const LabeledPairSet& set) {
    if (set.pairs.empty()) fail(ErrorCode::empty_pair_set, "no (gold, predicted) pairs");
}

std::string format_number(double value) {
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.10g", value);
    return buffer;
}

} // namespace

ConfusionMatrix confusion_matrix(const LabeledPairSet& set) {
    if (set.num_classes < 1) fail(ErrorCode::bad_request, "num_classes must be at least 1");
    const auto n = static_cast<std::size_t>(set.num_classes);
    ConfusionMatrix o(n, std::vector<std::int64_t>(n, 0));
    for (const auto& p : set.pairs) {
        if (p.gold < 0 || p.gold >= set.num_classes || p.predicted < 0 ||
            p.predicted >= set.num_classes) {
            fail(ErrorCode::out_of_range, "pair (" + std::to_string(p.gold) + ", " +
                                              std::to_string(p.predicted) + ") outside [0, " +
                                              std::to_string(set.num_classes - 1) + "]");
        }
        ++o[static_cast<std::size_t>(p.gold)][static_cast<std::size_t>(p.predicted)];
    }
    return o;
}

double accuracy(const LabeledPairSet& set) {
    require_pairs(set);
    const auto o = confusion_matrix(set);
    std::int64_t agree = 0;
    for (std::size_t i = 0; i < o.size(); ++i) agree += o[i][i];
    return static_cast<double>(agree) / static_cast<double>(set.pairs.size());
}

double macro_f1(const LabeledPairSet& set) {
    require_pairs(set);
    const auto o = confusion_matrix(set);
    const auto n = o.size();
    // F1 = 2tp / (row + col), the harmonic mean of precision and recall.
    // Summed in extended precision so the single rounding happens at the end.
    long double total = 0;
    int classes = 0;
    for (std::size_t c = 0; c < n; ++c) {
        std::int64_t row = 0;
        std::int64_t col = 0;
        for (std::size_t k = 0; k < n; ++k) {
            row += o[c][k];
            col += o[k][c];
        }
        if (row == 0 && col == 0) continue;  // class absent from both sides
        ++classes;
        total += 2.0L * static_cast<long double>(o[c][c]) / static_cast<long double>(row + col);
    }
    return static_cast<double>(total / classes);
}

double qwk(const LabeledPairSet& set) {
    require_pairs(set);
    if (set.num_classes < 2) {
        fail(ErrorCode::single_class_range, "quadratic weighted kappa needs at least two classes");
    }
    const auto o = confusion_matrix(set);
    const auto n = o.size();
    std::vector<std::int64_t> gold(n, 0);
    std::vector<std::int64_t> predicted(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            gold[i] += o[i][j];
            predicted[j] += o[i][j];
        }
    }
    // The (N-1)^2 weight scale cancels, so with unscaled weights
    // kappa = 1 - total * sum w O / sum w G P, all integers until the
    // final division.
    const auto total = static_cast<std::int64_t>(set.pairs.size());
    std::int64_t observed = 0;
    std::int64_t expected = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const auto d = static_cast<std::int64_t>(i) - static_cast<std::int64_t>(j);
            observed += d * d * o[i][j];
            expected += d * d * gold[i] * predicted[j];
        }
    }
    if (expected == 0) return observed == 0 ? 1.0 : 0.0;
    return 1.0 - static_cast<double>(static_cast<long double>(observed * total) /
                                     static_cast<long double>(expected));
}

MetricsReport build_report(const Store& store, std::string_view question_id,
                           std::string_view provider_id) {
    const auto question = store.find_question(question_id);
    if (!question) fail(ErrorCode::question_not_found, "no question '" + std::string(question_id) + "'");

    // ids sort by creation, so the last record seen per answer is the latest
    std::map<std::string, AssessmentRecord> latest;
    for (auto& r : store.records_for_question(question_id)) {
        if (r.origin == RecordOrigin::batch && r.provider_id == provider_id) {
            latest.insert_or_assign(r.answer_id, std::move(r));
        }
    }
    const auto events = store.events_for_question(question_id);

    MetricsReport report;
    report.question_id = question->id;
    report.provider_id = std::string(provider_id);
    LabeledPairSet set;
    set.num_classes = question->max_mark + 1;
    for (const auto& answer : store.answers_for_question(question_id)) {
        const auto it = latest.find(answer.id);
        if (it == latest.end()) continue;
        const auto gold = effective_gold(answer, events);
        if (it->second.status != RecordStatus::completed || !gold) {
            ++report.n_excluded;
            continue;
        }
        set.pairs.push_back({*gold, *it->second.mark});
    }
    if (set.pairs.empty()) {
        fail(ErrorCode::no_evaluable_records,
             "no completed '" + report.provider_id + "' records with a gold mark for question '" +
                 question->id + "'");
    }
    report.confusion = confusion_matrix(set);
    report.n_pairs = set.pairs.size();
    report.accuracy = accuracy(set);
    report.macro_f1 = macro_f1(set);
    if (set.num_classes >= 2) report.qwk = qwk(set);
    return report;
}

std::vector<MetricsReport> build_reports(const Store& store, std::string_view question_id) {
    if (!store.find_question(question_id)) {
        fail(ErrorCode::question_not_found, "no question '" + std::string(question_id) + "'");
    }
    std::set<std::string> providers;
    for (const auto& r : store.records_for_question(question_id)) {
        if (r.origin == RecordOrigin::batch) providers.insert(r.provider_id);
    }
    std::vector<MetricsReport> reports;
    for (const auto& provider : providers) {
        try {
            reports.push_back(build_report(store, question_id, provider));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::no_evaluable_records) throw;
        }
    }
    if (reports.empty()) {
        fail(ErrorCode::no_evaluable_records,
             "no completed records with a gold mark for question '" + std::string(question_id) + "'");
    }
    return reports;
}

nlohmann::json report_to_json(const MetricsReport& report) {
    return {{"question_id", report.question_id},
            {"provider_id", report.provider_id},
            {"n_pairs", report.n_pairs},
            {"n_excluded", report.n_excluded},
            {"accuracy", report.accuracy},
            {"macro_f1", report.macro_f1},
            {"qwk", report.qwk ? nlohmann::json(*report.qwk) : nlohmann::json(nullptr)},
            {"confusion", report.confusion}};
}

std::string reports_to_csv(std::span<const MetricsReport> reports) {
    std::string out = "question_id,provider_id,n_pairs,n_excluded,accuracy,macro_f1,qwk\n";
    for (const auto& r : reports) {
        out += r.question_id + ',' + r.provider_id + ',' + std::to_string(r.n_pairs) + ',' +
               std::to_string(r.n_excluded) + ',' + format_number(r.accuracy) + ',' +
               format_number(r.macro_f1) + ',' + (r.qwk ? format_number(*r.qwk) : "") + '\n';
    }
    return out;
}

} // namespace gradelens

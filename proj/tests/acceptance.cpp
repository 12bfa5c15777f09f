// Acceptance run: one PASS/FAIL line per criterion. Exit status 1 when any
// criterion fails. Pass --cli <path to gradelens> for the multi-process check.

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "faulty_store.hpp"
#include "fixtures.hpp"
#include "gradelens/annotations.hpp"
#include "gradelens/auth.hpp"
#include "gradelens/engine.hpp"
#include "gradelens/highlight.hpp"
#include "gradelens/json_io.hpp"
#include "gradelens/metrics.hpp"
#include "gradelens/mock_provider.hpp"
#include "gradelens/output_parser.hpp"
#include "gradelens/server.hpp"
#include "gradelens/text.hpp"
#include "parse_corpus.hpp"
#include "service_harness.hpp"

using namespace gradelens;
using nlohmann::json;

namespace {

// Collects failed expectations of one criterion.
class Check {
public:
    void expect(bool ok, const std::string& what) {
        if (!ok && failures_.size() < 5) failures_.push_back(what);
        if (!ok) ++count_;
    }
    bool ok() const { return count_ == 0; }
    std::string summary() const {
        std::string out = std::to_string(count_) + " failed:";
        for (const auto& f : failures_) out += " [" + f + "]";
        return out;
    }

private:
    std::vector<std::string> failures_;
    std::size_t count_ = 0;
};

int g_failed = 0;

void criterion(const std::string& name, double limit_seconds, const std::function<std::string(Check&)>& body) {
    Check check;
    std::string detail;
    const auto start = std::chrono::steady_clock::now();
    try {
        detail = body(check);
    } catch (const std::exception& e) {
        check.expect(false, std::string("exception: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (limit_seconds > 0) check.expect(seconds < limit_seconds, "runtime over " + std::to_string(limit_seconds) + " s");
    std::ostringstream line;
    line.setf(std::ios::fixed);
    line.precision(3);
    line << (check.ok() ? "PASS " : "FAIL ") << name << " (" << seconds << " s";
    if (limit_seconds > 0) line << ", limit " << limit_seconds << " s";
    line << ")";
    if (!detail.empty()) line << ": " << detail;
    if (!check.ok()) line << " " << check.summary();
    std::cout << line.str() << std::endl;
    if (!check.ok()) ++g_failed;
}

LabeledPairSet pair_set(const std::vector<int>& gold, const std::vector<int>& pred, int classes) {
    LabeledPairSet set;
    set.num_classes = classes;
    for (std::size_t i = 0; i < gold.size(); ++i) set.pairs.push_back({gold[i], pred[i]});
    return set;
}

double oracle_accuracy(const std::vector<int>& gold, const std::vector<int>& pred) {
    int hits = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) hits += gold[i] == pred[i];
    return static_cast<double>(hits) / static_cast<double>(gold.size());
}

double oracle_macro_f1(const std::vector<int>& gold, const std::vector<int>& pred) {
    std::set<int> classes(gold.begin(), gold.end());
    classes.insert(pred.begin(), pred.end());
    double sum = 0;
    for (int c : classes) {
        double tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < gold.size(); ++i) {
            tp += gold[i] == c && pred[i] == c;
            fp += gold[i] != c && pred[i] == c;
            fn += gold[i] == c && pred[i] != c;
        }
        const double p = tp + fp > 0 ? tp / (tp + fp) : 0;
        const double r = tp + fn > 0 ? tp / (tp + fn) : 0;
        sum += p + r > 0 ? 2 * p * r / (p + r) : 0;
    }
    return sum / static_cast<double>(classes.size());
}

// ---------------------------------------------------------------------------

std::string metrics_oracle(Check& check) {
    std::mt19937_64 rng(20240518);
    double worst = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int classes = std::uniform_int_distribution<int>(2, 6)(rng);
        const int n = std::uniform_int_distribution<int>(1, 50)(rng);
        std::uniform_int_distribution<int> mark(0, classes - 1);
        std::vector<int> gold(n), pred(n);
        for (int i = 0; i < n; ++i) {
            gold[i] = mark(rng);
            pred[i] = trial % 2 ? mark(rng) : std::clamp(gold[i] + mark(rng) % 3 - 1, 0, classes - 1);
        }
        const auto set = pair_set(gold, pred, classes);
        const double diff = std::abs(qwk(set) - fixtures::brute_force_qwk(gold, pred, classes));
        worst = std::max(worst, diff);
        check.expect(diff <= 1e-9, "qwk trial " + std::to_string(trial));
        check.expect(std::abs(accuracy(set) - oracle_accuracy(gold, pred)) <= 1e-12,
                     "accuracy trial " + std::to_string(trial));
        check.expect(std::abs(macro_f1(set) - oracle_macro_f1(gold, pred)) <= 1e-12,
                     "macro-F1 trial " + std::to_string(trial));
    }
    // exact fixtures
    check.expect(macro_f1(pair_set({0, 0, 1, 2}, {0, 1, 1, 2}, 3)) == 7.0 / 9.0, "macro-F1 7/9");
    check.expect(qwk(pair_set({0, 1, 2}, {2, 1, 0}, 3)) == -1.0, "QWK -1");
    check.expect(accuracy(pair_set({0, 0, 1, 2}, {0, 1, 1, 2}, 3)) == 0.75, "accuracy 3/4");
    check.expect(accuracy(pair_set({0, 1, 2}, {2, 1, 0}, 3)) == 1.0 / 3.0, "accuracy 1/3");
    check.expect(macro_f1(pair_set({0, 1, 2}, {0, 1, 2}, 3)) == 1.0, "macro-F1 1");
    check.expect(qwk(pair_set({0, 1, 2}, {0, 1, 2}, 3)) == 1.0, "QWK 1");
    std::ostringstream out;
    out << "200 random sets, max |qwk - brute force| = " << worst;
    return out.str();
}

std::string end_to_end_batch(Check& check) {
    auto store = make_memory_store();
    ModelGateway gateway(std::make_shared<fixtures::FakeTransport>());
    gateway.register_provider(fixtures::mock_provider("mock-a"));
    gateway.register_provider(fixtures::mock_provider("mock-b"));
    PromptCompiler compiler;
    AssessmentEngine engine(*store, gateway, compiler, EngineOptions{8});
    const auto q = fixtures::sample_question();
    const auto answers = fixtures::sample_answers(q, 50);
    store->insert_question(q);
    store->insert_answers(answers);

    const auto job = engine.create_batch({q.id, {}, {"mock-a", "mock-b"}});
    const auto status = engine.run_batch(job.id);
    check.expect(status.terminal(), "job terminal");
    check.expect(status.records.size() == 100, "100 records");
    check.expect(status.counts == std::map<RecordStatus, std::size_t>{{RecordStatus::completed, 100}},
                 "all completed");
    std::map<std::string, std::string> text_of;
    for (const auto& a : answers) text_of[a.id] = a.text;
    for (const auto& r : status.records) {
        const auto& text = text_of.at(r.answer_id);
        check.expect(r.mark == fixtures::oracle_mock_mark(q, text), "oracle mark for " + r.id);
        const auto direct = parse_model_output(mock_assess(q, text), q.max_mark);
        check.expect(std::holds_alternative<ParsedAssessment>(direct) &&
                         r.mark == std::get<ParsedAssessment>(direct).mark &&
                         r.rationale == std::get<ParsedAssessment>(direct).rationale,
                     "mock_assess applied directly for " + r.id);
    }
    const auto again = engine.run_batch(job.id);
    check.expect(again.records == status.records && again.job == status.job, "rerun is a no-op");
    check.expect(store->records_for_question(q.id).size() == 100, "no records added by the rerun");
    return "50 answers x 2 mock providers, all completed, rerun unchanged";
}

std::string parse_robustness(Check& check) {
    const auto corpus = fixtures::parse_corpus();
    check.expect(corpus.size() == 30, "corpus has 30 cases");
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& c = corpus[i];
        const auto outcome = parse_model_output(c.raw, c.max_mark);
        const auto label = "case " + std::to_string(i);
        if (c.failure) {
            check.expect(std::holds_alternative<ParseFailure>(outcome) &&
                             std::get<ParseFailure>(outcome) == *c.failure,
                         label);
        } else {
            check.expect(std::holds_alternative<ParsedAssessment>(outcome) &&
                             std::get<ParsedAssessment>(outcome) == ParsedAssessment{*c.mark, *c.rationale, c.stage},
                         label);
        }
    }
    std::mt19937_64 rng(777);
    static const std::vector<std::string> pieces = {"a", "Q", " ", "\"", "\\", "\n", "\t", "{", "}",
                                                    "Mark: 2", "é", "→", "\x02", "done.", "9"};
    std::uniform_int_distribution<std::size_t> piece(0, pieces.size() - 1);
    std::uniform_int_distribution<int> length(0, 50);
    std::uniform_int_distribution<int> mark(0, 10);
    for (int i = 0; i < 1000; ++i) {
        const int m = mark(rng);
        std::string rationale;
        for (int k = length(rng); k > 0; --k) rationale += pieces[piece(rng)];
        const auto outcome = parse_model_output(format_assessment_output(m, rationale), 10);
        check.expect(std::holds_alternative<ParsedAssessment>(outcome) &&
                         std::get<ParsedAssessment>(outcome) == ParsedAssessment{m, rationale, 1},
                     "round trip " + std::to_string(i));
    }
    std::uniform_int_distribution<int> byte(0, 255);
    for (int i = 0; i < 1000; ++i) {
        std::string raw;
        for (int k = length(rng); k > 0; --k) raw += static_cast<char>(byte(rng));
        const auto outcome = parse_model_output(raw, 3);
        if (const auto* p = std::get_if<ParsedAssessment>(&outcome)) {
            check.expect(p->mark >= 0 && p->mark <= 3, "random bytes stay in range");
        }
    }
    return "30 corpus cases, 1000 round trips, 1000 random byte strings";
}

std::string highlight_resolution(Check& check) {
    auto spans = [](std::string_view source, std::vector<TaggedSegment> segments) {
        return resolve_spans(source, segments).spans;
    };
    check.expect(spans("The cat sat", {{"cat", "positive"}}) == std::vector<HighlightSpan>{{4, 7, "positive"}},
                 "single span");
    check.expect(spans("The x The y", {{"The", "a"}, {"The", "b"}}) ==
                     std::vector<HighlightSpan>{{0, 3, "a"}, {6, 9, "b"}},
                 "duplicate excerpt greedy");
    const auto missing = resolve_spans("The cat sat", std::vector<TaggedSegment>{{"dog", "negative"}});
    check.expect(missing.spans.empty() && missing.unresolved.size() == 1, "unresolved excerpt");
    check.expect(spans("Rinse  the\n\tSAMPLE well", {{"the sample", "e"}}) == std::vector<HighlightSpan>{{7, 18, "e"}},
                 "whitespace and case");
    check.expect(spans("naïve café test", {{"café", "a"}}) == std::vector<HighlightSpan>{{6, 10, "a"}},
                 "code point offsets");

    std::mt19937_64 rng(4242);
    std::size_t total_segments = 0;
    for (int round = 0; round < 100; ++round) {
        const auto text = fixtures::random_text(rng, 6 + round % 25);
        const auto points = decode_utf8(text);
        std::vector<TaggedSegment> segments;
        std::size_t pos = 0;
        for (int i = 0; i < 1 + round % 5 && pos < points.size(); ++i) {
            std::uniform_int_distribution<std::size_t> gap(0, std::min<std::size_t>(5, points.size() - pos - 1));
            const auto start = pos + gap(rng);
            std::uniform_int_distribution<std::size_t> len(1, std::min<std::size_t>(12, points.size() - start));
            const auto end = start + len(rng);
            pos = end;
            const auto piece = encode_utf8(points.substr(start, end - start));
            if (!is_blank(piece)) segments.push_back({piece, "s" + std::to_string(i)});
        }
        total_segments += segments.size();
        const auto result = resolve_spans(text, segments);
        const auto label = "round " + std::to_string(round);
        check.expect(result.unresolved.empty() && result.spans.size() == segments.size(), label + " resolves");
        for (std::size_t i = 0; i < result.spans.size() && i < segments.size(); ++i) {
            const auto& s = result.spans[i];
            check.expect(normalize_excerpt(slice_code_points(text, s.start, s.end)) == normalize_excerpt(segments[i].text),
                         label + " offsets");
            if (i > 0) check.expect(s.start > result.spans[i - 1].start && s.start >= result.spans[i - 1].end,
                                    label + " increasing");
        }
    }
    return "5 hand fixtures, 100 random texts with " + std::to_string(total_segments) + " segments";
}

std::vector<json> jsonl_lines(const std::string& text, Check& check) {
    std::vector<json> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        const auto j = json::parse(line, nullptr, false);
        check.expect(!j.is_discarded(), "export line re-parses");
        out.push_back(j);
    }
    return out;
}

std::string annotation_integrity(Check& check) {
    fixtures::TempPath db("gradelens-acceptance-export.db");
    const auto q = fixtures::sample_question();
    const auto answers = fixtures::sample_answers(q, 5);
    const std::vector<std::string> providers{"mock-a", "mock-b", "mock-c"};
    std::string pref_first;
    std::string sft_first;
    std::set<std::tuple<std::string, std::string, std::string, std::string>> expected;
    {
        auto store = make_sqlite_store(db.string());
        ModelGateway gateway(std::make_shared<fixtures::FakeTransport>());
        for (const auto& p : providers) gateway.register_provider(fixtures::mock_provider(p));
        PromptCompiler compiler;
        AssessmentEngine engine(*store, gateway, compiler);
        AnnotationService service(*store, compiler);
        store->insert_question(q);
        store->insert_answers(answers);
        engine.run_batch(engine.create_batch({q.id, {}, providers}).id);

        std::map<std::pair<std::string, std::string>, std::string> record_of;
        for (const auto& r : store->records_for_question(q.id)) record_of[{r.answer_id, r.provider_id}] = r.id;

        std::mt19937_64 rng(99);
        const std::vector<std::string> annotators{"u1", "u2"};
        std::map<std::tuple<std::string, std::string, std::string>, bool> latest;
        for (int i = 0; i < 150; ++i) {
            const auto& answer = answers[rng() % answers.size()].id;
            const auto& who = annotators[rng() % annotators.size()];
            const auto& provider = providers[rng() % providers.size()];
            const bool preferred = rng() % 2 == 0;
            service.set_preference(record_of.at({answer, provider}),
                                   preferred ? PreferenceFlag::preferred : PreferenceFlag::not_preferred, who);
            latest[{answer, who, provider}] = preferred;
        }
        for (const auto& [k1, p1] : latest) {
            for (const auto& [k2, p2] : latest) {
                if (std::get<0>(k1) == std::get<0>(k2) && std::get<1>(k1) == std::get<1>(k2) && p1 && !p2) {
                    expected.insert({std::get<0>(k1), std::get<1>(k1), std::get<2>(k1), std::get<2>(k2)});
                }
            }
        }
        service.submit_rationale(answers[2].id, 2, "Two of the three details.", "u1");
        pref_first = service.export_preference_pairs(q.id);
        sft_first = service.export_sft(q.id, true);
    }

    std::set<std::tuple<std::string, std::string, std::string, std::string>> actual;
    const auto pairs = jsonl_lines(pref_first, check);
    for (const auto& line : pairs) {
        actual.insert({line["answer_id"].get<std::string>(), line["annotator"].get<std::string>(),
                       line["chosen"]["provider"].get<std::string>(), line["rejected"]["provider"].get<std::string>()});
    }
    check.expect(actual == expected, "pairs equal the per-(answer, annotator) cross product");
    check.expect(pairs.size() == expected.size(), "no duplicate pairs");
    const auto sft = jsonl_lines(sft_first, check);
    check.expect(!sft.empty() && sft.front()["source"] == "human", "authored rationale exported");

    // a second run over the same event log, through a fresh handle
    auto store = make_sqlite_store(db.string());
    PromptCompiler compiler;
    AnnotationService service(*store, compiler);
    check.expect(service.export_preference_pairs(q.id) == pref_first, "pref export byte-identical");
    check.expect(service.export_sft(q.id, true) == sft_first, "sft export byte-identical");
    return std::to_string(pairs.size()) + " pairs and " + std::to_string(sft.size()) +
           " SFT lines from 150 flags, identical on re-export";
}

std::string gold_propagation(Check& check) {
    auto store = make_memory_store();
    ModelGateway gateway(std::make_shared<fixtures::FakeTransport>());
    gateway.register_provider(fixtures::mock_provider("mock"));
    PromptCompiler compiler;
    AssessmentEngine engine(*store, gateway, compiler);
    AnnotationService annotations(*store, compiler);
    const auto q = fixtures::small_question();
    store->insert_question(q);
    const std::vector<StudentAnswer> answers{
        fixtures::answer("m0", q.id, "I do not know.", 0),
        fixtures::answer("m1", q.id, "Sunlight powers the plant.", 1),
        fixtures::answer("m2", q.id, "Sunlight powers photosynthesis which produces glucose.", 1),
        fixtures::answer("m3", q.id, "It makes glucose sugar.", 2)};
    store->insert_answers(answers);
    engine.run_batch(engine.create_batch({q.id, {}, {"mock"}}).id);

    std::vector<int> gold, pred;
    for (const auto& a : answers) {
        gold.push_back(*a.gold_mark);
        pred.push_back(fixtures::oracle_mock_mark(q, a.text));
    }
    auto compare = [&](const MetricsReport& report, const std::string& when) {
        ConfusionMatrix expected(3, std::vector<std::int64_t>(3, 0));
        for (std::size_t i = 0; i < gold.size(); ++i) ++expected[gold[i]][pred[i]];
        check.expect(report.n_pairs == 4, when + " n_pairs");
        check.expect(report.confusion == expected, when + " confusion matrix");
        check.expect(report.accuracy == oracle_accuracy(gold, pred), when + " accuracy");
        check.expect(std::abs(report.macro_f1 - oracle_macro_f1(gold, pred)) <= 1e-12, when + " macro-F1");
        check.expect(report.qwk && std::abs(*report.qwk - fixtures::brute_force_qwk(gold, pred, 3)) <= 1e-9,
                     when + " qwk");
    };
    const auto before = build_report(*store, q.id, "mock");
    compare(before, "before");
    annotations.correct_gold_label("m2", 2, "user-1");
    gold[2] = 2;
    const auto after = build_report(*store, q.id, "mock");
    compare(after, "after");
    check.expect(before.accuracy != after.accuracy, "the correction is visible");
    std::ostringstream out;
    out << "accuracy " << before.accuracy << " -> " << after.accuracy << ", qwk " << *before.qwk << " -> "
        << *after.qwk;
    return out.str();
}

// --- multi-process check ----------------------------------------------------

struct ServerProcess {
    pid_t pid = -1;
    int port = 0;
    std::string log_path;

    ServerProcess(const std::string& cli, const std::string& config, const std::string& db, const std::string& log)
        : log_path(log) {
        pid = fork();
        if (pid == 0) {
            const int fd = open(log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
            dup2(fd, STDOUT_FILENO);
            dup2(fd, STDERR_FILENO);
            const std::string url = "sqlite:" + db;
            execl(cli.c_str(), cli.c_str(), "serve", "--config", config.c_str(), "--database-url", url.c_str(),
                  "--port", "0", "--no-recover", static_cast<char*>(nullptr));
            _exit(127);
        }
        const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(20);
        while (std::chrono::steady_clock::now() < deadline) {
            std::ifstream in(log_path);
            for (std::string line; std::getline(in, line);) {
                const auto at = line.find("listening on ");
                if (at == std::string::npos) continue;
                port = std::stoi(line.substr(line.rfind(':') + 1));
                return;
            }
            int status = 0;
            if (waitpid(pid, &status, WNOHANG) == pid) {
                pid = -1;
                break;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
        throw std::runtime_error("server did not start; see " + log_path);
    }

    ~ServerProcess() { stop(); }

    void stop() {
        if (pid <= 0) return;
        kill(pid, SIGTERM);
        int status = 0;
        waitpid(pid, &status, 0);
        pid = -1;
    }
};

struct Step {
    std::string method;
    std::string path;
    std::string body;
    std::string content_type = "application/json";
};

std::vector<Step> script() {
    const std::string csv =
        "answer_id,answer_text,gold_mark\n"
        "m0,I do not know.,0\n"
        "m1,Sunlight powers the plant.,1\n"
        "m2,\"Sunlight powers photosynthesis, which produces glucose.\",1\n"
        "m3,It makes glucose sugar.,2\n";
    std::vector<Step> steps{
        {"POST", "/api/questions", json(fixtures::small_question()).dump()},
        {"POST", "/api/questions/q-small/answers", csv, "text/csv"},
        {"GET", "/api/questions/q-small", ""},
        {"GET", "/api/questions/q-small/answers", ""},
        {"POST", "/api/questions/q-small/batches", R"({"provider_ids": ["mock", "mock-b"]})"},
        {"GET", "/api/batches/job-00000001", ""},
        {"POST", "/api/batches/job-00000001/run?wait=1", ""},
        {"GET", "/api/batches/job-00000001", ""},
        {"POST", "/api/batches/job-00000001/run?wait=1", ""},
        {"GET", "/api/questions/q-small/metrics", ""},
        {"POST", "/api/answers/m2/gold-correction", R"({"mark": 2})"},
        {"GET", "/api/answers/m2", ""},
        {"GET", "/api/questions/q-small/metrics?format=csv", ""},
    };
    for (int i = 1; i <= 8; ++i) {
        const auto flag = i % 3 == 0 ? "not_preferred" : "preferred";
        steps.push_back({"POST", "/api/records/" + format_id("rec", i) + "/preference",
                         std::string(R"({"flag": ")") + flag + "\"}"});
    }
    const std::vector<Step> rest{
        {"POST", "/api/records/rec-00000002/preference", R"({"flag": "not_preferred"})"},
        {"GET", "/api/records/rec-00000002/preference", ""},
        {"GET", "/api/questions/q-small/export?kind=pref", ""},
        {"POST", "/api/answers/m0/rationale", R"({"mark": 0, "rationale": "Nothing relevant."})"},
        {"GET", "/api/questions/q-small/export?kind=sft&include_preferred=true", ""},
        {"POST", "/api/records/rec-00000003/highlights", R"({"mode": "key_elements"})"},
        {"GET", "/api/records/rec-00000003/highlights?mode=key_elements", ""},
        {"POST", "/api/chat/sessions",
         R"({"provider_id": "mock", "context": {"question_id": "q-small", "record_ids": ["rec-00000001"]}})"},
        {"POST", "/api/chat/sessions/chat-00000001/messages", R"({"text": "Why this mark?"})"},
        {"POST", "/api/chat/sessions/chat-00000001/messages", R"({"text": "Please look again."})"},
        {"POST", "/api/chat/sessions/chat-00000001/regenerate", R"({"answer_id": "m1"})"},
        {"GET", "/api/chat/sessions/chat-00000001", ""},
        {"GET", "/api/answers/m1/records", ""},
        {"GET", "/api/questions/nope", ""},
        {"POST", "/api/questions/q-small/batches", R"({"provider_ids": ["ghost"]})"},
        {"POST", "/api/answers/m0/gold-correction", R"({"mark": 9})"},
        {"GET", "/api/batches/job-00000404", ""},
        {"POST", "/api/questions", json(fixtures::small_question()).dump()},
        {"GET", "/api/nowhere", ""},
        {"GET", "/api/questions/q-small/metrics", ""},
    };
    steps.insert(steps.end(), rest.begin(), rest.end());
    return steps;
}

// Replaces wall-clock values so runs at different times compare equal.
void normalize(json& j) {
    if (j.is_object()) {
        for (auto& [key, value] : j.items()) {
            if ((key.ends_with("_at") || key == "timestamp") && value.is_number()) {
                value = "<time>";
            } else {
                normalize(value);
            }
        }
    } else if (j.is_array()) {
        for (auto& item : j) normalize(item);
    }
}

std::string normalized_body(const std::string& body) {
    auto j = json::parse(body, nullptr, false);
    if (!j.is_discarded()) {
        normalize(j);
        return j.dump();
    }
    // JSON Lines or CSV
    std::string out;
    std::istringstream in(body);
    for (std::string line; std::getline(in, line);) {
        auto lj = json::parse(line, nullptr, false);
        if (!lj.is_discarded()) {
            normalize(lj);
            line = lj.dump();
        }
        out += line + "\n";
    }
    return out;
}

std::string send(int port, const std::string& token, const Step& step) {
    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(30, 0);
    const httplib::Headers headers{{"Authorization", "Bearer " + token}};
    httplib::Result result = step.method == "GET"
                                 ? client.Get(step.path.c_str(), headers)
                                 : client.Post(step.path.c_str(), headers, step.body, step.content_type.c_str());
    if (!result) return "transport error " + httplib::to_string(result.error());
    return std::to_string(result->status) + " " + normalized_body(result->body);
}

std::string seed_user(const std::string& db) {
    auto store = make_sqlite_store(db);
    return create_user(*store, "Acceptance Runner", UserRole::researcher).token;
}

std::string handler_fuzz(Check& check) {
    auto faulty = std::make_unique<fixtures::FaultyStore>(make_memory_store());
    auto* store = faulty.get();
    fixtures::ServiceHarness h(std::move(faulty));
    h.call("POST", "/api/questions", json(fixtures::small_question()));
    const std::vector<std::pair<std::string, std::string>> probes{
        {"GET", "/api/questions"},
        {"GET", "/api/questions/q-small"},
        {"GET", "/api/questions/q-small/answers"},
        {"GET", "/api/answers/a1"},
        {"GET", "/api/answers/a1/records"},
        {"GET", "/api/batches/job-00000001"},
        {"GET", "/api/records/rec-1"},
        {"GET", "/api/questions/q-small/metrics"},
        {"GET", "/api/questions/q-small/export"},
        {"POST", "/api/questions/q-small/batches"},
        {"POST", "/api/answers/a1/gold-correction"},
        {"POST", "/api/chat/sessions"}};
    std::size_t checked = 0;
    for (const auto code : kAllErrorCodes) {
        store->arm(code);
        for (const auto& [method, path] : probes) {
            const json body{{"provider_ids", {"mock"}}, {"provider_id", "mock"}, {"mark", 1}};
            const auto reply = h.call(method, path, method == "POST" ? body : json(nullptr), {{"kind", "pref"}});
            const auto name = std::string(to_string(code)) + " via " + method + " " + path;
            check.expect(reply.status == fixtures::expected_status(code), name + " status");
            check.expect(fixtures::ServiceHarness::error_code(reply) == to_string(code), name + " code");
            ++checked;
        }
        store->disarm();
    }

    // random requests: every error reply carries a declared code and the
    // status that code maps to
    std::mt19937_64 rng(5150);
    const std::vector<std::string> methods{"GET", "POST", "PUT", "DELETE"};
    const std::vector<std::string> segments{"api", "questions", "q-small", "answers", "batches", "records",
                                            "rec-00000001", "chat", "sessions", "metrics", "export", "run",
                                            "highlights", "preference", "gold-correction", "rationale", "x", ""};
    const std::vector<std::string> bodies{"", "{}", "[", "null", R"({"mark": "two"})", R"({"provider_ids": 3})",
                                          R"({"flag": "preferred"})", R"({"mode": "key_elements"})", "\xff\xfe"};
    std::map<std::string, int> declared;
    for (const auto code : kAllErrorCodes) declared[std::string(to_string(code))] = fixtures::expected_status(code);
    declared["not_found"] = 404;
    declared["method_not_allowed"] = 405;
    for (int i = 0; i < 2000; ++i) {
        ApiRequest request;
        request.method = methods[rng() % methods.size()];
        request.path = "/api";
        for (int k = static_cast<int>(rng() % 4); k >= 0; --k) request.path += "/" + segments[rng() % segments.size()];
        request.body = bodies[rng() % bodies.size()];
        request.authorization = rng() % 10 == 0 ? "" : "Bearer " + h.token;
        const auto reply = h.service->handle(request);
        if (reply.status < 400) continue;
        const auto code = fixtures::ServiceHarness::error_code(reply);
        const auto it = declared.find(code);
        check.expect(it != declared.end() && it->second == reply.status,
                     request.method + " " + request.path + " -> " + std::to_string(reply.status) + " " + code);
        ++checked;
    }
    return std::to_string(checked) + " error replies checked";
}

std::string statelessness(Check& check, const std::string& cli) {
    if (cli.empty()) {
        check.expect(false, "no --cli path given");
        return "";
    }
    fixtures::TempPath dir("gradelens-acceptance");
    std::filesystem::create_directories(dir.path());
    const auto config = (dir.path() / "config.json").string();
    {
        json providers = json::array();
        for (const char* id : {"mock", "mock-b"}) providers.push_back({{"id", id}, {"kind", "mock"}});
        std::ofstream(config) << json{{"host", "127.0.0.1"}, {"workers", 4}, {"http_threads", 4},
                                      {"providers", providers}}
                                     .dump();
    }
    const auto shared_db = (dir.path() / "shared.db").string();
    const auto single_db = (dir.path() / "single.db").string();
    const auto shared_token = seed_user(shared_db);
    const auto single_token = seed_user(single_db);
    const auto steps = script();

    std::vector<std::string> single;
    {
        ServerProcess server(cli, config, single_db, (dir.path() / "single.log").string());
        for (const auto& step : steps) single.push_back(send(server.port, single_token, step));
    }

    std::vector<std::string> interleaved;
    std::string before_restart;
    {
        ServerProcess a(cli, config, shared_db, (dir.path() / "a.log").string());
        ServerProcess b(cli, config, shared_db, (dir.path() / "b.log").string());
        for (std::size_t i = 0; i < steps.size(); ++i) {
            interleaved.push_back(send(i % 2 ? b.port : a.port, shared_token, steps[i]));
        }
        before_restart = send(a.port, shared_token, {"GET", "/api/chat/sessions/chat-00000001", ""});
        a.stop();
        // b keeps serving while a is down
        check.expect(send(b.port, shared_token, {"GET", "/api/questions/q-small", ""}) == single[2],
                     "surviving process serves alone");
    }
    std::size_t same = 0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const bool equal = interleaved[i] == single[i];
        same += equal;
        check.expect(equal, "step " + std::to_string(i) + " " + steps[i].method + " " + steps[i].path);
    }
    for (std::size_t i = 0; i < 2; ++i) check.expect(single[i].starts_with("201 "), "setup step succeeded");
    std::size_t successes = 0;
    for (const auto& reply : single) successes += reply[0] == '2';

    ServerProcess restarted(cli, config, shared_db, (dir.path() / "c.log").string());
    check.expect(send(restarted.port, shared_token, {"GET", "/api/chat/sessions/chat-00000001", ""}) == before_restart,
                 "identical GET after restart");

    Check fuzz;
    const auto fuzz_detail = handler_fuzz(fuzz);
    check.expect(fuzz.ok(), "handler fuzz " + fuzz.summary());
    return std::to_string(same) + "/" + std::to_string(steps.size()) + " interleaved replies (" +
           std::to_string(successes) + " successes, " + std::to_string(steps.size() - successes) +
           " errors) identical to one process, restart identical, " + fuzz_detail;
}

} // namespace

int main(int argc, char** argv) {
    std::string cli;
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--cli") cli = argv[i + 1];
    }
    spdlog::set_level(spdlog::level::off);

    criterion("metrics oracle equivalence", 5.0, metrics_oracle);
    criterion("end-to-end batch", 10.0, end_to_end_batch);
    criterion("parse robustness", 0, parse_robustness);
    criterion("highlight resolution", 0, highlight_resolution);
    criterion("annotation and export integrity", 0, annotation_integrity);
    criterion("gold-correction propagation", 0, gold_propagation);
    criterion("statelessness and error mapping", 0, [&](Check& check) { return statelessness(check, cli); });
    std::cout << (g_failed == 0 ? "all criteria passed" : std::to_string(g_failed) + " criteria failed") << std::endl;
    return g_failed == 0 ? 0 : 1;
}

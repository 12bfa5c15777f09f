#include <benchmark/benchmark.h>

#include <random>

#include "gradelens/engine.hpp"
#include "gradelens/highlight.hpp"
#include "gradelens/metrics.hpp"
#include "gradelens/output_parser.hpp"
#include "gradelens/store.hpp"

using namespace gradelens;

namespace {

void BM_Qwk(benchmark::State& state) {
    std::mt19937_64 rng(1);
    const int classes = 6;
    std::uniform_int_distribution<int> mark(0, classes - 1);
    LabeledPairSet set;
    set.num_classes = classes;
    for (int i = 0; i < state.range(0); ++i) set.pairs.push_back({mark(rng), mark(rng)});
    for (auto _ : state) benchmark::DoNotOptimize(qwk(set));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Qwk)->Arg(50)->Arg(1000)->Arg(10000);

void BM_ResolveSpans(benchmark::State& state) {
    std::string text;
    std::vector<TaggedSegment> segments;
    for (int i = 0; i < state.range(0); ++i) {
        const auto word = "Word" + std::to_string(i);
        text += word + (i % 7 ? " " : "\n\t");
        if (i % 5 == 0) segments.push_back({word, "element_1"});
    }
    for (auto _ : state) benchmark::DoNotOptimize(resolve_spans(text, segments));
    state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(text.size()));
}
BENCHMARK(BM_ResolveSpans)->Arg(100)->Arg(2000);

void BM_ParseStrict(benchmark::State& state) {
    const auto raw = format_assessment_output(2, std::string(400, 'r'));
    for (auto _ : state) benchmark::DoNotOptimize(parse_model_output(raw, 3));
}
BENCHMARK(BM_ParseStrict);

void BM_ParseFallback(benchmark::State& state) {
    const std::string raw =
        "Let me think about this answer carefully. It names the materials and the container, "
        "but not the rinse time. {\"partial\": true\nMark: 2";
    for (auto _ : state) benchmark::DoNotOptimize(parse_model_output(raw, 3));
}
BENCHMARK(BM_ParseFallback);

// Whole mock batch through the engine over the in-memory store.
void BM_MockBatch(benchmark::State& state) {
    Question q;
    q.id = "q1";
    q.prompt_text = "Describe what additional information you would need to replicate the experiment.";
    q.key_elements = {"specify the materials to be tested", "describe the size of each container",
                      "state how long each sample was rinsed"};
    q.rubric = {{3, "three"}, {2, "two"}, {1, "one"}, {0, "none"}};
    q.max_mark = 3;
    std::vector<StudentAnswer> answers;
    for (int i = 0; i < state.range(0); ++i) {
        answers.push_back({"a" + std::to_string(i), q.id,
                           i % 2 ? "Specify the materials tested and the container size." : "Rinse longer.",
                           std::nullopt});
    }
    ProviderConfig mock;
    mock.provider_id = "mock";
    mock.kind = ProviderKind::mock;
    mock.max_concurrent = 8;
    for (auto _ : state) {
        state.PauseTiming();
        auto store = make_memory_store();
        ModelGateway gateway(std::make_shared<HttplibTransport>());
        gateway.register_provider(mock);
        PromptCompiler compiler;
        AssessmentEngine engine(*store, gateway, compiler, EngineOptions{4});
        store->insert_question(q);
        store->insert_answers(answers);
        state.ResumeTiming();
        const auto job = engine.create_batch({q.id, {}, {"mock"}, RecordOrigin::batch, ""});
        benchmark::DoNotOptimize(engine.run_batch(job.id));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MockBatch)->Arg(50)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();

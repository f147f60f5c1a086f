#include <benchmark/benchmark.h>

#include "snps3/encoder_skeleton.hpp"
#include "snps3/loss_kernels.hpp"
#include "snps3/rng.hpp"
#include "snps3/semantic_miner.hpp"
#include "snps3/synth_harness.hpp"
#include "snps3/tokenizer.hpp"

using namespace snps3;

namespace {

Matrix64 random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    Rng rng(seed);
    Matrix64 m(r, c);
    for (double& x : m.data()) x = rng.normal();
    return m;
}

void BM_Tokenize(benchmark::State& state) {
    const Vocab v = synth_vocab();
    const auto recs = gen_corpus(1, 256, v);
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(wordpiece_tokenize(recs[i++ % recs.size()].caption, v));
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Tokenize);

void BM_CountSignificant(benchmark::State& state) {
    const Vocab v = synth_vocab();
    const PosCorpus corpus = to_pos_corpus(gen_corpus(2, 20000, v));
    const auto workers = static_cast<unsigned>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(count_significant(corpus, v, workers));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(corpus.size()));
}
BENCHMARK(BM_CountSignificant)->Arg(1)->Arg(4)->UseRealTime();

void BM_GvtmFree(benchmark::State& state) {
    const auto b = static_cast<std::size_t>(state.range(0));
    const Matrix64 v = random_matrix(b, 256, 3), t = random_matrix(b, 256, 4);
    for (auto _ : state) benchmark::DoNotOptimize(gvtm_free(v, t));
}
BENCHMARK(BM_GvtmFree)->Arg(32)->Arg(128)->Arg(256);

void BM_Lvwm(benchmark::State& state) {
    const auto b = static_cast<std::size_t>(state.range(0));
    const Matrix64 v = random_matrix(b, 256, 5);
    const Matrix64 flat = random_matrix(b * 3, 256, 6);
    const TokenBlock64 t(b, 3, 256, flat.data());
    for (auto _ : state) benchmark::DoNotOptimize(lvwm(v, t));
}
BENCHMARK(BM_Lvwm)->Arg(32)->Arg(128);

void BM_ForwardText(benchmark::State& state) {
    EncoderConfig c;
    c.layers = 2;
    c.hidden = static_cast<std::size_t>(state.range(0));
    c.heads = 4;
    c.ffn = 4 * c.hidden;
    c.vocab_size = 1000;
    c.max_positions = 64;
    const auto p = init_params(c, 1);
    TokenSeq s;
    s.ids.assign(c.text_length, 7);
    s.ids.front() = 2;
    s.length = c.text_length;
    s.word_index.assign(c.text_length, -1);
    s.is_special.assign(c.text_length, false);
    for (auto _ : state) benchmark::DoNotOptimize(forward_text(p, s));
}
BENCHMARK(BM_ForwardText)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();

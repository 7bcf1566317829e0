#include <benchmark/benchmark.h>

#include "ppap/runner.hpp"

using namespace ppap;

namespace {

TrainConfig bench_config() {
    TrainConfig cfg;
    cfg.data.n_per_species = 4;
    cfg.aug.enabled = false;
    cfg.train.batch_size = 8;
    return cfg;
}

void BM_ImageEncoder(benchmark::State& state) {
    RngStream rng(1);
    ParamStore ps;
    ImageEncoder enc(ps, "enc", 32, rng);
    Tensor img({3, 64, 64});
    for (int64_t i = 0; i < img.numel(); ++i) img[i] = rng.uniform();
    for (auto _ : state) {
        Var f = encode_image(Var::constant(img), enc);
        benchmark::DoNotOptimize(f.val().data());
    }
}
BENCHMARK(BM_ImageEncoder);

void BM_TextEncoder(benchmark::State& state) {
    KeypointVocab vocab = default_synth_vocab();
    TextEncoderState enc(vocab, {}, 3);
    PromptSet set = build_prompt_set(vocab, 2, 8, 5);
    for (auto _ : state) {
        Var e = encode_text(render_sequence(set.at(0, 0), 0, vocab, enc), enc);
        benchmark::DoNotOptimize(e.val().data());
    }
}
BENCHMARK(BM_TextEncoder);

void BM_ScoreMapsAndFusion(benchmark::State& state) {
    RngStream rng(7);
    const int k = 5, np = 2, hw = 8;
    Var pix = l2_normalize_rows_stable(Var::param(randn_tensor({hw * hw, 64}, 1.0, rng)));
    Var temp = Var::param(Tensor::scalar(10.0));
    ParamStore ps;
    EnsembleFusionState ens(ps, "e", k, 2);
    PromptDistribution dist;
    dist.mu = Var::param(randn_tensor({k * np, 64}, 1.0, rng));
    dist.sigma = Var::param(Tensor::full({k * np, 64}, 0.1));
    dist.n_keypoints = k;
    dist.n_attributes = np;
    RngStream noise(11);
    for (auto _ : state) {
        SampledPrompts sp = sample_prompts(dist, 2, noise);
        ScoreMapStack stack = score_maps(sp, pix, k, np, hw, hw, temp);
        ScoreMap fused = fuse_ensemble(stack, ens);
        benchmark::DoNotOptimize(fused.map.val().data());
    }
}
BENCHMARK(BM_ScoreMapsAndFusion);

void BM_TrainStep(benchmark::State& state) {
    TrainConfig cfg = bench_config();
    cfg.train.max_steps = 1;
    cfg.train.epochs = 1;
    cfg.train.lr_milestones = {};
    cfg.train.eval_interval = 0;
    Dataset ds = make_dataset(cfg);
    for (auto _ : state) {
        state.PauseTiming();
        PpapModel model = PpapModel::build(cfg, ds.vocab);
        state.ResumeTiming();
        TrainResult r = train_model(model, cfg, ds, "bench_out");
        benchmark::DoNotOptimize(r.steps_run);
    }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_Evaluate(benchmark::State& state) {
    TrainConfig cfg = bench_config();
    Dataset ds = make_dataset(cfg);
    PpapModel model = PpapModel::build(cfg, ds.vocab);
    for (auto _ : state) {
        EvalResult r = evaluate(model, ds.records, cfg);
        benchmark::DoNotOptimize(r.pck);
    }
}
BENCHMARK(BM_Evaluate)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

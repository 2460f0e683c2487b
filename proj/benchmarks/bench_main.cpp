#include <benchmark/benchmark.h>

#include <random>

#include "tss/image.hpp"
#include "tss/manifest.hpp"
#include "tss/metrics.hpp"
#include "tss/model.hpp"

namespace {

void BM_AucRoc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> scores(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = u(rng);
    labels[i] = static_cast<int>(i % 2);
  }
  for (auto _ : state) benchmark::DoNotOptimize(tss::auc_roc(scores, labels));
  state.SetComplexityN(static_cast<std::int64_t>(n));
}
BENCHMARK(BM_AucRoc)->RangeMultiplier(4)->Range(256, 65536)->Complexity();

void BM_HorizontalFlip(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  tss::Image img(side, side, 3);
  std::mt19937 rng(2);
  for (auto& v : img.pixels) v = static_cast<std::uint8_t>(rng());
  for (auto _ : state) benchmark::DoNotOptimize(tss::horizontal_flip(img));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(img.pixels.size()));
}
BENCHMARK(BM_HorizontalFlip)->Arg(224)->Arg(299)->Arg(512);

void BM_ManifestDigest(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<tss::ImageRecord> records;
  for (std::size_t i = 0; i < n; ++i) {
    records.push_back({"img" + std::to_string(i) + ".png", "/data/img" + std::to_string(i) + ".png",
                       i % 2 ? tss::ClassLabel::covid : tss::ClassLabel::non_covid,
                       i % 4 == 0 ? tss::Split::test : tss::Split::train, std::nullopt});
  }
  for (auto _ : state) {
    auto m = tss::DatasetManifest::downstream(records);
    benchmark::DoNotOptimize(m.content_digest());
  }
}
BENCHMARK(BM_ManifestDigest)->Arg(746)->Arg(10000);

void BM_TinyForward(benchmark::State& state) {
  auto model = tss::build_model(
      tss::BackboneSpec::make(tss::BackboneName::tiny_test, tss::WeightsInit::random), {}, 0);
  const auto batch = torch::rand({state.range(0), 3, 64, 64});
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(batch));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TinyForward)->Arg(1)->Arg(32);

}  // namespace
BENCHMARK_MAIN();

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "covap/compress.hpp"
#include "covap/errors.hpp"
#include "covap/rng.hpp"

using namespace covap;

namespace {

// Direct evaluation of the tensor filter on a fixed snapshot, independent of
// the compressor implementation: keep tensor t at phase s iff t == s (mod I).
GradientSet direct_filter(const GradientSet& x, std::uint64_t step, std::uint32_t interval) {
  GradientSet out;
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (t % interval == step % interval)
      out.push_back(x[t]);
    else
      out.emplace_back(x[t].size(), 0.0);
  }
  return out;
}

double squared_norm(const GradientSet& x) {
  double total = 0.0;
  for (const auto& tensor : x)
    for (double v : tensor) total += v * v;
  return total;
}

GradientSet random_set(SplitMix64& rng, std::size_t tensors, std::size_t numel) {
  GradientSet g(tensors, TensorVec(numel));
  for (auto& tensor : g)
    for (double& v : tensor) v = rng.next_normal();
  return g;
}

GradientSet random_integer_set(SplitMix64& rng, const std::vector<std::uint64_t>& numels) {
  GradientSet g;
  for (std::uint64_t n : numels) {
    TensorVec t(n);
    for (double& v : t) v = static_cast<double>(static_cast<std::int64_t>(rng.next_below(2001)) - 1000);
    g.push_back(std::move(t));
  }
  return g;
}

GradientSet add_sets(GradientSet a, const GradientSet& b) {
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t i = 0; i < a[t].size(); ++i) a[t][i] += b[t][i];
  return a;
}

}  // namespace

TEST_SUITE("compress") {

TEST_CASE("selection walks tensors with the step") {
  CHECK(select_tensors(0, 4, 8) == std::vector<std::size_t>{0, 4});
  CHECK(select_tensors(1, 4, 8) == std::vector<std::size_t>{1, 5});
  CHECK(select_tensors(123, 1, 5) == std::vector<std::size_t>{0, 1, 2, 3, 4});
}

TEST_CASE("alternate selection sign still covers every tensor") {
  CHECK(select_tensors(0, 4, 8, SelectionRule::kPlusStep) == std::vector<std::size_t>{0, 4});
  CHECK(select_tensors(1, 4, 8, SelectionRule::kPlusStep) == std::vector<std::size_t>{3, 7});
}

TEST_CASE("every tensor is selected exactly once per interval window") {
  SplitMix64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::uint32_t interval = 1 + static_cast<std::uint32_t>(rng.next_below(9));
    const std::size_t count = 1 + rng.next_below(40);
    const std::uint64_t start = rng.next_below(1000);
    for (auto rule : {SelectionRule::kMatchStep, SelectionRule::kPlusStep}) {
      std::vector<int> hits(count, 0);
      for (std::uint64_t s = start; s < start + interval; ++s) {
        const auto selected = select_tensors(s, interval, count, rule);
        const std::size_t lo = count / interval;
        const std::size_t hi = (count + interval - 1) / interval;
        CHECK(selected.size() >= lo);
        CHECK(selected.size() <= hi);
        for (std::size_t t : selected) ++hits[t];
      }
      CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    }
  }
}

TEST_CASE("two independent state machines always agree") {
  std::uint64_t a_step = 0, b_step = 0;
  for (int i = 0; i < 10000; ++i) {
    CHECK(select_tensors(a_step, 7, 23) == select_tensors(b_step, 7, 23));
    ++a_step;
    ++b_step;
  }
}

TEST_CASE("compensation coefficient schedule") {
  EfSchedule sched{true, 0.2, 100, 0.1};
  CHECK(ef_coefficient(0, sched) == doctest::Approx(0.2));
  CHECK(ef_coefficient(350, sched) == doctest::Approx(0.5));
  CHECK(ef_coefficient(1000000, sched) == 1.0);
  // Monotone non-decreasing.
  double last = 0.0;
  for (std::uint64_t s = 0; s < 2000; s += 17) {
    const double c = ef_coefficient(s, sched);
    CHECK(c >= last);
    CHECK(c <= 1.0);
    last = c;
  }
}

TEST_CASE("two-step compression trace with full compensation") {
  CovapConfig cfg;
  cfg.interval = 2;
  cfg.ef = EfSchedule{true, 1.0, 1, 0.0};
  auto state = CompressorState::zeros({2, 2});

  GradientSet g0 = {{1, 2}, {3, 4}};
  const auto u0 = covap_compress(g0, state, cfg);
  CHECK(u0.selected == std::vector<std::size_t>{0});
  CHECK(u0.payload[0] == TensorVec{1, 2});
  CHECK(state.residuals[0] == TensorVec{0, 0});
  CHECK(state.residuals[1] == TensorVec{3, 4});

  GradientSet g1 = {{5, 6}, {7, 8}};
  const auto u1 = covap_compress(g1, state, cfg);
  CHECK(u1.selected == std::vector<std::size_t>{1});
  CHECK(u1.payload[0] == TensorVec{10, 12});
  CHECK(state.residuals[0] == TensorVec{5, 6});
  CHECK(state.residuals[1] == TensorVec{0, 0});
}

TEST_CASE("interval one transmits everything and keeps residuals zero") {
  CovapConfig cfg;
  cfg.interval = 1;
  auto state = CompressorState::zeros({3, 3});
  SplitMix64 rng(11);
  for (int step = 0; step < 20; ++step) {
    const auto g = random_set(rng, 2, 3);
    const auto u = covap_compress(g, state, cfg);
    CHECK(u.selected.size() == 2);
    CHECK(u.payload[0] == g[0]);
    CHECK(u.payload[1] == g[1]);
    for (const auto& r : state.residuals)
      for (double v : r) CHECK(v == 0.0);
  }
}

TEST_CASE("shape mismatch is rejected") {
  CovapConfig cfg;
  auto state = CompressorState::zeros({2, 2});
  GradientSet wrong_count = {{1, 2}};
  CHECK_THROWS_AS(covap_compress(wrong_count, state, cfg), InvalidState);
  GradientSet wrong_shape = {{1, 2, 3}, {4, 5}};
  CHECK_THROWS_AS(covap_compress(wrong_shape, state, cfg), InvalidState);
}

TEST_CASE("decompression embeds payload and zero-fills") {
  CompressedUpdate update;
  update.selected = {0};
  update.payload = {{1, 2}};
  const auto full = covap_decompress(update, {2, 2});
  CHECK(full[0] == TensorVec{1, 2});
  CHECK(full[1] == TensorVec{0, 0});

  const auto empty = covap_decompress(CompressedUpdate{}, {2, 2});
  CHECK(empty[0] == TensorVec{0, 0});
  CHECK(empty[1] == TensorVec{0, 0});

  CompressedUpdate bad;
  bad.selected = {5};
  bad.payload = {{1}};
  CHECK_THROWS_AS(covap_decompress(bad, {2, 2}), InvalidInput);
}

TEST_CASE("round trip matches the direct filter at any phase") {
  SplitMix64 rng(21);
  for (std::uint32_t interval : {1u, 2u, 3u, 5u}) {
    for (std::uint64_t phase = 0; phase < interval; ++phase) {
      const auto x = random_set(rng, 7, 5);
      CovapConfig cfg;
      cfg.interval = interval;
      cfg.ef.enabled = false;
      auto state = CompressorState::zeros(std::vector<std::uint64_t>(7, 5));
      state.num_steps = phase;
      const auto update = covap_compress(x, state, cfg);
      const auto full = covap_decompress(update, std::vector<std::uint64_t>(7, 5));
      CHECK(full == direct_filter(x, phase, interval));
    }
  }
}

TEST_CASE("phase-averaged drop equals one minus the kept fraction") {
  SplitMix64 rng(31);
  for (std::uint32_t interval : {2u, 3u, 4u, 8u}) {
    const std::size_t tensors = interval * 3;
    const auto x = random_set(rng, tensors, 64);
    const double norm = squared_norm(x);
    double drop_sum = 0.0;
    for (std::uint64_t phase = 0; phase < interval; ++phase) {
      const auto kept = direct_filter(x, phase, interval);
      double drop = 0.0;
      for (std::size_t t = 0; t < x.size(); ++t)
        for (std::size_t i = 0; i < x[t].size(); ++i) {
          const double miss = x[t][i] - kept[t][i];
          drop += miss * miss;
        }
      CHECK(drop <= norm);
      drop_sum += drop;
    }
    const double averaged = drop_sum / interval;
    CHECK(averaged / norm ==
          doctest::Approx(1.0 - 1.0 / interval).epsilon(1e-9));
  }
}

TEST_CASE("transmitted mass plus residuals conserves the gradient sum") {
  const std::vector<std::uint64_t> numels = {8, 8, 8, 8, 8};
  CovapConfig cfg;
  cfg.interval = 3;
  cfg.ef = EfSchedule{true, 1.0, 1, 0.0};
  auto state = CompressorState::zeros(numels);

  SplitMix64 rng(17);
  GradientSet input_sum(numels.size(), TensorVec(8, 0.0));
  GradientSet sent_sum(numels.size(), TensorVec(8, 0.0));
  for (int step = 0; step < 200; ++step) {
    const auto g = random_integer_set(rng, numels);
    input_sum = add_sets(std::move(input_sum), g);
    const auto update = covap_compress(g, state, cfg);
    sent_sum = add_sets(std::move(sent_sum), covap_decompress(update, numels));

    // The tensor transmitted this step carries no residual.
    for (std::size_t t : update.selected)
      for (double v : state.residuals[t]) CHECK(v == 0.0);
  }
  const auto recovered = add_sets(sent_sum, state.residuals);
  CHECK(recovered == input_sum);  // integer data: exact
}

TEST_CASE("largest magnitudes win with ties to the lower index") {
  const TensorVec x = {3, -5, 1, 2};
  const auto sel = topk_compress(x, 0.5);
  CHECK(sel.indices == std::vector<std::size_t>{1, 0});
  CHECK(sel.values == TensorVec{-5, 3});

  const auto all = topk_compress(x, 1.0);
  CHECK(all.indices.size() == 4);

  const TensorVec ties = {2, -2, 2};
  const auto one = topk_compress(ties, 1.0 / 3.0);
  CHECK(one.indices == std::vector<std::size_t>{0});

  CHECK_THROWS_AS(topk_compress(TensorVec{}, 0.5), InvalidInput);
}

TEST_CASE("no same-size selection beats the magnitude selection") {
  SplitMix64 rng(3);
  const std::size_t d = 10;
  const std::size_t k = 3;
  for (int trial = 0; trial < 20; ++trial) {
    TensorVec x(d);
    for (double& v : x) v = rng.next_normal();
    const auto sel = topk_compress(x, 0.3);
    REQUIRE(sel.indices.size() == k);
    double topk_err = 0.0;
    {
      std::set<std::size_t> kept(sel.indices.begin(), sel.indices.end());
      for (std::size_t i = 0; i < d; ++i)
        if (kept.count(i) == 0) topk_err += x[i] * x[i];
    }
    // Exhaustive: every 3-subset of 10 indices.
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a + 1; b < d; ++b)
        for (std::size_t c = b + 1; c < d; ++c) {
          double err = 0.0;
          for (std::size_t i = 0; i < d; ++i)
            if (i != a && i != b && i != c) err += x[i] * x[i];
          CHECK(topk_err <= err + 1e-12);
        }
  }
}

TEST_CASE("random selection is reproducible and of exact size") {
  const TensorVec x(10, 1.0);
  const auto a = randomk_compress(x, 0.3, 99);
  const auto b = randomk_compress(x, 0.3, 99);
  CHECK(a.indices == b.indices);
  CHECK(a.indices.size() == 3);
  for (std::size_t idx : a.indices) CHECK(idx < 10);
  CHECK(std::adjacent_find(a.indices.begin(), a.indices.end()) == a.indices.end());

  const auto all = randomk_compress(x, 1.0, 1);
  CHECK(all.indices.size() == 10);
}

TEST_CASE("random selection is uniform over seeds") {
  const TensorVec x(10, 1.0);
  std::vector<int> hits(10, 0);
  const int trials = 10000;
  for (int seed = 0; seed < trials; ++seed) {
    const auto sel = randomk_compress(x, 0.3, static_cast<std::uint64_t>(seed));
    for (std::size_t idx : sel.indices) ++hits[idx];
  }
  for (int h : hits) {
    const double freq = static_cast<double>(h) / trials;
    CHECK(freq == doctest::Approx(0.3).epsilon(0.02 / 0.3));
  }
}

TEST_CASE("half precision round trip") {
  std::uint64_t saturated = 0;
  const TensorVec x = {1.0, 2049.0, 70000.0, -70000.0, 0.0, 0.1};
  const auto y = fp16_roundtrip(x, &saturated);
  CHECK(y[0] == 1.0);
  CHECK(y[1] == 2048.0);
  CHECK(y[2] == 65504.0);
  CHECK(y[3] == -65504.0);
  CHECK(y[4] == 0.0);
  CHECK(y[5] == doctest::Approx(0.0999755859375));
  CHECK(saturated == 2);
}

TEST_CASE("half precision conversion is idempotent") {
  SplitMix64 rng(13);
  TensorVec x(500);
  for (double& v : x) v = rng.next_normal() * std::pow(10.0, rng.next_below(9)) * 1e-4;
  const auto once = fp16_roundtrip(x);
  const auto twice = fp16_roundtrip(once);
  CHECK(once == twice);
}

TEST_CASE("shared feedback wrapper conserves mass for every scheme") {
  const std::vector<std::uint64_t> numels = {6, 6, 6};
  const EfSchedule full{true, 1.0, 1, 0.0};
  SplitMix64 rng(77);

  const CovapFilter covap_filter(3);
  const TopkFilter topk_filter(0.25);
  const RandomkFilter randomk_filter(0.25, 42);
  const GradientFilter* filters[] = {&covap_filter, &topk_filter, &randomk_filter};

  for (const GradientFilter* filter : filters) {
    ErrorFeedback ef(numels, full);
    GradientSet input_sum(3, TensorVec(6, 0.0));
    GradientSet sent_sum(3, TensorVec(6, 0.0));
    for (int step = 0; step < 100; ++step) {
      const auto g = random_integer_set(rng, numels);
      input_sum = add_sets(std::move(input_sum), g);
      sent_sum = add_sets(std::move(sent_sum), ef.step(g, *filter));
    }
    CHECK(add_sets(sent_sum, ef.residuals()) == input_sum);
  }
}

TEST_CASE("feedback wrapper with the tensor filter matches the fused compressor") {
  const std::vector<std::uint64_t> numels = {4, 4, 4, 4};
  CovapConfig cfg;
  cfg.interval = 2;
  cfg.ef = EfSchedule{true, 0.4, 3, 0.2};

  auto state = CompressorState::zeros(numels);
  ErrorFeedback wrapper(numels, cfg.ef);
  const CovapFilter filter(cfg.interval, cfg.rule);

  SplitMix64 rng(8);
  for (int step = 0; step < 50; ++step) {
    GradientSet g;
    for (std::uint64_t n : numels) {
      TensorVec t(n);
      for (double& v : t) v = rng.next_normal();
      g.push_back(std::move(t));
    }
    const auto update = covap_compress(g, state, cfg);
    const auto dense = covap_decompress(update, numels);
    const auto kept = wrapper.step(g, filter);
    CHECK(dense == kept);
    CHECK(state.residuals == wrapper.residuals());
  }
}

}  // TEST_SUITE

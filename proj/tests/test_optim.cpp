#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstdio>
#include <string>

#include "synformer/autograd.hpp"
#include "synformer/checkpoint.hpp"
#include "synformer/optim.hpp"

using namespace synformer;

TEST_CASE("schedule endpoints and continuity") {
  const double peak = 5e-4;
  long long warmup = 200, total = 1000;
  REQUIRE(lr_at(0, warmup, total, peak) == 0.0);
  REQUIRE(lr_at(warmup, warmup, total, peak) == peak);  // exact, not approximate
  REQUIRE(std::abs(lr_at(total, warmup, total, peak)) < 1e-12);
  REQUIRE(lr_at(total + 500, warmup, total, peak) == 0.0);

  // midpoint of the cosine segment
  REQUIRE(lr_at((warmup + total) / 2, warmup, total, peak) ==
          Catch::Approx(peak / 2).margin(1e-12));

  // continuity at the boundary: both branches approach peak
  double below = lr_at(warmup - 1, warmup, total, peak);
  double above = lr_at(warmup + 1, warmup, total, peak);
  REQUIRE(std::abs(below - peak) < peak / warmup + 1e-15);
  REQUIRE(std::abs(above - peak) < 1e-7);

  // linear ramp shape
  REQUIRE(lr_at(50, warmup, total, peak) == Catch::Approx(peak * 0.25).margin(1e-15));
  REQUIRE(lr_at(100, warmup, total, peak) == Catch::Approx(peak * 0.5).margin(1e-15));
}

TEST_CASE("schedule is nonincreasing after warmup") {
  double prev = 1.0;
  for (long long s = 200; s <= 1000; ++s) {
    double lr = lr_at(s, 200, 1000, 5e-4);
    REQUIRE(lr <= prev + 1e-15);
    prev = lr;
  }
}

TEST_CASE("degenerate schedules are rejected and defaults are clamped") {
  REQUIRE_THROWS_AS(lr_at(1, 0, 100, 5e-4), ConfigError);
  REQUIRE_THROWS_AS(lr_at(1, 100, 100, 5e-4), ConfigError);
  REQUIRE_THROWS_AS(lr_at(1, 150, 100, 5e-4), ConfigError);
  REQUIRE(default_warmup(1000) == 200);
  REQUIRE(default_warmup(10) == 2);
  REQUIRE(default_warmup(3) == 1);   // clamped up from round(0.6)=1
  REQUIRE(default_warmup(2) == 1);
  REQUIRE(default_warmup(4) == 1);   // round(0.8)=1
}

TEST_CASE("three steps of constant gradient match the hand-computed trajectory") {
  ParamStore<double> store;
  auto& p = store.add("theta", Tensor<double>::full(1, 1, 1.0));
  AdamW<double> opt(store, /*wd=*/0.0);
  const double expected[3] = {0.9000000099999990, 0.8000000199999980, 0.7000000299999970};
  for (int s = 0; s < 3; ++s) {
    p.grad.data[0] = 1.0;
    opt.step(0.1);
    REQUIRE(p.value.data[0] == Catch::Approx(expected[s]).margin(1e-15));
  }
  REQUIRE(opt.steps() == 3);
}

TEST_CASE("frozen parameters are bitwise untouched") {
  ParamStore<double> store;
  Rng rng(3);
  auto& frozen = store.add("table", init_uniform<double>(4, 3, rng, -1, 1), false);
  auto& live = store.add("w", init_uniform<double>(2, 2, rng, -1, 1));
  auto before = frozen.value.data;
  AdamW<double> opt(store, 0.1);
  for (int s = 0; s < 100; ++s) {
    for (auto& g : frozen.grad.data) g = 7.0;  // even with garbage grads parked there
    for (auto& g : live.grad.data) g = 0.5;
    opt.step(1e-3);
  }
  REQUIRE(frozen.value.data == before);
  REQUIRE(live.value.data[0] != Catch::Approx(0.0));
}

TEST_CASE("zero gradients with weight decay give a pure exponential shrink") {
  ParamStore<double> store;
  auto& p = store.add("theta", Tensor<double>::full(1, 2, 2.0));
  double lr = 0.01, wd = 0.1;
  AdamW<double> opt(store, wd);
  for (int s = 1; s <= 5; ++s) {
    store.zero_grads();
    opt.step(lr);
    double want = 2.0 * std::pow(1.0 - lr * wd, s);
    REQUIRE(p.value.data[0] == Catch::Approx(want).margin(1e-15));
    REQUIRE(p.value.data[1] == Catch::Approx(want).margin(1e-15));
  }
}

TEST_CASE("a non-finite gradient aborts the step and names the parameter") {
  ParamStore<double> store;
  store.add("fine", Tensor<double>::full(1, 1, 1.0));
  auto& bad = store.add("exploded", Tensor<double>::full(1, 1, 1.0));
  bad.grad.data[0] = std::numeric_limits<double>::quiet_NaN();
  AdamW<double> opt(store);
  REQUIRE_THROWS_WITH(opt.step(1e-3), Catch::Matchers::ContainsSubstring("exploded"));
}

TEST_CASE("gradient clipping rescales to the requested global norm") {
  ParamStore<double> store;
  auto& a = store.add("a", Tensor<double>(1, 1));
  auto& b = store.add("b", Tensor<double>(1, 1));
  store.add("frozen", Tensor<double>::full(1, 1, 1.0), false).grad.data[0] = 100.0;
  a.grad.data[0] = 3.0;
  b.grad.data[0] = 4.0;

  double norm = clip_gradients(store, 2.5);
  REQUIRE(norm == Catch::Approx(5.0).margin(1e-12));  // frozen grads don't count
  REQUIRE(a.grad.data[0] == Catch::Approx(1.5).margin(1e-12));
  REQUIRE(b.grad.data[0] == Catch::Approx(2.0).margin(1e-12));

  a.grad.data[0] = 0.3;
  b.grad.data[0] = 0.4;
  norm = clip_gradients(store, 2.5);  // already within bounds: untouched
  REQUIRE(norm == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(a.grad.data[0] == 0.3);
  REQUIRE(b.grad.data[0] == 0.4);
}

TEST_CASE("the optimizer drives a quadratic to its minimum") {
  ParamStore<double> store;
  Rng rng(11);
  auto& p = store.add("x", init_uniform<double>(1, 4, rng, -2, 2));
  AdamW<double> opt(store);
  for (int s = 0; s < 2000; ++s) {
    store.zero_grads();
    Graph<double> g;
    auto x = g.leaf(p);
    auto loss = reduce_sum(matmul_nt(x, x));  // sum of squares
    g.backward(loss);
    opt.step(0.01);
  }
  for (double v : p.value.data) REQUIRE(std::abs(v) < 1e-4);
}

TEST_CASE("checkpoints round-trip every field bitwise") {
  Checkpoint c;
  c.config_text = "alpha=1\nbeta=two\n";
  c.vocab_tokens = {"<pad>", "<unk>", "[SOS]", "denver", "flights"};
  c.slot_labels = {"O", "B-city", "I-city"};
  c.intent_labels = {"airfare", "flight"};
  c.pos_labels = {"NN", "VB"};
  c.selection_metric = "slot_f1+intent_acc";
  c.best_value = 1.8437500001;
  c.best_epoch = 42;
  Rng rng(8);
  Tensor<float> w(3, 2);
  for (auto& v : w.data) v = static_cast<float>(uniform_in(rng, -1, 1));
  c.params.emplace_back("layer1.wq", w);
  c.params.emplace_back("layer1.bo", Tensor<float>(1, 2));

  std::string path = "/tmp/synformer_ckpt_test.bin";
  save_checkpoint(path, c);
  auto r = load_checkpoint(path);
  REQUIRE(r.config_text == c.config_text);
  REQUIRE(r.vocab_tokens == c.vocab_tokens);
  REQUIRE(r.slot_labels == c.slot_labels);
  REQUIRE(r.intent_labels == c.intent_labels);
  REQUIRE(r.pos_labels == c.pos_labels);
  REQUIRE(r.selection_metric == c.selection_metric);
  REQUIRE(r.best_value == c.best_value);
  REQUIRE(r.best_epoch == c.best_epoch);
  REQUIRE(r.params.size() == 2);
  REQUIRE(r.params[0].first == "layer1.wq");
  REQUIRE(r.params[0].second.shape == w.shape);
  REQUIRE(r.params[0].second.data == w.data);
  REQUIRE(r.params[1].second.data == std::vector<float>{0.0f, 0.0f});
  std::remove(path.c_str());

  auto vocab = vocab_from_tokens(r.vocab_tokens);
  REQUIRE(vocab.encode("denver") == 3);
  REQUIRE(vocab.encode("unknown-token") == Vocab::kUnk);
  auto spaces = spaces_from_checkpoint(r);
  REQUIRE(spaces.slot_id("B-city") == 1);
  REQUIRE(spaces.intent_id("flight") == 1);
}

TEST_CASE("store snapshot and restore preserve values and catch mismatches") {
  Rng rng(9);
  ParamStore<float> store;
  store.add("a", init_uniform<float>(2, 3, rng, -1, 1));
  store.add("b", init_uniform<float>(1, 4, rng, -1, 1), false);
  auto saved = snapshot_params(store);

  // perturb, then restore
  store.at(0).value.fill(9.0f);
  restore_params(store, saved);
  REQUIRE(store.at(0).value.data == saved[0].second.data);
  REQUIRE(store.at(1).value.data == saved[1].second.data);

  ParamStore<float> other;
  other.add("a", Tensor<float>(2, 3));
  REQUIRE_THROWS_AS(restore_params(other, saved), DataError);  // count mismatch
  other.add("zzz", Tensor<float>(1, 4));
  REQUIRE_THROWS_AS(restore_params(other, saved), DataError);  // missing name
  ParamStore<float> shaped;
  shaped.add("a", Tensor<float>(2, 3));
  shaped.add("b", Tensor<float>(4, 1));
  REQUIRE_THROWS_AS(restore_params(shaped, saved), DataError);  // wrong shape
}

TEST_CASE("corrupt or foreign files are rejected with a clear error") {
  std::string path = "/tmp/synformer_ckpt_garbage.bin";
  {
    std::ofstream os(path, std::ios::binary);
    os << "GIF89a not a model";
  }
  REQUIRE_THROWS_AS(load_checkpoint(path), DataError);
  std::remove(path.c_str());
  REQUIRE_THROWS_AS(load_checkpoint("/tmp/does_not_exist_synformer.bin"), DataError);

  // truncated real container
  Checkpoint c;
  c.config_text = "k=v\n";
  c.params.emplace_back("w", Tensor<float>(4, 4));
  save_checkpoint(path, c);
  std::ifstream is(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  is.close();
  {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  REQUIRE_THROWS_AS(load_checkpoint(path), DataError);
  std::remove(path.c_str());
}

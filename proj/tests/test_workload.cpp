#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "edgepart/workload.hpp"

using namespace edgepart;

TEST_CASE("preset catalog dims and nominal memory") {
  auto gpt2 = build_model_spec("gpt2-1.5b");
  CHECK(gpt2.layers == 24);
  CHECK(gpt2.heads == 16);
  CHECK(gpt2.d_model == 1600);
  CHECK(gpt2.d_head == 100);
  CHECK(gpt2.d_ff == 6400);
  CHECK(gpt2.nominal_memory_bytes() == doctest::Approx(6e9).epsilon(1e-12));

  auto l7 = build_model_spec("llama-7b");
  CHECK(l7.layers == 32);
  CHECK(l7.heads == 32);
  CHECK(l7.d_model == 4096);
  CHECK(l7.nominal_memory_bytes() == doctest::Approx(28e9).epsilon(1e-12));

  auto l13 = build_model_spec("llama-13b");
  CHECK(l13.layers == 40);
  CHECK(l13.heads == 40);
  CHECK(l13.d_model == 5120);
  CHECK(l13.nominal_memory_bytes() == doctest::Approx(52e9).epsilon(1e-12));

  CHECK_THROWS_AS(build_model_spec("bert"), std::invalid_argument);
}

TEST_CASE("spec construction validates dims") {
  CHECK_THROWS_AS(make_model_spec("x", 2, 3, 64, 1e6), std::invalid_argument);  // 64 % 3
  CHECK_THROWS_AS(make_model_spec("x", 0, 2, 64, 1e6), std::invalid_argument);
  CHECK_THROWS_AS(make_model_spec("x", 2, 2, 64, 0.0), std::invalid_argument);
  auto s = make_model_spec("x", 2, 2, 64, 1e6);
  CHECK(s.d_ff == 256);  // 4 * d_model default
  CHECK(s.d_head == 32);
}

TEST_CASE("component flops, frozen values for gpt2 at n=128") {
  auto s = build_model_spec("gpt2-1.5b");
  // 6*128*1600*100 + 4*128^2*100 + 2*128*100*1600
  CHECK(component_flops(s, {1, ComponentKind::Head, 1}, 128) == 170393600.0);
  // 2*128*1600*6400 each half
  CHECK(component_flops(s, {1, ComponentKind::Ffn1}, 128) == 2621440000.0);
  CHECK(component_flops(s, {1, ComponentKind::Ffn2}, 128) == 2621440000.0);
  // quadratic attention term: doubling n more than doubles head flops
  double f1 = component_flops(s, {1, ComponentKind::Head, 1}, 128);
  double f2 = component_flops(s, {1, ComponentKind::Head, 1}, 256);
  CHECK(f2 > 2.0 * f1);
  CHECK_THROWS_AS(component_flops(s, {1, ComponentKind::Head, 1}, 0), std::invalid_argument);
  CHECK_THROWS_AS(component_flops(s, {0, ComponentKind::Head, 1}, 8), std::invalid_argument);
  CHECK_THROWS_AS(component_flops(s, {1, ComponentKind::Head, 17}, 8), std::invalid_argument);
}

TEST_CASE("component memory and activations, frozen values") {
  auto s = build_model_spec("gpt2-1.5b");
  CHECK(component_memory(s, {1, ComponentKind::Head, 1}) == 2560000.0);  // 4*1600*100*4
  CHECK(component_memory(s, {1, ComponentKind::Ffn1}) == 40985600.0);    // (1600*6400+6400)*4
  CHECK(component_memory(s, {1, ComponentKind::Ffn2}) == 40966400.0);    // (6400*1600+1600)*4
  CHECK(activation_bytes(s, 128, 2) == 409600.0);
  CHECK_THROWS_AS(activation_bytes(s, 0, 2), std::invalid_argument);
}

TEST_CASE("arrival sampling") {
  Rng rng(1);
  CHECK(sample_arrivals(rng, 0.0, 1.0) == 0);
  CHECK_THROWS_AS(sample_arrivals(rng, -1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(sample_arrivals(rng, 1.0, 0.0), std::invalid_argument);
  double total = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) total += sample_arrivals(rng, 3.0, 1.0);
  double mean = total / n;
  CHECK(mean == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("sequence length distributions") {
  WorkloadConfig cfg;
  cfg.seq_len = LognormalLen{5.5, 0.8, 50, 2048};
  RequestSampler sampler(cfg);
  Rng rng(7);
  for (int i = 0; i < 2000; ++i) {
    auto r = sampler.sample(rng, i);
    CHECK(r.seq_len >= 50);
    CHECK(r.seq_len <= 2048);
    CHECK(r.id == static_cast<std::uint64_t>(i));
  }

  WorkloadConfig fixed_cfg;
  fixed_cfg.seq_len = FixedLen{99};
  RequestSampler fs(fixed_cfg);
  CHECK(fs.sample(rng, 0).seq_len == 99);

  WorkloadConfig trace_cfg;
  trace_cfg.seq_len = TraceLen{{10, 20}};
  RequestSampler ts(trace_cfg);
  CHECK(ts.sample(rng, 0).seq_len == 10);
  CHECK(ts.sample(rng, 1).seq_len == 20);
  CHECK_THROWS_AS(ts.sample(rng, 2), std::runtime_error);
}

TEST_CASE("request trace file parsing") {
  const char* path = "test_seq_trace.jsonl";
  {
    std::ofstream out(path);
    out << "{\"n\": 128}\n{\"n\":256}\n\n{\"n\": 512}\n";
  }
  auto t = load_seq_len_trace(path);
  REQUIRE(t.lengths.size() == 3);
  CHECK(t.lengths[0] == 128);
  CHECK(t.lengths[1] == 256);
  CHECK(t.lengths[2] == 512);
  std::remove(path);
  CHECK_THROWS_AS(load_seq_len_trace("no_such_file.jsonl"), std::runtime_error);
}

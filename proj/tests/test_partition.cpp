#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "edgepart/partition.hpp"

using namespace edgepart;

namespace {
ModelSpec toy() { return make_model_spec("toy", 2, 2, 64, 1e6); }
}  // namespace

TEST_CASE("uniform plan builders") {
  auto s = toy();
  auto e = edge_only(s);
  auto c = cloud_only(s);
  REQUIRE(plan_shape_ok(e, s));
  REQUIRE(plan_shape_ok(c, s));
  for (const auto& lp : e.layers) {
    CHECK(lp.ffn == FfnMode::Edge);
    for (auto p : lp.head_placement) CHECK(p == Placement::Edge);
  }
  CHECK(layer_split(s, 0) == c);
  CHECK(layer_split(s, s.layers) == e);
  CHECK_THROWS_AS(layer_split(s, -1), std::invalid_argument);
  CHECK_THROWS_AS(layer_split(s, 3), std::invalid_argument);
}

TEST_CASE("active edge memory, frozen for gpt2") {
  auto g = build_model_spec("gpt2-1.5b");
  // per layer: 16*2560000 + 40985600 + 40966400 = 122912000; 24 layers
  CHECK(active_edge_memory(edge_only(g), g) == 2949888000.0);
  CHECK(active_edge_memory(cloud_only(g), g) == 0.0);

  auto s = toy();
  PartitionPlan p = edge_only(s);
  p.layers[0].ffn = FfnMode::Split;  // keeps FFN1 only
  double full = active_edge_memory(edge_only(s), s);
  double split = active_edge_memory(p, s);
  CHECK(split == full - component_memory(s, {1, ComponentKind::Ffn2}));
}

TEST_CASE("memory validation against device profiles") {
  DeviceProfile dev;  // 8 GB edge
  auto g = build_model_spec("gpt2-1.5b");
  CHECK(validate(edge_only(g), g, dev).ok());
  auto l13 = build_model_spec("llama-13b");
  auto v = validate(edge_only(l13), l13, dev);
  CHECK_FALSE(v.ok());
  CHECK(v.status == ValidationResult::Status::MemoryExceeded);
  CHECK(v.required > v.available);
  // shape mismatch
  CHECK(validate(edge_only(g), l13, dev).status == ValidationResult::Status::ShapeMismatch);
}

TEST_CASE("boundary enumeration on canonical plans") {
  auto s = toy();
  const int n = 16;
  const double act = activation_bytes(s, n, 2);

  CHECK(boundaries(edge_only(s), s, n).empty());

  auto bc = boundaries(cloud_only(s), s, n);
  REQUIRE(bc.size() == 2);
  CHECK(bc[0].kind == BoundaryKind::InputUpload);
  CHECK(bc[0].volume_bytes == act + 4.0 * n);
  CHECK(bc[0].direction == Direction::EdgeToCloud);
  CHECK(bc[1].kind == BoundaryKind::OutputDownload);
  CHECK(bc[1].volume_bytes == act);
  CHECK(bc[1].direction == Direction::CloudToEdge);

  // single layer, one head on each side, FFN on edge: one aggregation inward
  auto s1 = make_model_spec("toy1", 1, 2, 64, 1e6);
  PartitionPlan mixed = edge_only(s1);
  mixed.layers[0].head_placement[1] = Placement::Cloud;
  auto bm = boundaries(mixed, s1, n);
  REQUIRE(bm.size() == 1);
  CHECK(bm[0].kind == BoundaryKind::HeadAggregation);
  CHECK(bm[0].direction == Direction::CloudToEdge);
  CHECK(bm[0].volume_bytes == activation_bytes(s1, n, 2));
}

TEST_CASE("boundary enumeration for layer splits") {
  auto g = build_model_spec("gpt2-1.5b");
  const int n = 64;
  auto bs = boundaries(layer_split(g, 12), g, n);
  REQUIRE(bs.size() == 2);
  CHECK(bs[0].kind == BoundaryKind::InterLayerHandoff);
  CHECK(bs[0].layer == 12);
  CHECK(bs[0].direction == Direction::EdgeToCloud);
  CHECK(bs[1].kind == BoundaryKind::OutputDownload);

  CHECK(boundaries(layer_split(g, g.layers), g, n).empty());  // equals edge_only
  CHECK(layer_split(g, g.layers) == edge_only(g));
}

TEST_CASE("ffn split boundary payload") {
  auto s = toy();
  PartitionPlan p = edge_only(s);
  p.layers[0].ffn = FfnMode::Split;
  auto bs = boundaries(p, s, 16);
  // split sends the FFN hidden to cloud, and since layer 2 runs entirely on
  // edge the layer-1 output (produced on cloud) must come back
  REQUIRE(bs.size() == 2);
  CHECK(bs[0].kind == BoundaryKind::FfnSplit);
  CHECK(bs[0].volume_bytes == 16.0 * s.d_ff * 2);
  CHECK(bs[0].direction == Direction::EdgeToCloud);
  CHECK(bs[1].kind == BoundaryKind::InterLayerHandoff);
  CHECK(bs[1].direction == Direction::CloudToEdge);
}

TEST_CASE("action encoding round trip and sizes") {
  auto s = toy();
  CHECK(action_space_size_per_layer(2) == 12);
  CHECK(action_space_size_per_layer(16) == 196608);
  CHECK_THROWS_AS(action_space_size_per_layer(0), std::invalid_argument);
  CHECK_THROWS_AS(action_space_size_per_layer(62), std::invalid_argument);

  Rng rng(3);
  std::uniform_int_distribution<int> bin(0, 1), tern(0, 2);
  for (int trial = 0; trial < 200; ++trial) {
    PartitionPlan p;
    p.layers.resize(s.layers);
    for (auto& lp : p.layers) {
      lp.head_placement.resize(s.heads);
      for (auto& h : lp.head_placement) h = static_cast<Placement>(bin(rng));
      lp.ffn = static_cast<FfnMode>(tern(rng));
    }
    CHECK(decode(encode(p), s) == p);
  }
  CHECK_THROWS_AS(decode({0, 1, 2}, s), std::invalid_argument);
  CHECK_THROWS_AS(decode({0, 2, 0, 0, 0, 0}, s), std::invalid_argument);  // head symbol 2
}

TEST_CASE("plan hashing and serialization") {
  auto s = toy();
  auto e = edge_only(s);
  auto c = cloud_only(s);
  CHECK(plan_hash(e) != plan_hash(c));
  CHECK(plan_hash(e) == plan_hash(edge_only(s)));

  auto s1 = make_model_spec("toy1", 1, 2, 64, 1e6);
  PartitionPlan p = edge_only(s1);
  p.layers[0].head_placement[1] = Placement::Cloud;
  p.layers[0].ffn = FfnMode::Split;
  CHECK(plan_to_json(p) == "{\"layers\":[{\"heads\":[0,1],\"ffn\":2}]}");
  CHECK(plan_to_matrix_csv(p) == "0,1\n");
}

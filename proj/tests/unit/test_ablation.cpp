#include <random>

#include "catch_amalgamated.hpp"
#include "headprobe/ablation/ablation.hpp"
#include "headprobe/error.hpp"
#include "headprobe/neox/checkpoint.hpp"
#include "headprobe/oracle/random_model.hpp"
#include "helpers.hpp"

using namespace headprobe;
using namespace headprobe::ablation;
using probes::HeadId;

namespace {

neox::ModelConfig config() {
  neox::ModelConfig c;
  c.n_layers = 3;
  c.n_heads = 2;
  c.d_model = 8;
  c.d_head = 4;
  c.vocab_size = 12;
  c.intermediate_size = 16;
  c.rotary_pct = 0.5;
  c.max_positions = 32;
  return c;
}

const neox::Checkpoint& fixture() {
  static const auto ckpt = neox::load_checkpoint(testing::data_dir() / "neox_serial_f16");
  return ckpt;
}

std::vector<probes::AlignedPair> fixture_pairs() {
  struct Row {
    const char *a, *b, *word, *cue_a, *cue_b;
    double rel;
  };
  const Row rows[] = {
      {"She liked the marinated lamb.", "She liked the friendly lamb.", "lamb", "marinated", "friendly", 1.6},
      {"It had a tense atmosphere.", "It had a gaseous atmosphere.", "atmosphere", "tense", "gaseous", 1.2},
      {"He polished the case.", "He filed the case.", "case", "polished", "filed", 2.1},
      {"She saw the wooden beam.", "She saw the bright beam.", "beam", "wooden", "bright", 1.9},
      {"The glass was broken.", "The promise was broken.", "broken", "glass", "promise", 3.4},
  };
  std::vector<probes::AlignedPair> out;
  for (const auto& r : rows) {
    out.push_back({r.word, stimuli::align_spans(fixture().tokenizer, r.a, r.word, r.cue_a),
                   stimuli::align_spans(fixture().tokenizer, r.b, r.word, r.cue_b), r.rel});
  }
  return out;
}

}  // namespace

TEST_CASE("apply_ablation touches only Q and K slices of the listed heads", "[ablation]") {
  std::mt19937_64 rng(9);
  const auto c = config();
  const auto w = oracle::random_weights(c, rng);
  const auto copy = w;
  AblationSpec request;
  request.targets = {{1, 0}, {2, 1}};
  const auto out = apply_ablation(c, w, request);
  CHECK(w == copy);

  const auto a = w.to_named(), b = out.to_named();
  for (const auto& [name, tensor] : a) {
    const auto& other = b.at(name);
    if (name.find("query_key_value") == std::string::npos) {
      REQUIRE(tensor == other);
      continue;
    }
    const bool is_weight = tensor.shape.size() == 2;
    const int layer = name[16] - '0';
    for (std::size_t i = 0; i < tensor.data.size(); ++i) {
      const std::size_t row = is_weight ? i / c.d_model : i;
      const int head = static_cast<int>(row) / (3 * c.d_head);
      const int part = static_cast<int>(row) % (3 * c.d_head) / c.d_head;
      const bool targeted = std::find(request.targets.begin(), request.targets.end(), HeadId{layer, head}) != request.targets.end();
      if (targeted && part < 2) {
        REQUIRE(other.data[i] == 0.0f);
      } else {
        REQUIRE(other.data[i] == tensor.data[i]);
      }
    }
  }
}

TEST_CASE("zero-ablated heads attend uniformly", "[ablation][property]") {
  std::mt19937_64 rng(10);
  const auto c = config();
  for (int trial = 0; trial < 10; ++trial) {
    const auto w = oracle::random_weights(c, rng, 0.8);
    AblationSpec request;
    request.targets = {{static_cast<int>(rng() % 3), static_cast<int>(rng() % 2)}};
    const auto tr = neox::forward(c, apply_ablation(c, w, request), std::vector<int>{3, 1, 4, 1, 5, 9, 2});
    const auto h = request.targets[0];
    for (int q = 0; q < 7; ++q) {
      for (int k = 0; k <= q; ++k) REQUIRE(tr.attention_weight(h.layer, h.head, q, k) == 1.0f / (q + 1));
    }
  }
}

TEST_CASE("ablation leaves earlier layers bitwise identical", "[ablation]") {
  std::mt19937_64 rng(12);
  const auto c = config();
  const auto w = oracle::random_weights(c, rng, 0.8);
  AblationSpec request;
  request.targets = {{2, 0}, {2, 1}};
  neox::CaptureSpec all;
  all.want_logits = true;
  const std::vector<int> tokens{1, 2, 3, 4, 5};
  const auto intact = neox::forward(c, w, tokens, all);
  const auto ablated = neox::forward(c, apply_ablation(c, w, request), tokens, all);
  for (int l = 0; l < 2; ++l) CHECK(intact.attention[l] == ablated.attention[l]);
  for (int l = 0; l <= 2; ++l) CHECK(intact.hidden[l] == ablated.hidden[l]);
  CHECK(intact.logits != ablated.logits);
}

TEST_CASE("copy ablation from the same checkpoint is the identity", "[ablation]") {
  const auto& ck = fixture();
  const auto pairs = fixture_pairs();
  AblationSpec request;
  request.kind = AblationKind::kCopyFromStep;
  request.targets = {{1, 0}, {1, 1}};
  const auto copied = apply_ablation(ck.config, ck.weights, request, &ck.weights);
  CHECK(copied == ck.weights);
  const auto ev = evaluate_ablated(ck.config, ck.weights, request, pairs, 143000, &ck.weights);
  REQUIRE(ev.per_layer.size() == static_cast<std::size_t>(ck.config.n_layers));
  for (const auto& o : ev.per_layer) {
    CHECK(o.delta_r2 == 0.0);
    REQUIRE(o.fraction_intact.has_value());
    CHECK(*o.fraction_intact == 1.0);
  }
  CHECK(ev.mean_delta_r2 == 0.0);
}

TEST_CASE("zero ablation changes the scores of later layers only", "[ablation]") {
  const auto& ck = fixture();
  const auto pairs = fixture_pairs();
  AblationSpec request;
  request.targets = {{1, 0}};
  const auto ev = evaluate_ablated(ck.config, ck.weights, request, pairs, 1000);
  // Block index 1 is hidden index 2; hidden index 1 comes before it.
  CHECK(ev.per_layer[0].layer == 1);
  CHECK(ev.per_layer[0].delta_r2 == 0.0);
  CHECK(ev.per_layer[1].delta_r2 != 0.0);
  for (const auto& o : ev.per_layer) {
    CHECK(std::abs(o.delta_r2 - (o.r2_intact - o.r2_ablated)) <= 1e-12);
    if (o.fraction_intact) CHECK(std::abs(*o.fraction_intact - o.r2_ablated / o.r2_intact) <= 1e-12);
  }
}

TEST_CASE("ablation argument errors", "[ablation]") {
  const auto c = config();
  const auto w = neox::ModelWeights::zeros(c);
  AblationSpec request;
  CHECK_THROWS_AS(apply_ablation(c, w, request), ArgumentError);
  request.targets = {{3, 0}};
  CHECK_THROWS_AS(apply_ablation(c, w, request), ArgumentError);
  request.targets = {{0, 0}};
  request.kind = AblationKind::kCopyFromStep;
  CHECK_THROWS_AS(apply_ablation(c, w, request), ArgumentError);
  auto smaller = c;
  smaller.n_layers = 2;
  const auto other = neox::ModelWeights::zeros(smaller);
  CHECK_THROWS_AS(apply_ablation(c, w, request, &other), ValidationError);
}

TEST_CASE("outcome with zero intact R2 keeps delta", "[ablation]") {
  const auto o = make_outcome(10, 2, 0.0, 0.05);
  CHECK(o.delta_r2 == -0.05);
  CHECK_FALSE(o.fraction_intact.has_value());
  CHECK_FALSE(o.diagnostic.empty());
}

TEST_CASE("condition effect", "[ablation]") {
  const std::vector<std::int64_t> steps{1, 512, 1000, 2000, 143000};
  std::vector<ConditionObservation> same, shifted;
  for (auto s : steps) {
    const double base = 0.01 * std::log10(s + 1.0) + 0.001 * (s % 7);
    same.push_back({base, Condition::kTarget, s});
    same.push_back({base, Condition::kBaseline, s});
    shifted.push_back({base + 0.1, Condition::kTarget, s});
    shifted.push_back({base, Condition::kBaseline, s});
  }
  CHECK(std::abs(condition_effect(same).coefficient) < 1e-12);
  CHECK(std::abs(condition_effect(shifted).coefficient - 0.1) < 1e-12);
  CHECK(std::abs(condition_effect(shifted, true).coefficient - 0.1) < 1e-9);
  std::vector<ConditionObservation> one(same.begin(), same.begin() + 1);
  for (auto s : steps) one.push_back({0.1, Condition::kTarget, s});
  CHECK_THROWS_AS(condition_effect(one), ArgumentError);
}

TEST_CASE("default head sets", "[ablation]") {
  const auto small = default_head_sets("pythia-14m");
  REQUIRE(small.targets.size() == 3);
  CHECK(small.targets[2].heads == std::vector<HeadId>{HeadId::parse("3,1"), HeadId::parse("3,2")});
  CHECK(small.baselines[2].heads == std::vector<HeadId>{HeadId::parse("3,3"), HeadId::parse("3,4")});

  std::vector<probes::CompositeIndexRow> comp;
  for (int l = 0; l < 24; ++l) {
    for (int h = 0; h < 16; ++h) {
      probes::CompositeIndexRow r;
      r.head = {l, h};
      r.composite = (h % 5 == 0) ? -3.0 : static_cast<double>(h) / 10;
      comp.push_back(r);
    }
  }
  const auto big = default_head_sets("pythia-410m", comp);
  REQUIRE(big.targets.size() == 6);
  CHECK(big.targets[0].heads[0].label() == "(1,14)");
  REQUIRE(big.baselines.size() == 6);
  std::set<HeadId> seen;
  for (std::size_t i = 0; i < 6; ++i) {
    const auto control = big.baselines[i].heads[0];
    CHECK(control.layer == big.targets[i].heads[0].layer);
    CHECK(seen.insert(control).second);
  }
  // Layer 1 controls: lowest composite first (heads 1, 6, 11 at -3), then ties by head index.
  CHECK(big.baselines[0].heads[0].label() == "(1,1)");
  CHECK(big.baselines[2].heads[0].label() == "(1,6)");
  CHECK(big.baselines[5].heads[0].label() == "(1,11)");
  CHECK_THROWS_AS(default_head_sets("gpt2"), ArgumentError);
}

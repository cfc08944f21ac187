#include <catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <random>

#include "fake_hub.hpp"
#include "headprobe/error.hpp"
#include "headprobe/hub/hub.hpp"
#include "helpers.hpp"

using namespace headprobe;
using namespace headprobe::hub;
namespace fs = std::filesystem;

namespace {

std::string random_bytes(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::string s(n, '\0');
  for (auto& c : s) c = static_cast<char>(rng() & 0xff);
  return s;
}

testing::FakeHub::Revision checkpoint_files(unsigned seed) {
  return {
      {"config.json", {R"({"hidden_size": 8})", false, ""}},
      {"tokenizer.json", {R"({"model": {}})", false, ""}},
      {"model.safetensors", {random_bytes(200000, seed), true, ""}},
      {"README.md", {"ignored", false, ""}},
  };
}

HubOptions options_for(const testing::FakeHub& hub, const fs::path& cache) {
  HubOptions o;
  o.base_url = hub.url();
  o.cache_root = cache;
  o.retry.initial_delay_s = 0.01;
  o.retry.max_delay_s = 0.02;
  o.timeout_s = 30;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("file digests match sha256sum and git hash-object") {
  auto dir = testing::scratch_dir("digest");
  const fs::path f = dir / "blob.bin";
  std::ofstream(f, std::ios::binary) << "abc";
  CHECK(sha256_file(f) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  // git hash-object of "abc" without newline
  CHECK(git_blob_sha1_file(f) == "f2ba8f84ab5c1bce84a7b441cb1959cfc7093b7f");
  const fs::path empty = dir / "empty";
  std::ofstream(empty).close();
  CHECK(git_blob_sha1_file(empty) == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  fs::remove_all(dir);
}

TEST_CASE("fetch downloads the checkpoint files and a warm cache makes no requests") {
  testing::FakeHub fake;
  const auto files = checkpoint_files(1);
  fake.add("EleutherAI/pythia-14m", "step1000", files);
  auto cache = testing::scratch_dir("hub-warm");

  HubClient client(options_for(fake, cache));
  auto ref = client.fetch_checkpoint("EleutherAI/pythia-14m", "step1000");
  CHECK(ref.local_dir == cache / "EleutherAI/pythia-14m/step1000");
  REQUIRE(ref.files.size() == 3);
  for (const char* name : {"config.json", "tokenizer.json", "model.safetensors"}) {
    CHECK(slurp(ref.local_dir / name) == files.at(name).content);
  }
  CHECK_FALSE(fs::exists(ref.local_dir / "README.md"));
  CHECK(client.stats().files_downloaded == 3);
  CHECK(fs::exists(ref.local_dir / ".ref.json"));

  const int before = fake.requests;
  HubClient again(options_for(fake, cache));
  auto warm = again.fetch_checkpoint("EleutherAI/pythia-14m", "step1000");
  CHECK(fake.requests == before);
  CHECK(again.stats().requests == 0);
  CHECK(again.stats().files_reused == 3);
  CHECK(warm.files == ref.files);
  fs::remove_all(cache);
}

TEST_CASE("partial downloads resume with a range request") {
  testing::FakeHub fake;
  const auto files = checkpoint_files(2);
  fake.add("org/model", "step5", files);
  auto cache = testing::scratch_dir("hub-resume");
  const fs::path dir = cache / "org/model/step5";
  fs::create_directories(dir);
  const auto& weights = files.at("model.safetensors").content;
  std::ofstream(dir / "model.safetensors.part", std::ios::binary) << weights.substr(0, 70000);

  HubClient client(options_for(fake, cache));
  client.fetch_checkpoint("org/model", "step5");
  CHECK(fake.range_requests == 1);
  CHECK(slurp(dir / "model.safetensors") == weights);
  CHECK(client.stats().bytes_downloaded < weights.size() + 200);
  CHECK_FALSE(fs::exists(dir / "model.safetensors.part"));
  fs::remove_all(cache);
}

TEST_CASE("transient server errors are retried") {
  testing::FakeHub fake;
  fake.add("org/model", "main", checkpoint_files(3));
  fake.fail_downloads = 2;
  auto cache = testing::scratch_dir("hub-retry");
  HubClient client(options_for(fake, cache));
  client.fetch_checkpoint("org/model", "main");
  CHECK(client.stats().files_downloaded == 3);

  testing::FakeHub down;
  down.add("org/model", "main", checkpoint_files(3));
  down.fail_downloads = 100;
  auto cache2 = testing::scratch_dir("hub-retry2");
  HubClient give_up(options_for(down, cache2));
  CHECK_THROWS_AS(give_up.fetch_checkpoint("org/model", "main"), NetworkError);
  fs::remove_all(cache);
  fs::remove_all(cache2);
}

TEST_CASE("a digest mismatch quarantines the file") {
  testing::FakeHub fake;
  auto files = checkpoint_files(4);
  files["model.safetensors"].listed_sha256 = std::string(64, 'a');
  fake.add("org/model", "step7", files);
  auto cache = testing::scratch_dir("hub-integrity");
  HubClient client(options_for(fake, cache));
  CHECK_THROWS_AS(client.fetch_checkpoint("org/model", "step7"), IntegrityError);
  const fs::path dir = cache / "org/model/step7";
  CHECK_FALSE(fs::exists(dir / "model.safetensors"));
  CHECK_FALSE(fs::exists(dir / "model.safetensors.part"));
  CHECK_FALSE(fs::exists(dir / ".ref.json"));
  CHECK_FALSE(fs::is_empty(cache / ".quarantine/org/model/step7"));
  fs::remove_all(cache);
}

TEST_CASE("a corrupted cached file is quarantined on revalidation") {
  testing::FakeHub fake;
  fake.add("org/model", "step9", checkpoint_files(5));
  auto cache = testing::scratch_dir("hub-corrupt");
  HubClient(options_for(fake, cache)).fetch_checkpoint("org/model", "step9");
  const fs::path w = cache / "org/model/step9/model.safetensors";
  {
    std::fstream f(w, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(100);
    f.put('\x7f');
    f.put('\x01');
  }
  HubClient client(options_for(fake, cache));
  CHECK_THROWS_AS(client.fetch_checkpoint("org/model", "step9"), IntegrityError);
  CHECK_FALSE(fs::exists(w));
  // The next fetch downloads a fresh copy.
  HubClient(options_for(fake, cache)).fetch_checkpoint("org/model", "step9");
  CHECK(fs::exists(w));
  fs::remove_all(cache);
}

TEST_CASE("an unknown revision lists nearby revisions and leaves no state") {
  testing::FakeHub fake;
  for (int step : {1000, 2000, 3000, 100000}) fake.add("org/model", revision_name(step), checkpoint_files(6));
  auto cache = testing::scratch_dir("hub-missing");
  HubClient client(options_for(fake, cache));
  try {
    client.fetch_checkpoint("org/model", "step2500");
    FAIL("expected NotFoundError");
  } catch (const NotFoundError& e) {
    const std::string msg = e.what();
    INFO(msg);
    CHECK(msg.find("step2500") != std::string::npos);
    CHECK(msg.find("step2000") != std::string::npos);
    CHECK(msg.find("step2000") < msg.find("step100000"));
  }
  CHECK(fs::is_empty(cache));
  CHECK_THROWS_AS(client.fetch_checkpoint("nobody/nothing", "main"), NotFoundError);
  CHECK(fs::is_empty(cache));
  fs::remove_all(cache);
}

TEST_CASE("an unreachable hub raises NetworkError without touching the cache") {
  auto cache = testing::scratch_dir("hub-offline");
  HubOptions o;
  o.base_url = "http://127.0.0.1:1";
  o.cache_root = cache;
  o.retry.attempts = 2;
  o.retry.initial_delay_s = 0.01;
  HubClient client(o);
  CHECK_THROWS_AS(client.fetch_checkpoint("org/model", "step1"), NetworkError);
  CHECK(fs::is_empty(cache));
  fs::remove_all(cache);
}

TEST_CASE("revisions without safetensors weights are reported") {
  testing::FakeHub fake;
  fake.add("org/model", "step1", {{"config.json", {"{}", false, ""}},
                                  {"tokenizer.json", {"{}", false, ""}},
                                  {"pytorch_model.bin", {"weights", true, ""}}});
  auto cache = testing::scratch_dir("hub-bin");
  CHECK_THROWS_AS(HubClient(options_for(fake, cache)).fetch_checkpoint("org/model", "step1"), NotFoundError);
  auto o = options_for(fake, cache);
  o.include_pytorch_bin = true;
  auto ref = HubClient(o).fetch_checkpoint("org/model", "step1");
  CHECK(fs::exists(ref.local_dir / "pytorch_model.bin"));
  fs::remove_all(cache);
}

TEST_CASE("checkpoint schedules") {
  const auto p20 = checkpoint_schedule("paper20");
  CHECK(p20.size() == 20);
  CHECK(p20.front() == 0);
  CHECK(p20.back() == 143000);
  CHECK(std::is_sorted(p20.begin(), p20.end()));
  const auto all = checkpoint_schedule("all14m");
  CHECK(all.size() == 154);
  CHECK(all[10] == 512);
  CHECK(all[11] == 1000);
  CHECK(all.back() == 143000);
  CHECK(checkpoint_schedule(std::vector<std::int64_t>{0, 5, 9}) == std::vector<std::int64_t>{0, 5, 9});
  CHECK_THROWS_AS(checkpoint_schedule(std::vector<std::int64_t>{}), ArgumentError);
  CHECK_THROWS_AS(checkpoint_schedule(std::vector<std::int64_t>{5, 5}), ArgumentError);
  CHECK_THROWS_AS(checkpoint_schedule("weekly"), ArgumentError);
  CHECK(revision_name(143000) == "step143000");
}

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "sme/dataset.hpp"

using namespace sme;

namespace {

Environment env_with(int depth, std::uint64_t seed = 1) {
  EnvConfig cfg;
  cfg.master_seed = seed;
  cfg.policy_complexity = depth;
  return Environment(cfg);
}

double mean_similarity(const Environment& env, double nu, std::uint64_t n) {
  BehaviorPolicy bp(env, nu);
  return collect_dataset(env, bp, n, [](const TransitionRecord&) {}).mean_tilde_r;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "sme_dataset_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Behavior, ZeroNoiseIsOptimal) {
  const auto env = env_with(1);
  BehaviorPolicy bp(env, 0.0);
  RandomStream rs(1, 60);
  std::vector<double> s(8);
  for (int i = 0; i < 1000; ++i) {
    for (auto& v : s) v = rs.uniform();
    ASSERT_EQ(behavior_action(bp, s), optimal_action(env.policy(), s));
  }
}

TEST(Behavior, ActionIsBetweenOptimalAndNoise) {
  const auto env = env_with(5);
  BehaviorPolicy bp(env, 0.7);
  RandomStream rs(1, 61);
  std::vector<double> s(8);
  for (int i = 0; i < 1000; ++i) {
    for (auto& v : s) v = rs.uniform();
    const auto out = bp.sample(s);
    ASSERT_GE(out.alpha, 0.0);
    ASSERT_LT(out.alpha, 0.7);
    for (std::size_t j = 0; j < 4; ++j) {
      ASSERT_GE(out.action[j], std::min(out.a_star[j], out.noise_action[j]));
      ASSERT_LE(out.action[j], std::max(out.a_star[j], out.noise_action[j]));
      ASSERT_GT(out.action[j], 0.0);
      ASSERT_LT(out.action[j], 1.0);
    }
  }
  EXPECT_THROW(BehaviorPolicy(env, 1.5), ValidationError);
}

TEST(Behavior, NoiseDunIsIndependentOfOptimal) {
  const auto env = env_with(1);
  BehaviorPolicy bp(env, 1.0);
  EXPECT_NE(bp.noise_policy(), env.policy());
}

TEST(Collection, ZeroNoiseMeanIsOne) {
  EXPECT_NEAR(mean_similarity(env_with(1), 0.0, 50000), 1.0, 1e-9);
}

TEST(Collection, MeanFollowsAnalyticOracle) {
  for (int depth : {1, 10}) {
    const auto env = env_with(depth);
    double previous = 1.0;
    for (double nu : {0.1, 0.25, 0.5, 1.0}) {
      const double m = mean_similarity(env, nu, 50000);
      EXPECT_NEAR(m, oracle::behavior_similarity(nu), 0.03) << "nu=" << nu << " depth=" << depth;
      EXPECT_LT(m, previous);
      previous = m;
    }
  }
  const double half = mean_similarity(env_with(1), 0.5, 50000);
  EXPECT_GE(half, 0.87);
  EXPECT_LE(half, 0.95);
}

TEST(Collection, RecordsAreConsistent) {
  const auto env = env_with(1);
  BehaviorPolicy bp(env, 0.5);
  std::vector<TransitionRecord> records;
  const auto m = collect_dataset(env, bp, 250, [&](const TransitionRecord& r) { records.push_back(r); });
  ASSERT_EQ(records.size(), 250u);
  EXPECT_EQ(m.episodes, 3u);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    ASSERT_NEAR(r.tilde_r, baseline_similarity(r.a, r.a_star), 1e-9);
    ASSERT_EQ(r.s_next, step_transition(env.kernel(), r.s, r.a));
    ASSERT_EQ(r.R, r.r_step);
    ASSERT_EQ(r.truncated, i % 100 == 99);
    if (i + 1 < records.size() && !r.truncated) ASSERT_EQ(records[i + 1].s, r.s_next);
  }
}

TEST(Format, RecordSize) {
  EXPECT_EQ(record_bytes(8, 4), 8u * (16 + 8 + 3) + 1);
}

TEST(Format, WriteReadRoundTrip) {
  const auto env = env_with(1);
  BehaviorPolicy bp(env, 0.25);
  const auto prefix = scratch("roundtrip");
  const auto m = collect_dataset_to_files(env, bp, 1234, prefix);
  const auto ds = read_dataset(prefix);
  EXPECT_EQ(ds.manifest.n_records, 1234u);
  EXPECT_EQ(ds.manifest.checksum, m.checksum);

  BehaviorPolicy again(env, 0.25);
  std::vector<TransitionRecord> expected;
  collect_dataset(env, again, 1234, [&](const TransitionRecord& r) { expected.push_back(r); });
  ASSERT_EQ(ds.records.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) ASSERT_EQ(ds.records[i], expected[i]) << i;

  const auto rewritten = scratch("rewritten");
  write_dataset(rewritten, ds.manifest, ds.records);
  EXPECT_EQ(read_text_file(dataset_bin_path(rewritten)), read_text_file(dataset_bin_path(prefix)));
}

TEST(Format, HeaderLayout) {
  const auto env = env_with(1);
  BehaviorPolicy bp(env, 0.0);
  const auto prefix = scratch("header");
  collect_dataset_to_files(env, bp, 3, prefix);
  const auto raw = read_text_file(dataset_bin_path(prefix));
  EXPECT_EQ(raw.substr(0, 8), "SMEDATA1");
  EXPECT_EQ(static_cast<unsigned char>(raw[8]), 3);
  EXPECT_EQ(raw[9] | raw[10] | raw[11], 0);
  EXPECT_EQ(raw.size(), 12 + 3 * record_bytes(8, 4));
}

TEST(Format, TruncatedFileReportsRecordIndex) {
  const auto env = env_with(1);
  BehaviorPolicy bp(env, 0.1);
  const auto prefix = scratch("truncated");
  collect_dataset_to_files(env, bp, 10, prefix);
  const auto bin = dataset_bin_path(prefix);
  std::filesystem::resize_file(bin, 12 + 6 * record_bytes(8, 4) + 17);
  try {
    read_dataset(prefix);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("record 6"), std::string::npos) << e.what();
  }
}

TEST(Format, ManifestDimensionMismatch) {
  const auto env = env_with(1);
  BehaviorPolicy bp(env, 0.1);
  const auto prefix = scratch("mismatch");
  collect_dataset_to_files(env, bp, 10, prefix);
  auto j = nlohmann::ordered_json::parse(read_text_file(dataset_manifest_path(prefix)));
  j["n_state"] = 9;
  write_file_atomic(dataset_manifest_path(prefix), j.dump());
  EXPECT_THROW(read_dataset(prefix), FormatError);

  j["config"]["n_state"] = 9;
  j["record_bytes"] = record_bytes(9, 4);
  write_file_atomic(dataset_manifest_path(prefix), j.dump());
  EXPECT_THROW(read_dataset(prefix), FormatError);
}

TEST(Format, ChecksumMismatch) {
  const auto env = env_with(1);
  BehaviorPolicy bp(env, 0.1);
  const auto prefix = scratch("checksum");
  collect_dataset_to_files(env, bp, 10, prefix);
  std::fstream f(dataset_bin_path(prefix), std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(40);
  f.put('\x7f');
  f.close();
  EXPECT_THROW(read_dataset(prefix), FormatError);
}

TEST(Codec, Base64AndFnv) {
  const std::string text = "foobar";
  const std::vector<std::uint8_t> bytes(text.begin(), text.end());
  EXPECT_EQ(codec::base64_encode(bytes), "Zm9vYmFy");
  EXPECT_EQ(codec::base64_encode(std::span(bytes).first(4)), "Zm9vYg==");
  EXPECT_EQ(codec::base64_decode("Zm9vYg=="), std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 4));
  EXPECT_THROW(codec::base64_decode("Zm9*"), FormatError);
  EXPECT_EQ(codec::fnv1a(std::span<const std::uint8_t>()), 0xcbf29ce484222325ULL);
  EXPECT_EQ(codec::hex64(codec::fnv1a(bytes)), "85944171f73967e8");
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sme/codec.hpp"
#include "sme/config.hpp"
#include "sme/environment.hpp"
#include "sme/io.hpp"
#include "sme/policy.hpp"
#include "sme/random.hpp"

namespace sme {

// Behavior policy ---------------------------------------------------------------

/// a = (1 - alpha) a* + alpha a_noise with alpha ~ U(0, nu) drawn per call and
/// a_noise from an independent DUN of the same architecture.
class BehaviorPolicy {
 public:
  BehaviorPolicy(const Environment& env, double max_noise)
      : optimal_(&env.policy()),
        max_noise_(max_noise),
        alpha_stream_(derive_stream(env.config().master_seed, StreamId::behavior_alpha)) {
    if (!(max_noise >= 0.0 && max_noise <= 1.0)) throw ValidationError("max noise level must lie in [0,1]");
    auto noise_stream = derive_stream(env.config().master_seed, StreamId::noise_policy);
    noise_ = build_policy(env.config(), noise_stream);
  }

  BehaviorPolicy(const DunPolicy& optimal, DunPolicy noise, double max_noise, RandomStream alpha_stream)
      : optimal_(&optimal), noise_(std::move(noise)), max_noise_(max_noise), alpha_stream_(alpha_stream) {
    if (!(max_noise >= 0.0 && max_noise <= 1.0)) throw ValidationError("max noise level must lie in [0,1]");
    if (noise_.input_dim() != optimal.input_dim() || noise_.output_dim() != optimal.output_dim()) {
      throw ValidationError("noise policy shape does not match the optimal policy");
    }
  }

  struct Sample {
    std::vector<double> action;
    std::vector<double> a_star;
    std::vector<double> noise_action;
    double alpha = 0.0;
  };

  Sample sample(std::span<const double> s) {
    Sample out;
    out.a_star = optimal_action(*optimal_, s);
    out.noise_action = optimal_action(noise_, s);
    out.alpha = max_noise_ * alpha_stream_.uniform();
    out.action.resize(out.a_star.size());
    for (std::size_t i = 0; i < out.action.size(); ++i) {
      out.action[i] = (1.0 - out.alpha) * out.a_star[i] + out.alpha * out.noise_action[i];
    }
    return out;
  }

  [[nodiscard]] double max_noise() const noexcept { return max_noise_; }
  [[nodiscard]] const DunPolicy& noise_policy() const noexcept { return noise_; }

 private:
  const DunPolicy* optimal_;
  DunPolicy noise_;
  double max_noise_;
  RandomStream alpha_stream_;
};

inline std::vector<double> behavior_action(BehaviorPolicy& bp, std::span<const double> s) {
  return bp.sample(s).action;
}

// Records and binary format --------------------------------------------------------

struct TransitionRecord {
  std::vector<double> s;
  std::vector<double> a;
  std::vector<double> a_star;
  double R = 0.0;
  double r_step = 0.0;
  double tilde_r = 0.0;
  std::vector<double> s_next;
  bool terminated = false;
  bool truncated = false;

  friend bool operator==(const TransitionRecord&, const TransitionRecord&) = default;
};

inline constexpr std::string_view dataset_magic = "SMEDATA1";
inline constexpr std::size_t dataset_header_bytes = 8 + 4;
inline constexpr int dataset_format_version = 1;

inline constexpr std::size_t record_bytes(std::size_t n_state, std::size_t n_action) noexcept {
  return 8 * (2 * n_state + 2 * n_action + 3) + 1;
}

inline void encode_record(std::vector<std::uint8_t>& out, const TransitionRecord& rec) {
  for (double v : rec.s) codec::append_f64_le(out, v);
  for (double v : rec.a) codec::append_f64_le(out, v);
  for (double v : rec.a_star) codec::append_f64_le(out, v);
  codec::append_f64_le(out, rec.R);
  codec::append_f64_le(out, rec.r_step);
  codec::append_f64_le(out, rec.tilde_r);
  for (double v : rec.s_next) codec::append_f64_le(out, v);
  out.push_back(static_cast<std::uint8_t>((rec.terminated ? 1u : 0u) | (rec.truncated ? 2u : 0u)));
}

inline TransitionRecord decode_record(const std::uint8_t* p, std::size_t ns, std::size_t na) {
  TransitionRecord rec;
  auto take = [&p](std::vector<double>& v, std::size_t n) {
    v.resize(n);
    for (auto& x : v) {
      x = codec::read_f64_le(p);
      p += 8;
    }
  };
  auto scalar = [&p] {
    const double x = codec::read_f64_le(p);
    p += 8;
    return x;
  };
  take(rec.s, ns);
  take(rec.a, na);
  take(rec.a_star, na);
  rec.R = scalar();
  rec.r_step = scalar();
  rec.tilde_r = scalar();
  take(rec.s_next, ns);
  const std::uint8_t flags = *p;
  if (flags > 3) throw FormatError("invalid record flags byte");
  rec.terminated = (flags & 1u) != 0;
  rec.truncated = (flags & 2u) != 0;
  return rec;
}

/// Metadata written next to the binary record file.
struct DatasetManifest {
  EnvConfig config;
  bool payout_on_termination = true;
  double max_noise = 0.0;
  std::uint64_t n_records = 0;
  std::uint64_t episodes = 0;
  double mean_tilde_r = 0.0;
  std::string checksum;  // FNV-1a of the record bytes (header excluded), hex

  [[nodiscard]] std::size_t n_state() const noexcept { return static_cast<std::size_t>(config.n_state); }
  [[nodiscard]] std::size_t n_action() const noexcept { return static_cast<std::size_t>(config.n_action); }
};

inline nlohmann::ordered_json dataset_manifest_json(const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["format_version"] = dataset_format_version;
  j["magic"] = std::string(dataset_magic);
  j["config"] = config_to_json(m.config);
  j["payout_on_termination"] = m.payout_on_termination;
  j["nu"] = m.max_noise;
  j["n_records"] = m.n_records;
  j["n_state"] = m.config.n_state;
  j["n_action"] = m.config.n_action;
  j["record_bytes"] = record_bytes(m.n_state(), m.n_action());
  j["episodes"] = m.episodes;
  j["mean_tilde_r"] = m.mean_tilde_r;
  j["checksum"] = m.checksum;
  return j;
}

template <typename Json>
DatasetManifest dataset_manifest_from_json(const Json& j) {
  try {
    if (j.at("format_version") != dataset_format_version) throw FormatError("unsupported dataset format_version");
    if (j.at("magic") != std::string(dataset_magic)) throw FormatError("dataset manifest magic mismatch");
    DatasetManifest m;
    m.config = config_from_json(j.at("config"));
    m.payout_on_termination = j.value("payout_on_termination", true);
    m.max_noise = j.at("nu").template get<double>();
    m.n_records = j.at("n_records").template get<std::uint64_t>();
    m.episodes = j.value("episodes", std::uint64_t{0});
    m.mean_tilde_r = j.value("mean_tilde_r", 0.0);
    m.checksum = j.at("checksum").template get<std::string>();
    if (j.at("n_state").template get<long long>() != m.config.n_state ||
        j.at("n_action").template get<long long>() != m.config.n_action) {
      throw FormatError("dataset manifest dimensions disagree with its config");
    }
    if (j.at("record_bytes").template get<std::size_t>() != record_bytes(m.n_state(), m.n_action())) {
      throw FormatError("dataset manifest record_bytes disagrees with its dimensions");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed dataset manifest: ") + e.what());
  }
}

/// Streams records into <prefix>.bin. The record count in the header is
/// patched on finish(); the file is renamed into place only then.
class DatasetWriter {
 public:
  DatasetWriter(std::filesystem::path bin_path, std::size_t n_state, std::size_t n_action)
      : path_(std::move(bin_path)), tmp_(path_), n_state_(n_state), n_action_(n_action) {
    tmp_ += ".tmp";
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot open " + tmp_.string() + " for writing");
    std::vector<std::uint8_t> header(dataset_magic.begin(), dataset_magic.end());
    codec::append_u32_le(header, 0);
    write(header);
  }

  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  ~DatasetWriter() {
    if (!finished_) {
      out_.close();
      std::error_code ec;
      std::filesystem::remove(tmp_, ec);
    }
  }

  void append(const TransitionRecord& rec) {
    if (finished_) throw Error("DatasetWriter: append after finish");
    if (rec.s.size() != n_state_ || rec.s_next.size() != n_state_ || rec.a.size() != n_action_ ||
        rec.a_star.size() != n_action_) {
      throw ValidationError("record dimensions do not match the dataset");
    }
    if (count_ == UINT32_MAX) throw ValidationError("dataset record count exceeds the u32 header field");
    buffer_.clear();
    encode_record(buffer_, rec);
    hash_.update(buffer_);
    write(buffer_);
    ++count_;
  }

  /// Returns the record checksum (hex).
  std::string finish() {
    if (finished_) throw Error("DatasetWriter: finish called twice");
    std::vector<std::uint8_t> count;
    codec::append_u32_le(count, count_);
    out_.seekp(static_cast<std::streamoff>(dataset_magic.size()));
    write(count);
    out_.close();
    if (!out_) throw IoError("write failed for " + tmp_.string());
    std::error_code ec;
    std::filesystem::rename(tmp_, path_, ec);
    if (ec) throw IoError("cannot rename " + tmp_.string() + ": " + ec.message());
    finished_ = true;
    return codec::hex64(hash_.digest());
  }

  [[nodiscard]] std::uint32_t count() const noexcept { return count_; }

 private:
  void write(std::span<const std::uint8_t> bytes) {
    out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out_) throw IoError("write failed for " + tmp_.string());
  }

  std::filesystem::path path_;
  std::filesystem::path tmp_;
  std::size_t n_state_;
  std::size_t n_action_;
  std::ofstream out_;
  std::vector<std::uint8_t> buffer_;
  codec::Fnv1a hash_;
  std::uint32_t count_ = 0;
  bool finished_ = false;
};

inline std::filesystem::path dataset_bin_path(const std::filesystem::path& prefix) {
  auto p = prefix;
  p += ".bin";
  return p;
}

inline std::filesystem::path dataset_manifest_path(const std::filesystem::path& prefix) {
  auto p = prefix;
  p += ".json";
  return p;
}

/// Decodes a record file image against its manifest.
inline std::vector<TransitionRecord> decode_dataset(std::span<const std::uint8_t> bytes, const DatasetManifest& m) {
  if (bytes.size() < dataset_header_bytes ||
      std::string_view(reinterpret_cast<const char*>(bytes.data()), dataset_magic.size()) != dataset_magic) {
    throw FormatError("dataset magic mismatch");
  }
  const std::uint32_t count = codec::read_u32_le(bytes.data() + dataset_magic.size());
  if (count != m.n_records) {
    throw FormatError("dataset header holds " + std::to_string(count) + " records, manifest says " +
                      std::to_string(m.n_records));
  }
  const std::size_t rb = record_bytes(m.n_state(), m.n_action());
  const std::size_t body = bytes.size() - dataset_header_bytes;
  if (body < static_cast<std::size_t>(count) * rb) {
    throw FormatError("dataset truncated at record " + std::to_string(body / rb) + " of " + std::to_string(count));
  }
  if (body != static_cast<std::size_t>(count) * rb) {
    throw FormatError("dataset size does not match the manifest's record layout (n_state/n_action mismatch?)");
  }
  const auto records_bytes = bytes.subspan(dataset_header_bytes);
  if (codec::hex64(codec::fnv1a(records_bytes)) != m.checksum) throw FormatError("dataset checksum mismatch");
  std::vector<TransitionRecord> records;
  records.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    records.push_back(decode_record(records_bytes.data() + i * rb, m.n_state(), m.n_action()));
  }
  return records;
}

struct Dataset {
  DatasetManifest manifest;
  std::vector<TransitionRecord> records;
};

inline Dataset read_dataset(const std::filesystem::path& prefix) {
  Dataset ds;
  try {
    ds.manifest = dataset_manifest_from_json(nlohmann::ordered_json::parse(read_text_file(dataset_manifest_path(prefix))));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("dataset manifest is not valid JSON: ") + e.what());
  }
  const std::string raw = read_text_file(dataset_bin_path(prefix));
  const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size());
  ds.records = decode_dataset(bytes, ds.manifest);
  return ds;
}

/// Writes records plus manifest; the manifest's count and checksum are
/// filled in from the records.
inline DatasetManifest write_dataset(const std::filesystem::path& prefix, DatasetManifest manifest,
                                     std::span<const TransitionRecord> records) {
  DatasetWriter writer(dataset_bin_path(prefix), manifest.n_state(), manifest.n_action());
  for (const auto& rec : records) writer.append(rec);
  manifest.checksum = writer.finish();
  manifest.n_records = records.size();
  write_file_atomic(dataset_manifest_path(prefix), dataset_manifest_json(manifest).dump(2) + "\n");
  return manifest;
}

// Collection -----------------------------------------------------------------------

/// Rolls the behavior policy (episode e reset with seed e, reset on done)
/// until n_transitions records have been handed to `sink`. Payouts are
/// logged with k = 1 whatever the config says; r_step is logged too.
template <typename Sink>
DatasetManifest collect_dataset(const Environment& env, BehaviorPolicy& bp, std::uint64_t n_transitions, Sink&& sink) {
  if (n_transitions < 1) throw ValidationError("collect_dataset: n_transitions must be ≥ 1");
  EnvConfig log_cfg = env.config();
  log_cfg.reward_interval = 1;
  Environment log_env(log_cfg, env.kernel(), env.policy(), env.payout_on_termination());

  DatasetManifest m;
  m.config = env.config();
  m.payout_on_termination = env.payout_on_termination();
  m.max_noise = bp.max_noise();
  double tilde_sum = 0.0;
  std::uint64_t written = 0;
  while (written < n_transitions) {
    log_env.reset(m.episodes++);
    while (written < n_transitions) {
      TransitionRecord rec;
      rec.s = log_env.episode()->s;
      rec.a = behavior_action(bp, rec.s);
      auto step = log_env.step(rec.a);
      rec.a_star = std::move(step.info.a_star);
      rec.R = step.reward;
      rec.r_step = step.info.r;
      rec.tilde_r = step.info.tilde_r;
      rec.s_next = log_env.episode()->s;
      rec.terminated = step.terminated;
      rec.truncated = step.truncated;
      tilde_sum += rec.tilde_r;
      sink(rec);
      ++written;
      if (step.terminated || step.truncated) break;
    }
  }
  m.n_records = written;
  m.mean_tilde_r = tilde_sum / static_cast<double>(written);
  return m;
}

/// collect_dataset straight to <prefix>.bin / <prefix>.json.
inline DatasetManifest collect_dataset_to_files(const Environment& env, BehaviorPolicy& bp, std::uint64_t n_transitions,
                                                const std::filesystem::path& prefix) {
  DatasetWriter writer(dataset_bin_path(prefix), static_cast<std::size_t>(env.config().n_state), env.action_dim());
  auto manifest = collect_dataset(env, bp, n_transitions, [&writer](const TransitionRecord& r) { writer.append(r); });
  manifest.checksum = writer.finish();
  write_file_atomic(dataset_manifest_path(prefix), dataset_manifest_json(manifest).dump(2) + "\n");
  return manifest;
}

}  // namespace sme

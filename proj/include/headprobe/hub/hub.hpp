#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace headprobe::hub {

struct FileEntry {
  std::string name;
  std::uint64_t size = 0;
  // "sha256:<hex>" for LFS objects, "git-sha1:<hex>" (git blob hash) otherwise.
  std::string digest;

  friend bool operator==(const FileEntry&, const FileEntry&) = default;
};

struct CheckpointRef {
  std::string repo_id;
  std::string revision;
  std::filesystem::path local_dir;
  std::vector<FileEntry> files;
};

struct RetryPolicy {
  int attempts = 3;
  double initial_delay_s = 1.0;
  double max_delay_s = 30.0;
};

struct HubOptions {
  std::string base_url = "https://huggingface.co";
  std::optional<std::string> token;
  std::filesystem::path cache_root;
  RetryPolicy retry;
  long timeout_s = 600;
  // Also fetch pytorch_model.bin files (for revisions without safetensors).
  bool include_pytorch_bin = false;

  // HEADPROBE_HUB_URL, HEADPROBE_HUB_TOKEN (or HF_TOKEN), HEADPROBE_CACHE
  // (default ~/.cache/headprobe).
  static HubOptions from_env();
};

struct TransferStats {
  std::uint64_t bytes_downloaded = 0;
  std::size_t files_downloaded = 0;
  std::size_t files_reused = 0;
  std::size_t requests = 0;
};

// Downloads checkpoint files into cache_root/<repo>/<revision>/<file>.
//
// A completed revision carries a `.ref.json` listing its files; later calls
// revalidate size and digest locally and make no requests. Downloads go to
// "<file>.part" (resumed with a Range request) and are renamed into place
// under an exclusive lock on "<file>.lock". A digest mismatch moves the file
// to cache_root/.quarantine and raises IntegrityError. Nothing is created on
// disk before the file listing has been fetched.
class HubClient {
 public:
  explicit HubClient(HubOptions options);

  // config.json, tokenizer.json, *.safetensors (and the shard index when
  // present). Throws NotFoundError for an unknown repo or revision (with
  // nearby revisions when the hub lists them), NetworkError when unreachable.
  CheckpointRef fetch_checkpoint(const std::string& repo_id, const std::string& revision);

  // Files of a revision as listed by the hub.
  std::vector<FileEntry> list_files(const std::string& repo_id, const std::string& revision);

  // Branch names of the repository.
  std::vector<std::string> list_revisions(const std::string& repo_id);

  std::filesystem::path revision_dir(const std::string& repo_id, const std::string& revision) const;

  const TransferStats& stats() const { return stats_; }
  const HubOptions& options() const { return options_; }

 private:
  struct Response {
    long status = 0;
    std::string body;
  };

  Response get(const std::string& url);
  void download(const std::string& url, const std::filesystem::path& dest, const FileEntry& entry);
  bool verify(const std::filesystem::path& file, const FileEntry& entry) const;
  [[noreturn]] void quarantine(const std::filesystem::path& file, const std::string& repo_id,
                               const std::string& revision, const std::string& why);
  std::string not_found_message(const std::string& repo_id, const std::string& revision);

  HubOptions options_;
  TransferStats stats_;
};

// Content digest of a local file in the FileEntry format.
std::string sha256_file(const std::filesystem::path& file);
std::string git_blob_sha1_file(const std::filesystem::path& file);

// Steps of a named schedule: "paper20" (the 20 steps of the checkpoint study)
// or "all14m" (0, 1, 2, 4, ..., 512, then every 1000 through 143000: 154
// steps). Throws ArgumentError for other names.
std::vector<std::int64_t> checkpoint_schedule(const std::string& name);

// Echoes a custom list; throws ArgumentError when empty or not increasing.
std::vector<std::int64_t> checkpoint_schedule(const std::vector<std::int64_t>& custom);

std::string revision_name(std::int64_t step);

}  // namespace headprobe::hub

#include "headprobe/hub/hub.hpp"

#include <curl/curl.h>
#include <fcntl.h>
#include <openssl/evp.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <regex>
#include <thread>

#include <nlohmann/json.hpp>

#include "headprobe/error.hpp"

namespace headprobe::hub {

namespace fs = std::filesystem;

namespace {

constexpr const char* kRefFile = ".ref.json";

void init_curl() {
  static std::once_flag once;
  std::call_once(once, [] { curl_global_init(CURL_GLOBAL_DEFAULT); });
}

// Exclusive advisory lock held for the object's lifetime.
class FileLock {
 public:
  explicit FileLock(const fs::path& path) : fd_(::open(path.c_str(), O_CREAT | O_RDWR, 0644)) {
    if (fd_ < 0) throw LoadError("cannot open lock file " + path.string());
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw LoadError("cannot lock " + path.string());
    }
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_;
};

std::string hex(const unsigned char* data, unsigned int n) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < n; ++i) {
    out += digits[data[i] >> 4];
    out += digits[data[i] & 15];
  }
  return out;
}

std::string digest_file(const fs::path& file, const EVP_MD* md, const std::string& prefix) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw LoadError("cannot read " + file.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, md, nullptr);
  if (!prefix.empty()) EVP_DigestUpdate(ctx, prefix.data(), prefix.size());
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char out[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, out, &len);
  EVP_MD_CTX_free(ctx);
  return hex(out, len);
}

bool wanted(const std::string& name, bool include_bin) {
  if (name.find('/') != std::string::npos) return false;
  if (name == "config.json" || name == "tokenizer.json" || name == "model.safetensors.index.json") return true;
  if (name.size() > 12 && name.ends_with(".safetensors")) return true;
  return include_bin && name.starts_with("pytorch_model") && name.ends_with(".bin");
}

nlohmann::json entries_to_json(const std::vector<FileEntry>& files) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& f : files) arr.push_back({{"name", f.name}, {"size", f.size}, {"digest", f.digest}});
  return arr;
}

std::string url_encode_path(const std::string& s) {
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~' || c == '/') {
      out += static_cast<char>(c);
    } else {
      char buf[4];
      std::snprintf(buf, sizeof buf, "%%%02X", c);
      out += buf;
    }
  }
  return out;
}

struct Sink {
  CURL* curl = nullptr;
  std::FILE* file = nullptr;
  fs::path path;
  std::string* body = nullptr;
  bool decided = false;
  bool accept = false;
  std::uint64_t offset = 0;
  std::uint64_t written = 0;
  std::string error_body;
};

std::size_t on_write(char* data, std::size_t size, std::size_t count, void* user) {
  auto* s = static_cast<Sink*>(user);
  const std::size_t n = size * count;
  if (!s->decided) {
    long status = 0;
    curl_easy_getinfo(s->curl, CURLINFO_RESPONSE_CODE, &status);
    s->decided = true;
    s->accept = status == 200 || status == 206;
    if (s->file && status == 200 && s->offset > 0) {
      // Server ignored the range: start over.
      s->file = std::freopen(s->path.c_str(), "wb", s->file);
      if (!s->file) return 0;
    }
  }
  if (!s->accept) {
    if (s->error_body.size() < 4096) s->error_body.append(data, n);
    return n;
  }
  if (s->body) {
    s->body->append(data, n);
  } else if (std::fwrite(data, 1, n, s->file) != n) {
    return 0;
  }
  s->written += n;
  return n;
}

struct Attempt {
  CURLcode code = CURLE_OK;
  long status = 0;
  std::string error;
  std::uint64_t written = 0;
};

bool retryable(const Attempt& a) {
  if (a.code != CURLE_OK) return true;
  return a.status == 429 || a.status >= 500;
}

}  // namespace

HubOptions HubOptions::from_env() {
  HubOptions o;
  if (const char* url = std::getenv("HEADPROBE_HUB_URL"); url && *url) o.base_url = url;
  if (const char* tok = std::getenv("HEADPROBE_HUB_TOKEN"); tok && *tok) {
    o.token = tok;
  } else if (const char* hf = std::getenv("HF_TOKEN"); hf && *hf) {
    o.token = hf;
  }
  if (const char* cache = std::getenv("HEADPROBE_CACHE"); cache && *cache) {
    o.cache_root = cache;
  } else if (const char* home = std::getenv("HOME"); home && *home) {
    o.cache_root = fs::path(home) / ".cache" / "headprobe";
  } else {
    o.cache_root = fs::temp_directory_path() / "headprobe-cache";
  }
  return o;
}

HubClient::HubClient(HubOptions options) : options_(std::move(options)) {
  init_curl();
  while (!options_.base_url.empty() && options_.base_url.back() == '/') options_.base_url.pop_back();
  if (options_.cache_root.empty()) throw ArgumentError("hub client needs a cache root");
  if (options_.retry.attempts < 1) throw ArgumentError("retry attempts must be >= 1");
}

fs::path HubClient::revision_dir(const std::string& repo_id, const std::string& revision) const {
  return options_.cache_root / repo_id / revision;
}

namespace {

Attempt perform(const HubOptions& opt, const std::string& url, Sink& sink) {
  CURL* curl = curl_easy_init();
  if (!curl) throw NetworkError("curl_easy_init failed");
  sink.curl = curl;
  char errbuf[CURL_ERROR_SIZE] = {0};
  curl_slist* headers = nullptr;
  if (opt.token) headers = curl_slist_append(headers, ("Authorization: Bearer " + *opt.token).c_str());
  curl_easy_setopt(curl, CURLOPT_URL, url.c_str());
  curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 1L);
  curl_easy_setopt(curl, CURLOPT_MAXREDIRS, 10L);
  curl_easy_setopt(curl, CURLOPT_CONNECTTIMEOUT, 30L);
  curl_easy_setopt(curl, CURLOPT_TIMEOUT, opt.timeout_s);
  curl_easy_setopt(curl, CURLOPT_USERAGENT, "headprobe/" HEADPROBE_VERSION);
  curl_easy_setopt(curl, CURLOPT_ERRORBUFFER, errbuf);
  curl_easy_setopt(curl, CURLOPT_WRITEFUNCTION, on_write);
  curl_easy_setopt(curl, CURLOPT_WRITEDATA, &sink);
  curl_easy_setopt(curl, CURLOPT_NOSIGNAL, 1L);
  if (headers) curl_easy_setopt(curl, CURLOPT_HTTPHEADER, headers);
  std::string range;
  if (sink.offset > 0) {
    range = std::to_string(sink.offset) + "-";
    curl_easy_setopt(curl, CURLOPT_RANGE, range.c_str());
  }
  Attempt a;
  a.code = curl_easy_perform(curl);
  curl_easy_getinfo(curl, CURLINFO_RESPONSE_CODE, &a.status);
  a.error = errbuf[0] ? errbuf : curl_easy_strerror(a.code);
  a.written = sink.written;
  curl_slist_free_all(headers);
  curl_easy_cleanup(curl);
  return a;
}

void backoff(const RetryPolicy& policy, int attempt) {
  const double delay = std::min(policy.max_delay_s, policy.initial_delay_s * std::pow(2.0, attempt));
  std::this_thread::sleep_for(std::chrono::duration<double>(delay));
}

}  // namespace

HubClient::Response HubClient::get(const std::string& url) {
  Attempt last;
  for (int attempt = 0; attempt < options_.retry.attempts; ++attempt) {
    if (attempt > 0) backoff(options_.retry, attempt - 1);
    std::string body;
    Sink sink;
    sink.body = &body;
    ++stats_.requests;
    last = perform(options_, url, sink);
    if (last.code == CURLE_OK && (last.status == 200 || last.status == 206)) return {last.status, body};
    if (!retryable(last)) return {last.status, sink.error_body};
  }
  if (last.code != CURLE_OK) throw NetworkError("GET " + url + ": " + last.error);
  throw NetworkError("GET " + url + ": HTTP " + std::to_string(last.status) + " after " +
                     std::to_string(options_.retry.attempts) + " attempts");
}

std::vector<std::string> HubClient::list_revisions(const std::string& repo_id) {
  const auto res = get(options_.base_url + "/api/models/" + repo_id + "/refs");
  if (res.status == 404) throw NotFoundError("repository " + repo_id + " not found");
  if (res.status != 200) throw NetworkError("listing refs of " + repo_id + ": HTTP " + std::to_string(res.status));
  std::vector<std::string> out;
  try {
    const auto doc = nlohmann::json::parse(res.body);
    for (const auto& b : doc.at("branches")) out.push_back(b.at("name").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw NetworkError("unexpected refs listing for " + repo_id + ": " + e.what());
  }
  return out;
}

std::string HubClient::not_found_message(const std::string& repo_id, const std::string& revision) {
  std::string msg = "revision '" + revision + "' of " + repo_id + " not found";
  std::vector<std::string> revisions;
  try {
    revisions = list_revisions(repo_id);
  } catch (const Error&) {
    return msg;
  }
  if (revisions.empty()) return msg;
  static const std::regex step_re(R"(^step(\d+)$)");
  std::smatch m;
  if (std::regex_match(revision, m, step_re)) {
    const double target = std::stod(m[1]);
    auto distance = [&](const std::string& r) {
      std::smatch mm;
      return std::regex_match(r, mm, step_re) ? std::abs(std::stod(mm[1]) - target) : 1e300;
    };
    std::stable_sort(revisions.begin(), revisions.end(),
                     [&](const std::string& a, const std::string& b) { return distance(a) < distance(b); });
  }
  revisions.resize(std::min<std::size_t>(revisions.size(), 5));
  msg += "; nearby revisions:";
  for (const auto& r : revisions) msg += " " + r;
  return msg;
}

std::vector<FileEntry> HubClient::list_files(const std::string& repo_id, const std::string& revision) {
  const auto res = get(options_.base_url + "/api/models/" + repo_id + "/tree/" + url_encode_path(revision));
  if (res.status == 404) throw NotFoundError(not_found_message(repo_id, revision));
  if (res.status != 200) {
    throw NetworkError("listing " + repo_id + "@" + revision + ": HTTP " + std::to_string(res.status));
  }
  std::vector<FileEntry> out;
  try {
    for (const auto& item : nlohmann::json::parse(res.body)) {
      if (item.value("type", "file") != "file") continue;
      FileEntry e;
      e.name = item.at("path").get<std::string>();
      e.size = item.at("size").get<std::uint64_t>();
      if (item.contains("lfs") && item["lfs"].is_object()) {
        e.digest = "sha256:" + item["lfs"].at("oid").get<std::string>();
        e.size = item["lfs"].value("size", e.size);
      } else {
        e.digest = "git-sha1:" + item.at("oid").get<std::string>();
      }
      out.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw NetworkError("unexpected file listing for " + repo_id + "@" + revision + ": " + e.what());
  }
  return out;
}

bool HubClient::verify(const fs::path& file, const FileEntry& entry) const {
  std::error_code ec;
  const auto size = fs::file_size(file, ec);
  if (ec || size != entry.size) return false;
  const auto colon = entry.digest.find(':');
  const std::string algo = entry.digest.substr(0, colon), want = entry.digest.substr(colon + 1);
  if (algo == "sha256") return sha256_file(file) == want;
  if (algo == "git-sha1") return git_blob_sha1_file(file) == want;
  throw IntegrityError("unknown digest kind '" + algo + "' for " + entry.name);
}

void HubClient::quarantine(const fs::path& file, const std::string& repo_id, const std::string& revision,
                           const std::string& why) {
  const auto stamp = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
  const fs::path dest = options_.cache_root / ".quarantine" / repo_id / revision /
                        (file.filename().string() + "." + std::to_string(stamp));
  fs::create_directories(dest.parent_path());
  fs::rename(file, dest);
  throw IntegrityError(why + "; moved to " + dest.string());
}

void HubClient::download(const std::string& url, const fs::path& dest, const FileEntry& entry) {
  const fs::path part = dest.string() + ".part";
  Attempt last;
  for (int attempt = 0; attempt < options_.retry.attempts; ++attempt) {
    if (attempt > 0) backoff(options_.retry, attempt - 1);
    std::error_code ec;
    std::uint64_t have = fs::exists(part) ? fs::file_size(part, ec) : 0;
    if (have > entry.size) {
      fs::remove(part);
      have = 0;
    }
    if (have == entry.size && entry.size > 0) return;
    Sink sink;
    sink.path = part;
    sink.offset = have;
    sink.file = std::fopen(part.c_str(), "ab");
    if (!sink.file) throw LoadError("cannot write " + part.string());
    ++stats_.requests;
    last = perform(options_, url, sink);
    if (sink.file) std::fclose(sink.file);
    stats_.bytes_downloaded += last.written;
    if (last.code == CURLE_OK && (last.status == 200 || last.status == 206)) return;
    if (last.code == CURLE_OK && last.status == 416) {
      // Range past the end: the partial file is stale.
      fs::remove(part);
      continue;
    }
    if (last.code == CURLE_OK && last.status == 404) throw NotFoundError(url + " not found");
    if (!retryable(last)) throw NetworkError("GET " + url + ": HTTP " + std::to_string(last.status));
  }
  if (last.code != CURLE_OK) throw NetworkError("GET " + url + ": " + last.error);
  throw NetworkError("GET " + url + ": HTTP " + std::to_string(last.status) + " after " +
                     std::to_string(options_.retry.attempts) + " attempts");
}

CheckpointRef HubClient::fetch_checkpoint(const std::string& repo_id, const std::string& revision) {
  CheckpointRef ref{repo_id, revision, revision_dir(repo_id, revision), {}};
  const fs::path ref_file = ref.local_dir / kRefFile;

  if (fs::exists(ref_file)) {
    std::ifstream in(ref_file);
    try {
      for (const auto& f : nlohmann::json::parse(in)) {
        ref.files.push_back({f.at("name"), f.at("size"), f.at("digest")});
      }
    } catch (const nlohmann::json::exception&) {
      ref.files.clear();
    }
    bool complete = !ref.files.empty();
    for (const auto& f : ref.files) {
      const fs::path p = ref.local_dir / f.name;
      if (!fs::exists(p)) {
        complete = false;
        continue;
      }
      std::error_code ec;
      if (fs::file_size(p, ec) == f.size && verify(p, f)) continue;
      quarantine(p, repo_id, revision, "cached " + f.name + " fails size/digest check");
    }
    if (complete) {
      stats_.files_reused += ref.files.size();
      return ref;
    }
  }

  std::vector<FileEntry> files;
  for (auto& f : list_files(repo_id, revision)) {
    if (wanted(f.name, options_.include_pytorch_bin)) files.push_back(std::move(f));
  }
  auto has = [&](auto pred) { return std::any_of(files.begin(), files.end(), pred); };
  for (const char* required : {"config.json", "tokenizer.json"}) {
    if (!has([&](const FileEntry& f) { return f.name == required; })) {
      throw NotFoundError(repo_id + "@" + revision + " has no " + required);
    }
  }
  if (!has([](const FileEntry& f) { return f.name.ends_with(".safetensors") || f.name.ends_with(".bin"); })) {
    throw NotFoundError(repo_id + "@" + revision +
                        " has no safetensors weights (set include_pytorch_bin and convert the .bin files)");
  }

  fs::create_directories(ref.local_dir);
  for (const auto& f : files) {
    const fs::path dest = ref.local_dir / f.name;
    FileLock lock(dest.string() + ".lock");
    if (fs::exists(dest)) {
      if (verify(dest, f)) {
        ++stats_.files_reused;
        continue;
      }
      quarantine(dest, repo_id, revision, "cached " + f.name + " fails size/digest check");
    }
    const std::string url =
        options_.base_url + "/" + repo_id + "/resolve/" + url_encode_path(revision) + "/" + url_encode_path(f.name);
    download(url, dest, f);
    const fs::path part = dest.string() + ".part";
    if (!verify(part, f)) quarantine(part, repo_id, revision, "downloaded " + f.name + " fails size/digest check");
    fs::rename(part, dest);
    ++stats_.files_downloaded;
  }
  ref.files = files;
  const fs::path tmp = ref_file.string() + ".tmp";
  std::ofstream(tmp) << entries_to_json(files).dump(1);
  fs::rename(tmp, ref_file);
  return ref;
}

std::string sha256_file(const fs::path& file) { return digest_file(file, EVP_sha256(), ""); }

std::string git_blob_sha1_file(const fs::path& file) {
  const std::string header = "blob " + std::to_string(fs::file_size(file)) + std::string(1, '\0');
  return digest_file(file, EVP_sha1(), header);
}

std::vector<std::int64_t> checkpoint_schedule(const std::string& name) {
  if (name == "paper20") {
    return {0, 1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1000, 2000, 5000, 10000, 25000, 50000, 75000, 100000, 143000};
  }
  if (name == "all14m") {
    std::vector<std::int64_t> out{0};
    for (std::int64_t s = 1; s <= 512; s *= 2) out.push_back(s);
    for (std::int64_t s = 1000; s <= 143000; s += 1000) out.push_back(s);
    return out;
  }
  throw ArgumentError("unknown schedule '" + name + "' (expected paper20 or all14m)");
}

std::vector<std::int64_t> checkpoint_schedule(const std::vector<std::int64_t>& custom) {
  if (custom.empty()) throw ArgumentError("custom schedule is empty");
  for (std::size_t i = 0; i < custom.size(); ++i) {
    if (custom[i] < 0 || (i > 0 && custom[i] <= custom[i - 1])) {
      throw ArgumentError("custom schedule must be non-negative and strictly increasing");
    }
  }
  return custom;
}

std::string revision_name(std::int64_t step) { return "step" + std::to_string(step); }

}  // namespace headprobe::hub

#include "headprobe/pipeline/config.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <openssl/evp.h>
#include <toml.hpp>

#include "headprobe/error.hpp"

namespace headprobe::pipeline {

namespace fs = std::filesystem;

namespace {

const std::vector<std::pair<Analysis, std::string>>& analysis_names() {
  static const std::vector<std::pair<Analysis, std::string>> names{
      {Analysis::kPhase1, "phase1"},         {Analysis::kStress1Back, "stress_1back"},
      {Analysis::kStressPositional, "stress_positional"}, {Analysis::kStressPos, "stress_pos"},
      {Analysis::kModnoun, "modnoun"},       {Analysis::kAblation, "ablation"},
      {Analysis::kComposite, "composite"},
  };
  return names;
}

std::string where(const toml::node& node) {
  const auto& src = node.source();
  return src.begin ? " (line " + std::to_string(src.begin.line) + ")" : "";
}

void check_keys(const toml::table& table, const std::set<std::string>& allowed, const std::string& section) {
  for (const auto& [key, node] : table) {
    if (!allowed.count(std::string(key.str()))) {
      throw ConfigError("unknown key '" + std::string(key.str()) + "' in " + section + where(node));
    }
  }
}

template <typename T>
std::optional<T> get(const toml::table& table, const std::string& key, const std::string& section) {
  const toml::node* node = table.get(key);
  if (!node) return std::nullopt;
  auto value = node->value<T>();
  if (!value) throw ConfigError(section + "." + key + " has the wrong type" + where(*node));
  return value;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path out(p);
  if (!p.empty() && p[0] == '~') {
    if (const char* home = std::getenv("HOME")) out = fs::path(home) / p.substr(p.size() > 1 && p[1] == '/' ? 2 : 1);
  }
  if (out.is_relative()) out = base / out;
  return out.lexically_normal();
}

std::vector<std::int64_t> int_list(const toml::array& arr, const std::string& what) {
  std::vector<std::int64_t> out;
  for (const auto& v : arr) {
    auto i = v.value<std::int64_t>();
    if (!i) throw ConfigError(what + " must hold integers" + where(v));
    out.push_back(*i);
  }
  return out;
}

std::vector<std::vector<probes::HeadId>> head_groups(const toml::array& arr, const std::string& what) {
  std::vector<std::vector<probes::HeadId>> out;
  for (const auto& v : arr) {
    auto s = v.value<std::string>();
    if (!s) throw ConfigError(what + " entries must be strings like \"(3,1)+(3,2)\"" + where(v));
    std::vector<probes::HeadId> group;
    std::stringstream ss(*s);
    std::string part;
    while (std::getline(ss, part, '+')) {
      try {
        group.push_back(probes::HeadId::parse(part));
      } catch (const Error& e) {
        throw ConfigError(what + ": " + e.what() + where(v));
      }
    }
    if (group.empty()) throw ConfigError(what + ": empty head group" + where(v));
    out.push_back(std::move(group));
  }
  if (out.empty()) throw ConfigError(what + " is empty");
  return out;
}

std::string sha256_hex(const std::string& data) {
  unsigned char out[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), out, &len, EVP_sha256(), nullptr);
  static const char* digits = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += digits[out[i] >> 4];
    hex += digits[out[i] & 15];
  }
  return hex;
}

nlohmann::json groups_json(const std::optional<std::vector<std::vector<probes::HeadId>>>& groups) {
  if (!groups) return nlohmann::json();
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& g : *groups) {
    std::string label;
    for (const auto& h : g) label += (label.empty() ? "" : "+") + h.label();
    arr.push_back(label);
  }
  return arr;
}

}  // namespace

std::string to_string(Analysis a) {
  for (const auto& [value, name] : analysis_names()) {
    if (value == a) return name;
  }
  return "?";
}

std::optional<Analysis> parse_analysis(const std::string& name) {
  for (const auto& [value, n] : analysis_names()) {
    if (n == name) return value;
  }
  return std::nullopt;
}

const std::vector<Analysis>& all_analyses() {
  static const std::vector<Analysis> all = [] {
    std::vector<Analysis> v;
    for (const auto& [a, _] : analysis_names()) v.push_back(a);
    return v;
  }();
  return all;
}

std::string infer_preset(const std::string& repo_or_label) {
  std::string s = repo_or_label;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s.find("pythia-14m") != std::string::npos) return "pythia-14m";
  if (s.find("pythia-410m") != std::string::npos) return "pythia-410m";
  return "";
}

bool RunConfig::wants(Analysis a) const { return std::find(analyses.begin(), analyses.end(), a) != analyses.end(); }

nlohmann::json RunConfig::snapshot() const {
  nlohmann::json j;
  for (const auto& m : models) {
    j["models"].push_back({{"label", m.label},
                           {"repo", m.repo ? nlohmann::json(*m.repo) : nlohmann::json()},
                           {"path", m.path ? nlohmann::json(m.path->string()) : nlohmann::json()},
                           {"run", m.run},
                           {"preset", m.preset},
                           {"steps", m.steps}});
  }
  j["schedule"] = schedule_name;
  for (auto a : analyses) j["analyses"].push_back(to_string(a));
  auto opt_path = [](const std::optional<fs::path>& p) { return p ? nlohmann::json(p->string()) : nlohmann::json(); };
  j["datasets"] = {{"rawc", opt_path(datasets.rawc)},
                   {"rawc_schema", datasets.rawc_schema.columns},
                   {"nouns_only", datasets.nouns_only},
                   {"positional", opt_path(datasets.positional)},
                   {"positional_phrase", datasets.positional_phrase},
                   {"pos", opt_path(datasets.pos)},
                   {"modnoun", opt_path(datasets.modnoun)}};
  nlohmann::json kinds = nlohmann::json::array();
  for (auto k : ablation.kinds) kinds.push_back(ablation::to_string(k));
  j["ablation"] = {{"kinds", kinds},
                   {"source_step", ablation.source_step},
                   {"targets", groups_json(ablation.targets)},
                   {"baselines", groups_json(ablation.baselines)},
                   {"interaction", ablation.interaction}};
  j["cue_aggregation"] = aggregation == probes::CueAggregation::kMean ? "mean" : "sum";
  return j;
}

std::string RunConfig::digest() const { return "sha256:" + sha256_hex(snapshot().dump()); }

void validate(const RunConfig& c) {
  if (c.models.empty()) throw ConfigError("no models configured");
  std::set<std::string> labels;
  static const std::regex label_re(R"([A-Za-z0-9._-]+)");
  for (const auto& m : c.models) {
    if (!std::regex_match(m.label, label_re)) {
      throw ConfigError("model label '" + m.label + "' must use letters, digits, '.', '_' or '-'");
    }
    if (!labels.insert(m.label).second) throw ConfigError("duplicate model label '" + m.label + "'");
    if (m.repo.has_value() == m.path.has_value()) {
      throw ConfigError("model '" + m.label + "' needs exactly one of repo or path");
    }
    if (m.path && !fs::is_directory(*m.path)) {
      throw ConfigError("model '" + m.label + "': directory " + m.path->string() + " does not exist");
    }
    if (c.schedule_name != "available" && m.steps.empty()) throw ConfigError("model '" + m.label + "' has no steps");
    for (std::size_t i = 1; i < m.steps.size(); ++i) {
      if (m.steps[i] <= m.steps[i - 1]) throw ConfigError("steps of '" + m.label + "' must be strictly increasing");
    }
  }
  if (c.analyses.empty()) throw ConfigError("analyses is empty");
  if (c.wants(Analysis::kComposite)) {
    for (auto need : {Analysis::kPhase1, Analysis::kStress1Back, Analysis::kStressPositional, Analysis::kStressPos}) {
      if (!c.wants(need)) throw ConfigError("composite requires " + to_string(need) + " in analyses");
    }
  }
  auto require_file = [](const std::optional<fs::path>& p, const std::string& key, const std::string& why) {
    if (!p) throw ConfigError("datasets." + key + " is required by " + why);
    if (!fs::is_regular_file(*p)) throw ConfigError("datasets." + key + ": " + p->string() + " does not exist");
  };
  for (auto a : {Analysis::kPhase1, Analysis::kStress1Back, Analysis::kAblation}) {
    if (c.wants(a)) require_file(c.datasets.rawc, "rawc", to_string(a));
  }
  if (c.wants(Analysis::kStressPositional)) {
    if (c.datasets.positional) {
      require_file(c.datasets.positional, "positional", "stress_positional");
    } else {
      require_file(c.datasets.rawc, "rawc", "stress_positional (no positional file given)");
    }
  }
  if (c.wants(Analysis::kStressPos)) require_file(c.datasets.pos, "pos", "stress_pos");
  if (c.wants(Analysis::kModnoun)) {
    if (c.datasets.modnoun) {
      require_file(c.datasets.modnoun, "modnoun", "modnoun");
    } else {
      require_file(c.datasets.rawc, "rawc", "modnoun (no modnoun file given)");
    }
  }
  if (c.wants(Analysis::kAblation)) {
    if (c.ablation.kinds.empty()) throw ConfigError("ablation.kinds is empty");
    if (c.ablation.targets.has_value() != c.ablation.baselines.has_value()) {
      throw ConfigError("ablation.targets and ablation.baselines must be given together");
    }
    if (!c.ablation.targets) {
      for (const auto& m : c.models) {
        if (m.preset.empty()) {
          throw ConfigError("model '" + m.label + "' has no default ablation heads; set ablation.targets/baselines");
        }
      }
    }
  }
  if (c.workers < 1) throw ConfigError("workers must be >= 1");
}

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir) {
  toml::table doc;
  try {
    doc = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config parse error: " << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError(msg.str());
  }
  check_keys(doc, {"output_dir", "workers", "analyses", "schedule", "cue_aggregation", "models", "datasets",
                   "ablation", "hub"},
             "config");

  RunConfig c;
  c.hub = hub::HubOptions::from_env();
  c.output_dir = resolve(base_dir, get<std::string>(doc, "output_dir", "config").value_or("results"));
  c.workers = static_cast<int>(get<std::int64_t>(doc, "workers", "config").value_or(1));

  if (const auto* arr = doc["analyses"].as_array()) {
    std::set<Analysis> set;
    for (const auto& v : *arr) {
      auto name = v.value<std::string>();
      auto a = name ? parse_analysis(*name) : std::nullopt;
      if (!a) throw ConfigError("unknown analysis" + (name ? " '" + *name + "'" : std::string()) + where(v));
      set.insert(*a);
    }
    c.analyses.assign(set.begin(), set.end());
  } else if (doc.contains("analyses")) {
    throw ConfigError("analyses must be a list");
  }

  std::vector<std::int64_t> steps;
  if (const auto* node = doc.get("schedule")) {
    if (auto name = node->value<std::string>()) {
      c.schedule_name = *name;
      if (*name != "available") {
        try {
          steps = hub::checkpoint_schedule(*name);
        } catch (const ArgumentError& e) {
          throw ConfigError(std::string("schedule: ") + e.what());
        }
      }
    } else if (const auto* arr = node->as_array()) {
      c.schedule_name = "custom";
      c.custom_steps = int_list(*arr, "schedule");
      try {
        steps = hub::checkpoint_schedule(c.custom_steps);
      } catch (const ArgumentError& e) {
        throw ConfigError(std::string("schedule: ") + e.what());
      }
    } else {
      throw ConfigError("schedule must be a name or a list of steps" + where(*node));
    }
  } else {
    throw ConfigError("schedule is required (paper20, all14m, available or a list of steps)");
  }

  const std::string agg = get<std::string>(doc, "cue_aggregation", "config").value_or("mean");
  if (agg == "mean") {
    c.aggregation = probes::CueAggregation::kMean;
  } else if (agg == "sum") {
    c.aggregation = probes::CueAggregation::kSum;
  } else {
    throw ConfigError("cue_aggregation must be mean or sum");
  }

  if (const auto* models = doc["models"].as_array()) {
    for (const auto& node : *models) {
      const auto* t = node.as_table();
      if (!t) throw ConfigError("each [[models]] entry must be a table" + where(node));
      check_keys(*t, {"label", "repo", "path", "run", "preset", "steps"}, "[[models]]");
      ModelEntry m;
      m.repo = get<std::string>(*t, "repo", "models");
      if (auto p = get<std::string>(*t, "path", "models")) m.path = resolve(base_dir, *p);
      std::string fallback = m.repo ? m.repo->substr(m.repo->find('/') + 1) : (m.path ? m.path->filename().string() : "");
      m.label = get<std::string>(*t, "label", "models").value_or(fallback);
      m.run = get<std::string>(*t, "run", "models").value_or(m.label);
      m.preset = get<std::string>(*t, "preset", "models").value_or(infer_preset(m.repo.value_or(m.label)));
      if (!m.preset.empty() && m.preset != "pythia-14m" && m.preset != "pythia-410m") {
        throw ConfigError("unknown preset '" + m.preset + "' (pythia-14m or pythia-410m)");
      }
      if (const auto* arr = (*t)["steps"].as_array()) {
        try {
          m.steps = hub::checkpoint_schedule(int_list(*arr, "models.steps"));
          m.steps_from_config = true;
        } catch (const ArgumentError& e) {
          throw ConfigError(std::string("models.steps: ") + e.what());
        }
      } else {
        m.steps = steps;
      }
      c.models.push_back(std::move(m));
    }
  } else if (doc.contains("models")) {
    throw ConfigError("models must be an array of tables ([[models]])");
  }

  if (const auto* ds = doc["datasets"].as_table()) {
    check_keys(*ds, {"rawc", "rawc_schema", "nouns_only", "positional", "positional_phrase", "pos", "modnoun"},
               "[datasets]");
    auto path_of = [&](const std::string& key) -> std::optional<fs::path> {
      if (auto p = get<std::string>(*ds, key, "datasets")) return resolve(base_dir, *p);
      return std::nullopt;
    };
    c.datasets.rawc = path_of("rawc");
    c.datasets.positional = path_of("positional");
    c.datasets.pos = path_of("pos");
    c.datasets.modnoun = path_of("modnoun");
    c.datasets.nouns_only = get<bool>(*ds, "nouns_only", "datasets").value_or(true);
    c.datasets.positional_phrase = get<std::string>(*ds, "positional_phrase", "datasets").value_or("kind of");
    const std::string schema = get<std::string>(*ds, "rawc_schema", "datasets").value_or("rawc");
    c.datasets.rawc_schema_name = schema;
    try {
      c.datasets.rawc_schema = schema == "rawc"        ? stimuli::Schema::rawc()
                               : schema == "canonical" ? stimuli::Schema::canonical()
                                                       : stimuli::Schema::parse(schema);
    } catch (const Error& e) {
      throw ConfigError(std::string("datasets.rawc_schema: ") + e.what());
    }
  }

  if (const auto* ab = doc["ablation"].as_table()) {
    check_keys(*ab, {"kinds", "source_step", "targets", "baselines", "interaction"}, "[ablation]");
    if (const auto* kinds = (*ab)["kinds"].as_array()) {
      c.ablation.kinds.clear();
      for (const auto& v : *kinds) {
        auto k = v.value<std::string>();
        if (k && *k == "zero") {
          c.ablation.kinds.push_back(ablation::AblationKind::kZero);
        } else if (k && (*k == "step1_copy" || *k == "copy")) {
          c.ablation.kinds.push_back(ablation::AblationKind::kCopyFromStep);
        } else {
          throw ConfigError("ablation.kinds entries must be zero or step1_copy" + where(v));
        }
      }
    }
    c.ablation.source_step = get<std::int64_t>(*ab, "source_step", "ablation").value_or(1);
    if (const auto* t = (*ab)["targets"].as_array()) c.ablation.targets = head_groups(*t, "ablation.targets");
    if (const auto* b = (*ab)["baselines"].as_array()) c.ablation.baselines = head_groups(*b, "ablation.baselines");
    c.ablation.interaction = get<bool>(*ab, "interaction", "ablation").value_or(false);
  }

  if (const auto* h = doc["hub"].as_table()) {
    check_keys(*h, {"url", "cache", "attempts", "include_pytorch_bin", "timeout_s"}, "[hub]");
    if (auto url = get<std::string>(*h, "url", "hub")) c.hub.base_url = *url;
    if (auto cache = get<std::string>(*h, "cache", "hub")) c.hub.cache_root = resolve(base_dir, *cache);
    if (auto n = get<std::int64_t>(*h, "attempts", "hub")) c.hub.retry.attempts = static_cast<int>(*n);
    if (auto t = get<std::int64_t>(*h, "timeout_s", "hub")) c.hub.timeout_s = static_cast<long>(*t);
    c.hub.include_pytorch_bin = get<bool>(*h, "include_pytorch_bin", "hub").value_or(false);
  }

  validate(c);
  return c;
}

RunConfig load_run_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), fs::absolute(file).parent_path());
}

}  // namespace headprobe::pipeline

#include <set>

#include "headprobe/hub/hub.hpp"
#include "internal.hpp"

namespace headprobe::pipeline::detail {

namespace fs = std::filesystem;

namespace {

std::string file_digest(const fs::path& p) { return "sha256:" + hub::sha256_file(p); }

void save_rejects(const RunConfig& config, const std::string& name, const std::vector<stimuli::Reject>& rejects,
                  std::vector<std::string>& notices) {
  const fs::path file = config.output_dir / "rejects" / (name + ".jsonl");
  if (rejects.empty()) {
    fs::remove(file);
    return;
  }
  fs::create_directories(file.parent_path());
  stimuli::write_rejects(file, rejects);
  notices.push_back(name + ": " + std::to_string(rejects.size()) + " rows rejected, see rejects/" + name + ".jsonl");
}

}  // namespace

StimulusSets load_stimulus_sets(const RunConfig& config) {
  StimulusSets sets;
  const auto& ds = config.datasets;
  const bool need_pairs = config.wants(Analysis::kPhase1) || config.wants(Analysis::kStress1Back) ||
                          config.wants(Analysis::kAblation) ||
                          (config.wants(Analysis::kStressPositional) && !ds.positional) ||
                          (config.wants(Analysis::kModnoun) && !ds.modnoun);
  if (need_pairs) {
    auto load = stimuli::load_pairs(*ds.rawc, ds.rawc_schema, ds.nouns_only);
    sets.pairs = std::move(load.pairs);
    sets.digests["rawc"] = file_digest(*ds.rawc);
    save_rejects(config, "rawc", load.rejects, sets.notices);
    if (load.filtered_out) {
      sets.notices.push_back("rawc: " + std::to_string(load.filtered_out) + " non-noun rows left out");
    }
  }

  if (config.wants(Analysis::kStressPositional)) {
    if (ds.positional) {
      auto load = stimuli::load_pos_stimuli(*ds.positional, stimuli::PerturbationKind::kPositional);
      for (auto& item : load.items) {
        if (item.kind == stimuli::PerturbationKind::kPositional) sets.positional.push_back(std::move(item));
      }
      sets.digests["positional"] = file_digest(*ds.positional);
      save_rejects(config, "positional", load.rejects, sets.notices);
    } else {
      std::size_t skipped = 0;
      for (const auto& pair : sets.pairs) {
        auto v = stimuli::make_positional_variant(pair, ds.positional_phrase);
        if (v.skipped) ++skipped;
        for (auto& item : v.items) sets.positional.push_back(std::move(item));
      }
      sets.digests["positional"] = sets.digests["rawc"] + "+phrase:" + ds.positional_phrase;
      if (skipped) {
        sets.notices.push_back("positional: " + std::to_string(skipped) +
                               " pairs skipped (cue not directly before the target)");
      }
    }
  }

  if (config.wants(Analysis::kStressPos)) {
    auto load = stimuli::load_pos_stimuli(*ds.pos, stimuli::PerturbationKind::kPosNounTarget);
    std::size_t dropped = 0;
    for (auto& item : load.items) {
      if (item.kind == stimuli::PerturbationKind::kPositional) {
        ++dropped;
      } else {
        sets.pos.push_back(std::move(item));
      }
    }
    if (dropped) sets.notices.push_back("pos: " + std::to_string(dropped) + " positional rows ignored");
    sets.digests["pos"] = file_digest(*ds.pos);
    save_rejects(config, "pos", load.rejects, sets.notices);
  }

  if (config.wants(Analysis::kModnoun)) {
    std::size_t skipped = 0;
    auto add = [&](const std::string& id, const std::string& sentence, const std::string& cue,
                   const std::string& target) {
      auto reversed = stimuli::make_reversed_modnoun(sentence, cue, target);
      if (!reversed || *reversed == sentence) {
        ++skipped;
        return;
      }
      sets.modnoun.push_back({id, sentence, *reversed});
    };
    if (ds.modnoun) {
      auto load = stimuli::load_pos_stimuli(*ds.modnoun, stimuli::PerturbationKind::kPositional);
      for (std::size_t i = 0; i < load.items.size(); ++i) {
        const auto& item = load.items[i];
        add(item.base_pair_id.empty() ? std::to_string(i + 1) : item.base_pair_id, item.sentence, item.cue,
            item.target);
      }
      sets.digests["modnoun"] = file_digest(*ds.modnoun);
      save_rejects(config, "modnoun", load.rejects, sets.notices);
    } else {
      std::set<std::string> seen;
      for (const auto& p : sets.pairs) {
        if (seen.insert(p.sentence_a).second) add(p.pair_id + "/a", p.sentence_a, p.cue_a, p.word);
        if (seen.insert(p.sentence_b).second) add(p.pair_id + "/b", p.sentence_b, p.cue_b, p.word);
      }
      sets.digests["modnoun"] = sets.digests["rawc"] + "+derived";
    }
    if (skipped) {
      sets.notices.push_back("modnoun: " + std::to_string(skipped) +
                             " sentences skipped (modifier not directly before the noun)");
    }
  }
  return sets;
}

}  // namespace headprobe::pipeline::detail

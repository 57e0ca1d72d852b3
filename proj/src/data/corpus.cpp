#include "p5rec/data/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <random>

#include <nlohmann/json.hpp>

#include "p5rec/common.hpp"

namespace p5rec::data {

using prompt::FieldBindings;
using prompt::PromptId;
using prompt::TaskFamily;

namespace {

constexpr const char* kPairFormat = "p5rec-pairs";

std::uint64_t datum_seed(std::uint64_t seed, const std::string& key, std::uint64_t salt) {
  return derive_seed(seed, fnv1a(key), salt);
}

std::vector<std::string> item_tokens(const std::vector<std::string>& ids) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(item_token(id));
  return out;
}

void bind_user(FieldBindings& b, const Dataset& ds, const std::string& user_id) {
  b.set("user_id", user_id);
  b.set("user_desc", ds.user_description(user_id));
  b.set("user", "user_" + user_id);
}

void bind_item(FieldBindings& b, const Dataset& ds, const std::string& item_id) {
  b.set("item_id", item_id);
  const auto& title = ds.item(item_id).title;
  if (!title.empty()) b.set("item_title", title);
}

const std::set<std::string>& interacted_of(const PreparedData& data, const std::string& user) {
  static const std::set<std::string> none;
  auto it = data.interacted.find(user);
  return it == data.interacted.end() ? none : it->second;
}

// Binds `candidates` (positive plus negatives, shuffled) when the pool
// allows; a missing field later skips the templates that need it.
void bind_candidates(Datum& d, const PreparedData& data, std::size_t size, const CorpusOptions& opt,
                     std::uint64_t seed) {
  try {
    auto set = make_candidate_set(d.item_id, interacted_of(data, d.user_id), data.item_pool, size,
                                  datum_seed(seed, d.key, 21));
    d.candidates = set.shuffled(datum_seed(seed, d.key, 22));
    d.bindings.set_list("candidates", item_tokens(d.candidates), opt.list_separator);
  } catch (const DataError&) {
    d.candidates.clear();
  }
}

// Binds `item_id`/`yes_no`: the positive with probability 1/2, otherwise a
// non-interacted negative.
void bind_yes_no_item(Datum& d, const PreparedData& data, std::uint64_t seed) {
  Rng rng(datum_seed(seed, d.key, 31));
  if (std::bernoulli_distribution(0.5)(rng)) {
    d.bindings.set("item_id", d.item_id);
    d.bindings.set("yes_no", "yes");
    return;
  }
  try {
    auto neg = sample_negatives(interacted_of(data, d.user_id), data.item_pool, 1, datum_seed(seed, d.key, 32));
    d.bindings.set("item_id", neg.front());
    d.bindings.set("yes_no", "no");
  } catch (const DataError&) {
    d.bindings.set("item_id", d.item_id);
    d.bindings.set("yes_no", "yes");
  }
}

void review_data(const PreparedData& data, TaskFamily family, SplitTag split, const CorpusOptions& opt,
                 std::uint64_t seed, std::vector<Datum>& out) {
  const auto& idx = split == SplitTag::train ? data.rating.train
                    : split == SplitTag::valid ? data.rating.valid
                                               : data.rating.test;
  auto batch = make_review_data(data.dataset, idx, family, split, opt, seed);
  std::move(batch.begin(), batch.end(), std::back_inserter(out));
}

Datum sequence_datum(const PreparedData& data, TaskFamily family, SplitTag split, const std::string& user,
                     std::vector<std::string> prefix, const std::string& next, std::size_t position,
                     const CorpusOptions& opt, std::uint64_t seed) {
  Datum d;
  d.family = family;
  d.split = split;
  d.key = std::string(family == TaskFamily::sequential ? "s" : "d") + ":" + user + ":" + std::to_string(position) +
          ":" + std::string(split_name(split));
  d.user_id = user;
  d.item_id = next;
  if (prefix.size() > opt.max_history) prefix.erase(prefix.begin(), prefix.end() - opt.max_history);
  d.history = std::move(prefix);
  bind_user(d.bindings, data.dataset, user);
  d.bindings.set("next_item", next);
  if (family == TaskFamily::sequential) {
    d.bindings.set_list("history", item_tokens(d.history), opt.list_separator);
    bind_candidates(d, data, opt.seq_candidates, opt, seed);
  } else {
    bind_candidates(d, data, opt.direct_candidates, opt, seed);
    d.history.clear();
  }
  bind_yes_no_item(d, data, seed);
  const auto& title = data.dataset.item(d.bindings.value("item_id")).title;
  if (!title.empty()) d.bindings.set("item_title", title);
  return d;
}

void sequence_data(const PreparedData& data, TaskFamily family, SplitTag split, const CorpusOptions& opt,
                   std::uint64_t seed, std::vector<Datum>& out) {
  for (const auto& s : data.sequential.users) {
    if (split == SplitTag::train) {
      const std::size_t first = family == TaskFamily::sequential ? 1 : 0;
      for (std::size_t p = first; p < s.train.size(); ++p) {
        std::vector<std::string> prefix(s.train.begin(), s.train.begin() + static_cast<std::ptrdiff_t>(p));
        out.push_back(sequence_datum(data, family, split, s.user_id, std::move(prefix), s.train[p], p, opt, seed));
      }
    } else if (split == SplitTag::valid) {
      out.push_back(sequence_datum(data, family, split, s.user_id, s.train, s.valid, s.train.size(), opt, seed));
    } else {
      auto prefix = s.train;
      prefix.push_back(s.valid);
      out.push_back(sequence_datum(data, family, split, s.user_id, std::move(prefix), s.test, s.train.size() + 1,
                                   opt, seed));
    }
  }
}

void render_into(BuildReport& report, const prompt::PromptTemplate& tmpl, const Datum& d) {
  const auto id = tmpl.id.str();
  try {
    auto r = prompt::render(tmpl, d.bindings);
    report.pairs.push_back({std::move(r.input_text), std::move(r.target_text), tmpl.id, tmpl.family, d.split});
    ++report.rendered_per_prompt[id];
  } catch (const RegistryError&) {
    ++report.skipped_per_prompt[id];
    ++report.skipped_total;
  }
}

}  // namespace

std::string item_token(const std::string& item_id) { return "item_" + item_id; }

std::vector<Datum> make_review_data(const Dataset& ds, std::span<const std::size_t> review_indices,
                                    TaskFamily family, SplitTag split, const CorpusOptions& opt, std::uint64_t seed) {
  std::vector<Datum> out;
  out.reserve(review_indices.size());
  for (auto i : review_indices) {
    const auto& r = ds.reviews().at(i);
    Datum d;
    d.family = family;
    d.split = split;
    d.key = "r" + std::to_string(i);
    d.user_id = r.user_id;
    d.item_id = r.item_id;
    d.rating = r.rating;
    d.feature_word = r.feature_word;
    auto& b = d.bindings;
    bind_user(b, ds, r.user_id);
    bind_item(b, ds, r.item_id);
    const double star = split == SplitTag::train
                            ? perturb_rating(r.rating, opt.rating_sigma, datum_seed(seed, d.key, 11))
                            : static_cast<double>(r.rating);
    b.set("star_rating", format_rating(star));
    b.set("rating", std::to_string(r.rating));
    Rng rng(datum_seed(seed, d.key, 12));
    int asked = r.rating;
    if (!std::bernoulli_distribution(0.5)(rng)) {
      asked = std::uniform_int_distribution<int>(1, 4)(rng);
      if (asked >= r.rating) ++asked;
    }
    b.set("asked_rating", std::to_string(asked));
    b.set("yes_no", asked == r.rating ? "yes" : "no");
    b.set("like_dislike", r.rating >= 4 ? "like" : "dislike");
    if (r.feature_word) b.set("feature_word", *r.feature_word);
    if (r.explanation) b.set("explanation", *r.explanation);
    if (!r.review_text.empty()) b.set("review_text", r.review_text);
    if (!r.summary.empty()) b.set("summary", r.summary);
    out.push_back(std::move(d));
  }
  return out;
}

PreparedData prepare_data(Dataset dataset, const CorpusOptions& options, std::uint64_t seed) {
  PreparedData p;
  p.rating = split_rating_data(dataset.reviews(), options.rating_ratios, derive_seed(seed, 0x1));
  p.sequential = split_all_sequences(dataset.sequences());
  p.interacted = dataset.interactions();
  p.item_pool = dataset.item_ids();
  p.dataset = std::move(dataset);
  return p;
}

std::vector<Datum> make_data(const PreparedData& data, TaskFamily family, SplitTag split, const CorpusOptions& options,
                             std::uint64_t seed) {
  std::vector<Datum> out;
  switch (family) {
    case TaskFamily::rating:
    case TaskFamily::explanation:
    case TaskFamily::review:
      review_data(data, family, split, options, seed, out);
      break;
    case TaskFamily::sequential:
    case TaskFamily::direct:
      sequence_data(data, family, split, options, seed, out);
      break;
  }
  return out;
}

BuildReport build_pairs(const PreparedData& data, const prompt::Registry& registry, const prompt::RegistrySplit& split,
                        const CorpusOptions& options, std::uint64_t seed) {
  if (options.sample_fraction < 0.0 || options.sample_fraction > 1.0) {
    throw DataError("sample_fraction must lie in [0, 1]");
  }
  BuildReport report;
  for (auto family : prompt::kAllFamilies) {
    if (!options.wants(family)) continue;
    std::vector<const prompt::PromptTemplate*> templates;
    for (const auto* t : registry.by_family(family)) {
      if (split.is_pretrain(t->id)) templates.push_back(t);
    }
    if (templates.empty()) continue;
    for (const auto& d : make_data(data, family, SplitTag::train, options, seed)) {
      for (const auto* t : templates) {
        Rng rng(derive_seed(seed, fnv1a(d.key), fnv1a(t->id.str())));
        if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) >= options.sample_fraction) continue;
        render_into(report, *t, d);
      }
    }
  }
  assert_no_leakage(report.pairs, split);
  return report;
}

BuildReport build_eval_pairs(const PreparedData& data, const prompt::Registry& registry, const PromptId& id,
                             SplitTag split, const CorpusOptions& options, std::uint64_t seed) {
  const auto& tmpl = registry.at(id);
  BuildReport report;
  for (const auto& d : make_data(data, tmpl.family, split, options, seed)) render_into(report, tmpl, d);
  return report;
}

void assert_no_leakage(const std::vector<TrainingPair>& pairs, const prompt::RegistrySplit& split) {
  for (const auto& p : pairs) {
    if (p.split == SplitTag::train && split.is_zeroshot(p.prompt_id)) {
      throw DataError("held-out prompt " + p.prompt_id.str() + " appears in the training stream");
    }
  }
}

void canonical_order(std::vector<TrainingPair>& pairs) {
  std::sort(pairs.begin(), pairs.end(), [](const TrainingPair& a, const TrainingPair& b) {
    return std::tie(a.split, a.prompt_id, a.input_text, a.target_text) <
           std::tie(b.split, b.prompt_id, b.input_text, b.target_text);
  });
}

void write_pairs(std::ostream& out, const std::vector<TrainingPair>& pairs) {
  out << nlohmann::json{{"format", kPairFormat}, {"version", 1}}.dump() << "\n";
  for (const auto& p : pairs) {
    out << nlohmann::json{{"prompt", p.prompt_id.str()},
                          {"split", split_name(p.split)},
                          {"input", p.input_text},
                          {"target", p.target_text}}
               .dump()
        << "\n";
  }
}

std::vector<TrainingPair> read_pairs(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("pair stream is empty");
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.value("format", "") != kPairFormat || header.value("version", 0) != 1) {
      throw DataError("unsupported pair file header: " + line);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("pair file header is not JSON: ") + e.what());
  }
  std::vector<TrainingPair> pairs;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TrainingPair p;
      p.prompt_id = PromptId::parse(j.at("prompt").get<std::string>());
      p.family = static_cast<TaskFamily>(p.prompt_id.family);
      const auto split = j.at("split").get<std::string>();
      if (split == "train") {
        p.split = SplitTag::train;
      } else if (split == "valid") {
        p.split = SplitTag::valid;
      } else if (split == "test") {
        p.split = SplitTag::test;
      } else {
        throw DataError("unknown split tag '" + split + "'");
      }
      p.input_text = j.at("input").get<std::string>();
      p.target_text = j.at("target").get<std::string>();
      if (p.target_text.empty()) throw DataError("empty target text");
      pairs.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("pair line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw DataError("pair line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pairs;
}

void write_pairs_file(const std::filesystem::path& path, const std::vector<TrainingPair>& pairs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write pair file " + path.string());
  write_pairs(out, pairs);
}

std::vector<TrainingPair> read_pairs_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open pair file " + path.string());
  return read_pairs(in);
}

}  // namespace p5rec::data

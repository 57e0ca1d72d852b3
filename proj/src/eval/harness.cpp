#include "p5rec/eval/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <regex>
#include <set>

#include "p5rec/common.hpp"
#include "p5rec/decode/search.hpp"
#include "p5rec/eval/metrics.hpp"
#include "p5rec/model/config.hpp"

namespace p5rec::eval {

using data::Datum;
using prompt::PromptId;
using prompt::PromptTemplate;
using prompt::TaskFamily;

namespace {

constexpr double kUnparseableRating = 3.0;

bool target_has(const PromptTemplate& t, std::string_view field) {
  return t.target_template.find("{" + std::string(field) + "}") != std::string::npos;
}

bool input_has(const PromptTemplate& t, std::string_view field) { return t.required_fields.count(std::string(field)) > 0; }

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

EvalReport new_report(const EvalContext& ctx, const PromptTemplate& tmpl, Setting setting) {
  EvalReport r;
  r.prompt_id = tmpl.id.str();
  r.family = std::string(prompt::family_name(tmpl.family));
  r.setting = std::string(setting_name(setting));
  r.split = std::string(data::split_name(ctx.eval_split));
  r.seen = ctx.split ? ctx.split->is_pretrain(tmpl.id) : true;
  r.checkpoint_id = ctx.checkpoint_id;
  return r;
}

void require_model(const EvalContext& ctx) {
  if (!ctx.model || !ctx.vocab || !ctx.registry) throw EvalError("evaluation context is missing model, vocab or registry");
}

std::vector<Datum> queries(const EvalContext& ctx, TaskFamily family) {
  if (!ctx.data) throw EvalError("evaluation context has no data");
  auto ds = data::make_data(*ctx.data, family, ctx.eval_split, ctx.corpus, ctx.seed);
  if (ctx.max_queries > 0 && ds.size() > ctx.max_queries) ds.resize(ctx.max_queries);
  return ds;
}

// Renders the input for a datum; nullopt when a field is missing.
std::optional<text::EncodedSequence> encode_input(const EvalContext& ctx, const PromptTemplate& tmpl,
                                                  const prompt::FieldBindings& bindings) {
  std::string input;
  try {
    input = prompt::render_text(tmpl.input_template, bindings);
  } catch (const RegistryError&) {
    return std::nullopt;
  }
  return text::encode(input, *ctx.vocab, ctx.model->config().max_len);
}

std::string target_text(const PromptTemplate& tmpl, const Datum& d) {
  return prompt::render_text(tmpl.target_template, d.bindings);
}

EvalReport score_rating(const EvalContext& ctx, const PromptTemplate& tmpl, const std::vector<Datum>& datums) {
  Stopwatch clock;
  EvalReport report = new_report(ctx, tmpl, Setting::scalar);
  const bool numeric = target_has(tmpl, "star_rating");
  std::vector<double> preds;
  std::vector<double> truths;
  std::size_t unparseable = 0;
  std::size_t on_grid = 0;
  std::size_t correct = 0;
  std::size_t skipped = 0;
  std::vector<std::string> bad_samples;
  for (const auto& d : datums) {
    const auto input = encode_input(ctx, tmpl, d.bindings);
    if (!input) {
      ++skipped;
      continue;
    }
    const auto out = decode::greedy_decode_text(*ctx.model, *input, *ctx.vocab, ctx.max_decode_len);
    if (numeric) {
      const auto value = parse_rating(out);
      if (!value) {
        ++unparseable;
        if (bad_samples.size() < 3) bad_samples.push_back(out);
      } else if (data::on_rating_grid(*value)) {
        ++on_grid;
      }
      preds.push_back(value.value_or(kUnparseableRating));
      truths.push_back(static_cast<double>(d.rating));
    } else {
      if (out == target_text(tmpl, d)) ++correct;
      preds.push_back(0.0);
    }
  }
  const std::size_t n = preds.size();
  report.counts["queries"] = n;
  report.counts["skipped"] = skipped;
  if (n == 0) throw EvalError("prompt " + tmpl.id.str() + " produced no evaluable queries");
  if (numeric) {
    if (2 * unparseable > n) {
      std::string sample;
      for (const auto& s : bad_samples) sample += " '" + s + "'";
      throw EvalError("prompt " + tmpl.id.str() + ": " + std::to_string(unparseable) + " of " + std::to_string(n) +
                      " generations are not ratings; sample:" + sample);
    }
    report.metrics["rmse"] = rmse(preds, truths);
    report.metrics["mae"] = mae(preds, truths);
    report.metrics["unparseable_rate"] = static_cast<double>(unparseable) / static_cast<double>(n);
    report.metrics["grid_rate"] = static_cast<double>(on_grid) / static_cast<double>(n);
    report.counts["unparseable"] = unparseable;
    report.counts["on_grid"] = on_grid;
  } else {
    report.metrics["accuracy"] = static_cast<double>(correct) / static_cast<double>(n);
    report.counts["correct"] = correct;
  }
  report.runtime_seconds = clock.seconds();
  return report;
}

void add_ranking_metrics(EvalReport& report, const std::vector<RankedList>& lists, std::initializer_list<int> hr_ks,
                         std::initializer_list<int> ndcg_ks) {
  for (int k : hr_ks) report.metrics["hr@" + std::to_string(k)] = hr_at_k(lists, k);
  for (int k : ndcg_ks) report.metrics["ndcg@" + std::to_string(k)] = ndcg_at_k(lists, k);
}

EvalReport score_generation(const EvalContext& ctx, const PromptTemplate& tmpl, const std::vector<Datum>& datums) {
  Stopwatch clock;
  EvalReport report = new_report(ctx, tmpl, Setting::text);
  const bool hinted = input_has(tmpl, "feature_word");
  std::vector<TextPair> pairs;
  std::size_t empty = 0;
  std::size_t skipped = 0;
  std::size_t hint_hits = 0;
  for (const auto& d : datums) {
    const auto input = encode_input(ctx, tmpl, d.bindings);
    std::string reference;
    try {
      reference = target_text(tmpl, d);
    } catch (const RegistryError&) {
      ++skipped;
      continue;
    }
    if (!input) {
      ++skipped;
      continue;
    }
    auto out = decode::greedy_decode_text(*ctx.model, *input, *ctx.vocab, ctx.max_decode_len);
    if (normalize_tokens(out).empty()) ++empty;
    if (hinted && d.feature_word) {
      const auto words = normalize_tokens(out);
      const auto hint = normalize_tokens(*d.feature_word);
      if (!hint.empty() && std::search(words.begin(), words.end(), hint.begin(), hint.end()) != words.end()) {
        ++hint_hits;
      }
    }
    pairs.push_back({std::move(out), std::move(reference)});
  }
  report.counts["queries"] = pairs.size();
  report.counts["skipped"] = skipped;
  report.counts["empty"] = empty;
  if (pairs.empty()) throw EvalError("prompt " + tmpl.id.str() + " produced no evaluable queries");
  if (empty == pairs.size()) {
    report.notes.push_back("all generations empty; BLEU undefined");
  } else {
    report.metrics["bleu4"] = bleu4(pairs);
  }
  report.metrics["rouge1"] = rouge_n(pairs, 1);
  report.metrics["rouge2"] = rouge_n(pairs, 2);
  report.metrics["rougeL"] = rouge_l(pairs);
  if (hinted) {
    report.metrics["feature_hit_rate"] = static_cast<double>(hint_hits) / static_cast<double>(pairs.size());
  }
  report.notes.push_back("bleu and rouge on the [0, 1] scale");
  report.runtime_seconds = clock.seconds();
  return report;
}

const PromptTemplate& template_in(const EvalContext& ctx, const PromptId& id, TaskFamily family) {
  const auto& tmpl = ctx.registry->at(id);
  if (tmpl.family != family) {
    throw EvalError("prompt " + id.str() + " belongs to the " + std::string(prompt::family_name(tmpl.family)) +
                    " family");
  }
  return tmpl;
}

}  // namespace

std::string_view setting_name(Setting setting) {
  switch (setting) {
    case Setting::all_item: return "all-item";
    case Setting::cand100: return "cand100";
    case Setting::scalar: return "scalar";
    case Setting::text: return "text";
  }
  return "unknown";
}

Setting parse_setting(std::string_view text) {
  if (text == "all-item") return Setting::all_item;
  if (text == "cand100") return Setting::cand100;
  if (text == "scalar") return Setting::scalar;
  if (text == "text") return Setting::text;
  throw EvalError("unknown setting '" + std::string(text) + "' (expected all-item, cand100, scalar or text)");
}

Setting default_setting(const PromptTemplate& tmpl) {
  switch (tmpl.family) {
    case TaskFamily::rating: return Setting::scalar;
    case TaskFamily::sequential: return target_has(tmpl, "next_item") ? Setting::all_item : Setting::scalar;
    case TaskFamily::direct: return Setting::cand100;
    case TaskFamily::explanation: return Setting::text;
    case TaskFamily::review: return target_has(tmpl, "star_rating") ? Setting::scalar : Setting::text;
  }
  return Setting::scalar;
}

void ExperimentSpec::validate() const {
  if (prompts.empty()) throw EvalError("experiment names no prompt");
  for (const auto& id : prompts) {
    if (id.family != static_cast<int>(family)) {
      throw EvalError("prompt " + id.str() + " does not belong to the " + std::string(prompt::family_name(family)) +
                      " family");
    }
  }
  if (setting == Setting::cand100 && family != TaskFamily::direct) {
    throw EvalError("the cand100 setting applies to the direct family only");
  }
  if (setting == Setting::all_item && family != TaskFamily::sequential) {
    throw EvalError("the all-item setting applies to the sequential family only");
  }
  if (setting == Setting::text && family != TaskFamily::explanation && family != TaskFamily::review) {
    throw EvalError("the text setting applies to explanation and review prompts");
  }
  if (beam < 1) throw EvalError("beam must be at least 1");
}

nlohmann::json EvalReport::to_json() const {
  return {{"prompt", prompt_id},   {"family", family},   {"setting", setting},
          {"split", split},        {"seen", seen},       {"metrics", metrics},
          {"counts", counts},      {"notes", notes},     {"runtime_seconds", runtime_seconds},
          {"checkpoint", checkpoint_id}};
}

std::optional<double> parse_rating(const std::string& text) {
  static const std::regex number(R"(\s*([0-9]+(\.[0-9]+)?)\s*)");
  std::smatch m;
  if (!std::regex_match(text, m, number)) return std::nullopt;
  return std::stod(m[1].str());
}

void leakage_guard(const Datum& datum, const std::vector<std::string>& sequence) {
  if (sequence.empty() || sequence.back() != datum.item_id) {
    throw EvalError("leakage guard: held-out item " + datum.item_id + " of user " + datum.user_id +
                    " is not the end of the supplied sequence");
  }
  const auto before = sequence.size() - 1;
  if (datum.history.size() > before ||
      !std::equal(datum.history.begin(), datum.history.end(),
                  sequence.begin() + static_cast<std::ptrdiff_t>(before - datum.history.size()))) {
    throw EvalError("leakage guard: history shown for user " + datum.user_id +
                    " is not the prefix preceding the held-out item");
  }
}

EvalReport eval_rating(const EvalContext& ctx, const PromptId& id) {
  require_model(ctx);
  const auto& tmpl = ctx.registry->at(id);
  return score_rating(ctx, tmpl, queries(ctx, tmpl.family));
}

// Ranks the allowed items for one query. Constrained mode decodes inside
// `trie` (built from `allowed` when null); otherwise a free beam runs over
// the vocabulary and only outputs that exactly spell an allowed item count.
std::vector<std::string> rank_items(const EvalContext& ctx, const text::EncodedSequence& input,
                                    const decode::BeamOptions& opts, const std::vector<std::string>& allowed,
                                    const decode::ItemTrie* trie, std::size_t& invalid) {
  std::vector<std::string> out;
  if (ctx.constrained) {
    std::optional<decode::ItemTrie> own;
    if (!trie) trie = &own.emplace(decode::build_item_trie(allowed, *ctx.vocab, ctx.max_decode_len));
    for (auto& r : decode::constrained_beam(*ctx.model, input, *trie, opts)) out.push_back(r.item_id);
    return out;
  }
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  const std::string prefix = "item_";
  std::set<std::string> seen;
  for (const auto& h : decode::beam_search(*ctx.model, input, opts).hypotheses) {
    const auto textual = text::decode(h.tokens, *ctx.vocab);
    const auto id = textual.starts_with(prefix) ? textual.substr(prefix.size()) : std::string();
    if (h.finished && ok.count(id)) {
      if (seen.insert(id).second) out.push_back(id);
    } else {
      ++invalid;
    }
  }
  return out;
}

void note_decoding(const EvalContext& ctx, EvalReport& report, std::size_t invalid) {
  if (ctx.constrained) {
    report.notes.push_back("constrained decoding over item ids");
  } else {
    report.setting += "+exact";
    report.counts["invalid_outputs"] = invalid;
    report.notes.push_back("unconstrained beam; outputs mapped to items by exact string match");
  }
}

EvalReport eval_sequential(const EvalContext& ctx, const PromptId& id, int beam) {
  require_model(ctx);
  Stopwatch clock;
  const auto& tmpl = template_in(ctx, id, TaskFamily::sequential);
  if (!target_has(tmpl, "next_item")) return eval_rating(ctx, id);
  constexpr int kMaxK = 10;
  if (beam < kMaxK) {
    throw EvalError("beam " + std::to_string(beam) + " is too narrow for HR@" + std::to_string(kMaxK));
  }
  const bool with_candidates = input_has(tmpl, "candidates");
  EvalReport report = new_report(ctx, tmpl, with_candidates ? Setting::scalar : Setting::all_item);
  if (with_candidates) report.setting = "candidates";

  const auto& catalog = ctx.data->item_pool;
  const auto catalog_trie = decode::build_item_trie(catalog, *ctx.vocab, ctx.max_decode_len);
  if (catalog_trie.size() != catalog.size()) throw EvalError("item trie does not match the catalog");

  std::map<std::string, std::vector<std::string>> sequences;
  for (auto& s : ctx.data->dataset.sequences()) sequences[s.user_id] = std::move(s.items);

  std::vector<RankedList> lists;
  std::size_t skipped = 0;
  std::size_t guarded = 0;
  std::size_t invalid = 0;
  const decode::BeamOptions opts{beam, ctx.max_decode_len, 0.0};
  for (const auto& d : queries(ctx, TaskFamily::sequential)) {
    if (ctx.eval_split != data::SplitTag::train) {
      auto seq = sequences.at(d.user_id);
      if (ctx.eval_split == data::SplitTag::valid) seq.pop_back();
      leakage_guard(d, seq);
      ++guarded;
    }
    const auto input = encode_input(ctx, tmpl, d.bindings);
    if (!input) {
      ++skipped;
      continue;
    }
    RankedList list{d.key, {}, d.item_id};
    list.items = with_candidates ? rank_items(ctx, *input, opts, d.candidates, nullptr, invalid)
                                 : rank_items(ctx, *input, opts, catalog, &catalog_trie, invalid);
    lists.push_back(std::move(list));
  }
  if (lists.empty()) throw EvalError("prompt " + id.str() + " produced no evaluable queries");
  add_ranking_metrics(report, lists, {1, 5, 10}, {5, 10});
  report.counts["queries"] = lists.size();
  report.counts["skipped"] = skipped;
  report.counts["leakage_checked"] = guarded;
  note_decoding(ctx, report, invalid);
  report.counts["catalog"] = catalog.size();
  report.counts["beam"] = static_cast<std::size_t>(beam);
  report.runtime_seconds = clock.seconds();
  return report;
}

EvalReport eval_direct(const EvalContext& ctx, const PromptId& id, int beam) {
  require_model(ctx);
  Stopwatch clock;
  const auto& tmpl = template_in(ctx, id, TaskFamily::direct);
  EvalReport report = new_report(ctx, tmpl, Setting::cand100);
  const bool yes_no = target_has(tmpl, "yes_no");
  const auto yes_tokens = text::encode("yes", *ctx.vocab, 8).token_ids;

  std::vector<RankedList> lists;
  std::size_t skipped = 0;
  std::size_t no_candidates = 0;
  std::size_t invalid = 0;
  std::size_t set_size = 0;
  for (const auto& d : queries(ctx, TaskFamily::direct)) {
    if (d.candidates.empty()) {
      ++skipped;
      ++no_candidates;
      continue;
    }
    data::CandidateSet set{d.item_id, {}};
    for (const auto& c : d.candidates) {
      if (c != d.item_id) set.negatives.push_back(c);
    }
    if (set.size() != d.candidates.size()) throw EvalError("candidate list of " + d.key + " repeats its positive");
    const auto it = ctx.data->interacted.find(d.user_id);
    data::validate_candidate_set(set, it == ctx.data->interacted.end() ? std::set<std::string>{} : it->second);
    set_size = std::max(set_size, set.size());

    RankedList list{d.key, {}, d.item_id};
    if (yes_no) {
      std::vector<std::pair<double, std::string>> scored;
      for (const auto& c : d.candidates) {
        auto bindings = d.bindings;
        bindings.set("item_id", c);
        const auto& title = ctx.data->dataset.item(c).title;
        if (!title.empty()) bindings.set("item_title", title);
        const auto input = encode_input(ctx, tmpl, bindings);
        if (!input) throw EvalError("prompt " + id.str() + " cannot be rendered for candidate " + c);
        const auto memory = ctx.model->encode(*input);
        scored.emplace_back(decode::sequence_log_prob(decode::model_scorer(*ctx.model, memory), yes_tokens), c);
      }
      std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      });
      for (auto& [s, c] : scored) list.items.push_back(c);
    } else {
      const int needed = static_cast<int>(std::min<std::size_t>(10, d.candidates.size()));
      if (beam < needed) throw EvalError("beam " + std::to_string(beam) + " is too narrow for HR@10");
      const auto input = encode_input(ctx, tmpl, d.bindings);
      if (!input) {
        ++skipped;
        continue;
      }
      list.items = rank_items(ctx, *input, {beam, ctx.max_decode_len, 0.0}, d.candidates, nullptr, invalid);
    }
    lists.push_back(std::move(list));
  }
  if (lists.empty() && no_candidates > 0) {
    throw EvalError("prompt " + id.str() + ": no user has " + std::to_string(ctx.corpus.direct_candidates) +
                    " candidates (catalog of " + std::to_string(ctx.data->item_pool.size()) +
                    " items minus the user's own)");
  }
  if (lists.empty()) throw EvalError("prompt " + id.str() + " produced no evaluable queries");
  add_ranking_metrics(report, lists, {1, 5, 10}, {5, 10});
  report.counts["queries"] = lists.size();
  report.counts["skipped"] = skipped;
  report.counts["candidates"] = set_size;
  if (!yes_no) note_decoding(ctx, report, invalid);
  report.runtime_seconds = clock.seconds();
  return report;
}

EvalReport eval_generation(const EvalContext& ctx, const PromptId& id) {
  require_model(ctx);
  const auto& tmpl = ctx.registry->at(id);
  if (target_has(tmpl, "star_rating")) return eval_rating(ctx, id);
  if (tmpl.family != TaskFamily::explanation && tmpl.family != TaskFamily::review) {
    throw EvalError("prompt " + id.str() + " is not a generation prompt");
  }
  return score_generation(ctx, tmpl, queries(ctx, tmpl.family));
}

EvalReport evaluate(const EvalContext& ctx, const PromptId& id, int beam) {
  require_model(ctx);
  const auto& tmpl = ctx.registry->at(id);
  switch (tmpl.family) {
    case TaskFamily::rating: return eval_rating(ctx, id);
    case TaskFamily::sequential: return eval_sequential(ctx, id, beam);
    case TaskFamily::direct: return eval_direct(ctx, id, beam);
    case TaskFamily::explanation:
    case TaskFamily::review: return eval_generation(ctx, id);
  }
  throw EvalError("unknown family for prompt " + id.str());
}

// --- pretraining ------------------------------------------------------------

nlohmann::json SystemConfig::to_json() const {
  std::vector<int> families;
  for (auto f : corpus.families) families.push_back(static_cast<int>(f));
  return {{"holdout", holdout},
          {"vocab_size", vocab_size},
          {"atomic_ids", atomic_ids},
          {"model_preset", model_preset},
          {"width_multiplier", width_multiplier},
          {"max_len", max_len},
          {"seed", seed},
          {"corpus",
           {{"sample_fraction", corpus.sample_fraction},
            {"families", families},
            {"rating_sigma", corpus.rating_sigma},
            {"rating_ratios", corpus.rating_ratios},
            {"seq_candidates", corpus.seq_candidates},
            {"direct_candidates", corpus.direct_candidates},
            {"max_history", corpus.max_history},
            {"list_separator", corpus.list_separator}}},
          {"train",
           {{"epochs", train.epochs},
            {"batch_size", train.batch_size},
            {"peak_lr", train.peak_lr},
            {"warmup_fraction", train.warmup_fraction},
            {"weight_decay", train.weight_decay},
            {"clip_norm", train.clip_norm},
            {"seed", train.seed},
            {"max_steps", train.max_steps}}}};
}

SystemConfig SystemConfig::from_json(const nlohmann::json& j) {
  SystemConfig c;
  c.holdout = j.value("holdout", c.holdout);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.atomic_ids = j.value("atomic_ids", c.atomic_ids);
  c.model_preset = j.value("model_preset", c.model_preset);
  c.width_multiplier = j.value("width_multiplier", c.width_multiplier);
  c.max_len = j.value("max_len", c.max_len);
  c.seed = j.value("seed", c.seed);
  if (j.contains("corpus")) {
    const auto& k = j.at("corpus");
    auto& o = c.corpus;
    o.sample_fraction = k.value("sample_fraction", o.sample_fraction);
    for (int f : k.value("families", std::vector<int>{})) o.families.insert(static_cast<TaskFamily>(f));
    o.rating_sigma = k.value("rating_sigma", o.rating_sigma);
    o.rating_ratios = k.value("rating_ratios", o.rating_ratios);
    o.seq_candidates = k.value("seq_candidates", o.seq_candidates);
    o.direct_candidates = k.value("direct_candidates", o.direct_candidates);
    o.max_history = k.value("max_history", o.max_history);
    o.list_separator = k.value("list_separator", o.list_separator);
  }
  if (j.contains("train")) {
    const auto& k = j.at("train");
    auto& t = c.train;
    t.epochs = k.value("epochs", t.epochs);
    t.batch_size = k.value("batch_size", t.batch_size);
    t.peak_lr = k.value("peak_lr", t.peak_lr);
    t.warmup_fraction = k.value("warmup_fraction", t.warmup_fraction);
    t.weight_decay = k.value("weight_decay", t.weight_decay);
    t.clip_norm = k.value("clip_norm", t.clip_norm);
    t.seed = k.value("seed", t.seed);
    t.max_steps = k.value("max_steps", t.max_steps);
  }
  return c;
}

text::Vocab build_vocab(const std::vector<data::TrainingPair>& pairs, const data::Dataset& dataset, int vocab_size,
                        bool atomic_ids) {
  std::vector<std::string> corpus;
  corpus.reserve(2 * pairs.size() + dataset.items().size());
  for (const auto& p : pairs) {
    corpus.push_back(p.input_text);
    corpus.push_back(p.target_text);
  }
  for (const auto& id : dataset.item_ids()) corpus.push_back(data::item_token(id));
  auto vocab = corpus.empty() ? text::Vocab::byte_level() : text::train_subword_vocab(corpus, vocab_size);
  if (atomic_ids) vocab = text::extend_with_atomic_ids(vocab, dataset.user_ids(), dataset.item_ids());
  return vocab;
}

TrainedSystem pretrain_system(const data::PreparedData& data, const prompt::Registry& registry,
                              const SystemConfig& config, const train::TrainOptions& options) {
  auto split = prompt::split_registry(registry, prompt::HoldoutPolicy::parse(config.holdout));
  auto corpus = data::build_pairs(data, registry, split, config.corpus, config.seed);
  auto vocab = build_vocab(corpus.pairs, data.dataset, config.vocab_size, config.atomic_ids);

  auto mc = model::ModelConfig::preset(config.model_preset, vocab.size());
  if (config.width_multiplier < 1) throw EvalError("width multiplier must be at least 1");
  mc.d_model *= config.width_multiplier;
  mc.d_ff *= config.width_multiplier;
  mc.max_len = config.max_len;
  mc.max_whole_words = config.max_len;
  mc.seed = derive_seed(config.seed, 0x30de1);
  mc.validate();
  model::Seq2SeqModel net(mc);

  train::TrainReport report;
  if (config.train.epochs > 0 && !corpus.pairs.empty()) {
    std::vector<train::TextPair> text_pairs;
    text_pairs.reserve(corpus.pairs.size());
    for (const auto& p : corpus.pairs) text_pairs.push_back({p.input_text, p.target_text});
    const auto examples = train::encode_pairs(text_pairs, vocab, config.max_len);
    auto opts = options;
    opts.vocab_hash = vocab.hash();
    report = train::train(examples, net, config.train, opts);
  }
  return {std::move(vocab), std::move(net), std::move(split), std::move(corpus), std::move(report)};
}

// --- transfer ----------------------------------------------------------------

std::vector<std::size_t> shared_user_reviews(const data::Dataset& source, const data::Dataset& target) {
  std::set<std::string> source_users;
  for (const auto& r : source.reviews()) source_users.insert(r.user_id);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < target.reviews().size(); ++i) {
    if (source_users.count(target.reviews()[i].user_id)) idx.push_back(i);
  }
  if (idx.empty()) throw EvalError("source and target domains share no users");
  return idx;
}

std::vector<EvalReport> transfer_item_ranking(const model::Seq2SeqModel& model, const text::Vocab& vocab,
                                              const data::Dataset& source, const data::Dataset& target,
                                              const prompt::Registry& registry, const prompt::RegistrySplit& split,
                                              const data::CorpusOptions& corpus, std::uint64_t seed,
                                              const TransferPrompts& prompts) {
  const auto idx = shared_user_reviews(source, target);
  EvalContext ctx;
  ctx.model = &model;
  ctx.vocab = &vocab;
  ctx.registry = &registry;
  ctx.split = &split;
  ctx.corpus = corpus;
  ctx.seed = seed;
  ctx.checkpoint_id = "transfer";
  const auto& pick = registry.at(prompts.pick);
  if (pick.family != TaskFamily::direct || !input_has(pick, "candidates")) {
    throw EvalError("transfer prompt " + prompts.pick.str() + " must pick from candidates");
  }
  std::set<std::string> pool_set;
  std::map<std::string, std::set<std::string>> interacted;
  for (const auto& r : target.reviews()) {
    pool_set.insert(r.item_id);
    interacted[r.user_id].insert(r.item_id);
  }
  const std::vector<std::string> pool(pool_set.begin(), pool_set.end());
  std::vector<std::pair<data::Datum, text::EncodedSequence>> picks;
  std::size_t set_size = 0;
  for (auto i : idx) {
    const auto& r = target.reviews()[i];
    const std::string key = "t" + std::to_string(i);
    data::Datum d;
    d.user_id = r.user_id;
    d.item_id = r.item_id;
    // small target catalogs shrink the list rather than drop the user
    const auto& seen = interacted[r.user_id];
    const std::size_t size = std::min(corpus.direct_candidates, pool.size() - seen.size() + 1);
    if (size < 2) continue;
    set_size = std::max(set_size, size);
    try {
      const auto set = data::make_candidate_set(r.item_id, seen, pool, size, fnv1a(key, seed + 21));
      d.candidates = set.shuffled(fnv1a(key, seed + 22));
    } catch (const DataError&) {
      continue;
    }
    std::vector<std::string> tokens;
    for (const auto& c : d.candidates) tokens.push_back(data::item_token(c));
    d.bindings.set("user_id", r.user_id);
    d.bindings.set("user_desc", target.user_description(r.user_id));
    d.bindings.set("user", "user_" + r.user_id);
    d.bindings.set_list("candidates", tokens, corpus.list_separator);
    if (auto input = encode_input(ctx, pick, d.bindings)) picks.emplace_back(std::move(d), std::move(*input));
  }
  if (picks.empty()) throw EvalError("no target review yields a candidate list for " + prompts.pick.str());
  const decode::BeamOptions opts{prompts.beam, ctx.max_decode_len, 0.0};
  std::vector<EvalReport> out;
  for (const bool constrained : {true, false}) {
    Stopwatch clock;
    ctx.constrained = constrained;
    EvalReport report = new_report(ctx, pick, Setting::cand100);
    report.split = "transfer";
    std::vector<RankedList> lists;
    std::size_t invalid = 0;
    for (const auto& [d, input] : picks) {
      lists.push_back({d.user_id + ":" + d.item_id, rank_items(ctx, input, opts, d.candidates, nullptr, invalid),
                       d.item_id});
    }
    add_ranking_metrics(report, lists, {1, 5, 10}, {5, 10});
    report.counts["queries"] = lists.size();
    report.counts["candidates"] = set_size;
    note_decoding(ctx, report, invalid);
    report.runtime_seconds = clock.seconds();
    out.push_back(std::move(report));
  }
  return out;
}

TransferResult transfer_zero_shot(const model::Seq2SeqModel& model, const text::Vocab& vocab,
                                  const data::Dataset& source, const data::Dataset& target,
                                  const prompt::Registry& registry, const prompt::RegistrySplit& split,
                                  const data::CorpusOptions& corpus, std::uint64_t seed,
                                  const TransferPrompts& prompts) {
  TransferResult result;
  result.stats = data::transfer_stats(source, target);
  if (result.stats.shared_users == 0) throw EvalError("source and target domains share no users");

  const auto idx = shared_user_reviews(source, target);
  if (vocab.has_atomic()) {
    for (auto i : idx) {
      const auto& item = target.reviews()[i].item_id;
      if (!vocab.atomic_id(data::item_token(item))) {
        throw TokenizerError("item " + item + " has no atomic token; atomic-id vocabularies cannot cover new items");
      }
    }
  }

  EvalContext ctx;
  ctx.model = &model;
  ctx.vocab = &vocab;
  ctx.registry = &registry;
  ctx.split = &split;
  ctx.corpus = corpus;
  ctx.seed = seed;
  ctx.checkpoint_id = "transfer";
  auto run = [&](const PromptId& id, bool generation) {
    const auto& tmpl = registry.at(id);
    const auto datums = data::make_review_data(target, idx, tmpl.family, data::SplitTag::test, corpus, seed);
    auto report = generation ? score_generation(ctx, tmpl, datums) : score_rating(ctx, tmpl, datums);
    report.split = "transfer";
    result.reports.push_back(std::move(report));
  };
  run(prompts.like_dislike, false);
  run(prompts.rating, false);
  run(prompts.explanation, true);

  auto items = transfer_item_ranking(model, vocab, source, target, registry, split, corpus, seed, prompts);
  std::move(items.begin(), items.end(), std::back_inserter(result.reports));
  return result;
}

// --- ablations -----------------------------------------------------------------

std::string_view ablation_name(AblationKind kind) {
  switch (kind) {
    case AblationKind::task_scaling: return "task_scaling";
    case AblationKind::prompt_scaling: return "prompt_scaling";
    case AblationKind::personalization: return "personalization";
    case AblationKind::model_size: return "model_size";
  }
  return "unknown";
}

AblationKind parse_ablation(std::string_view text) {
  if (text == "task_scaling" || text == "task-scaling") return AblationKind::task_scaling;
  if (text == "prompt_scaling" || text == "prompt-scaling") return AblationKind::prompt_scaling;
  if (text == "personalization") return AblationKind::personalization;
  if (text == "model_size" || text == "model-size") return AblationKind::model_size;
  throw EvalError("unknown ablation '" + std::string(text) + "'");
}

std::vector<std::pair<std::string, SystemConfig>> ablation_variants(AblationKind kind, const SystemConfig& base) {
  std::vector<std::pair<std::string, SystemConfig>> out;
  switch (kind) {
    case AblationKind::task_scaling: {
      out.emplace_back("multitask", base);
      for (auto f : prompt::kAllFamilies) {
        auto c = base;
        c.corpus.families = {f};
        out.emplace_back("S" + std::to_string(static_cast<int>(f)), c);
      }
      break;
    }
    case AblationKind::prompt_scaling: {
      auto c = base;
      c.holdout = "last";
      out.emplace_back("default", c);
      c.holdout = "prompt-scaling";
      out.emplace_back("PS", c);
      break;
    }
    case AblationKind::personalization: {
      auto c = base;
      c.atomic_ids = false;
      out.emplace_back("subword", c);
      c.atomic_ids = true;
      out.emplace_back("atomic", c);
      break;
    }
    case AblationKind::model_size: {
      auto c = base;
      c.width_multiplier = 1;
      out.emplace_back("width-1x", c);
      c.width_multiplier = 2;
      out.emplace_back("width-2x", c);
      break;
    }
  }
  return out;
}

AblationReport run_ablation(AblationKind kind, const SystemConfig& base, const data::PreparedData& data,
                            const prompt::Registry& registry, const std::vector<PromptId>& prompts, int beam,
                            const std::function<void(const std::string&)>& progress) {
  AblationReport report;
  report.kind = std::string(ablation_name(kind));
  for (auto& [name, config] : ablation_variants(kind, base)) {
    if (progress) progress(name);
    try {
      auto sys = pretrain_system(data, registry, config);
      VariantResult v;
      v.name = name;
      v.config = config;
      v.parameters = sys.model.trainable_parameter_count();
      v.vocab_size = sys.vocab.size();
      v.training_pairs = sys.corpus.pairs.size();
      v.final_loss = sys.train.epoch_losses.empty() ? 0.0 : sys.train.epoch_losses.back();
      EvalContext ctx;
      ctx.model = &sys.model;
      ctx.vocab = &sys.vocab;
      ctx.data = &data;
      ctx.registry = &registry;
      ctx.split = &sys.split;
      ctx.corpus = config.corpus;
      ctx.seed = config.seed;
      ctx.checkpoint_id = report.kind + "/" + name;
      for (const auto& id : prompts) v.reports.push_back(evaluate(ctx, id, beam));
      report.variants.push_back(std::move(v));
    } catch (const Error& e) {
      report.failure = name + ": " + e.what();
      break;
    }
  }
  return report;
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json variants_json = nlohmann::json::array();
  for (const auto& v : variants) {
    nlohmann::json reports_json = nlohmann::json::array();
    for (const auto& r : v.reports) reports_json.push_back(r.to_json());
    variants_json.push_back({{"name", v.name},
                             {"config", v.config.to_json()},
                             {"parameters", v.parameters},
                             {"vocab_size", v.vocab_size},
                             {"training_pairs", v.training_pairs},
                             {"final_loss", v.final_loss},
                             {"reports", reports_json}});
  }
  nlohmann::json j{{"kind", kind}, {"variants", variants_json}};
  if (failure) j["failure"] = *failure;
  return j;
}

}  // namespace p5rec::eval

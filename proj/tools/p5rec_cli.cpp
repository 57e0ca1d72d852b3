#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "p5rec/common.hpp"
#include "p5rec/data/corpus.hpp"
#include "p5rec/data/synthetic.hpp"
#include "p5rec/eval/harness.hpp"
#include "p5rec/model/checkpoint.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace p5rec;

namespace {

constexpr const char* kVersion = "0.1.0";

fs::path home_dir() {
  const char* env = std::getenv("P5REC_HOME");
  return env && *env ? fs::path(env) : fs::path("p5rec_home");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json read_json(const fs::path& path) { return json::parse(read_file(path)); }

std::string now_iso() {
  const auto t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// A dataset argument is a file path or an id printed by `ingest`.
fs::path resolve_dataset(const std::string& arg) {
  if (fs::exists(arg)) return arg;
  const auto stored = home_dir() / "datasets" / (arg + ".jsonl");
  if (fs::exists(stored)) return stored;
  throw DataError("dataset '" + arg + "' is neither a file nor an ingested dataset id");
}

const prompt::Registry& load_registry(const std::string& path, prompt::Registry& storage) {
  if (path.empty()) return prompt::default_registry();
  storage = prompt::load_registry_file(path);
  return storage;
}

std::vector<prompt::PromptId> parse_prompts(const std::vector<std::string>& args) {
  std::vector<prompt::PromptId> out;
  for (const auto& a : args) out.push_back(prompt::PromptId::parse(a));
  return out;
}

void log(const std::string& msg) { std::cerr << "[p5rec] " << msg << "\n"; }

// Options shared by every command that builds a training stream.
struct SystemFlags {
  std::string dataset;
  std::string registry;
  std::string holdout = "last";
  std::uint64_t seed = 1;
  std::vector<std::string> families;
  double fraction = 0.8;
  std::size_t max_history = 20;
  int vocab_size = 2048;
  bool atomic_ids = false;
  std::string preset = "toy";
  int width = 1;
  int max_len = 128;
  int epochs = 10;
  int batch_size = 32;
  double lr = 1e-3;
  double weight_decay = 0.01;
  std::int64_t max_steps = 0;

  void add_corpus(CLI::App* app) {
    app->add_option("--dataset", dataset, "Raw dataset file or ingested id")->required();
    app->add_option("--registry", registry, "Prompt registry file (default: built-in collection)");
    app->add_option("--holdout", holdout, "last | ids=2-13,... | pretrain=1-1,... | prompt-scaling");
    app->add_option("--seed", seed, "Seed for splits, sampling and initialization");
    app->add_option("--families", families, "Task families to include (default: all)")->delimiter(',');
    app->add_option("--fraction", fraction, "Probability of rendering each pretrain template per datum");
    app->add_option("--max-history", max_history, "Most recent items shown in sequential prompts");
  }
  void add_model(CLI::App* app) {
    app->add_option("--vocab-size", vocab_size, "Subword vocabulary size");
    app->add_flag("--atomic-ids", atomic_ids, "One token per user and item");
    app->add_option("--preset", preset, "Model preset: toy, small, base");
    app->add_option("--width", width, "Width multiplier for d_model and d_ff");
    app->add_option("--max-len", max_len, "Maximum input length in tokens");
  }
  void add_train(CLI::App* app) {
    app->add_option("--epochs", epochs);
    app->add_option("--batch-size", batch_size);
    app->add_option("--lr", lr, "Peak learning rate");
    app->add_option("--weight-decay", weight_decay);
    app->add_option("--max-steps", max_steps, "Stop after this many steps (0: use epochs)");
  }

  eval::SystemConfig config() const {
    eval::SystemConfig c;
    c.holdout = holdout;
    c.seed = seed;
    c.corpus.sample_fraction = fraction;
    c.corpus.max_history = max_history;
    for (const auto& f : families) {
      const auto fam = prompt::parse_family(f);
      if (!fam) throw Error("unknown task family '" + f + "'");
      c.corpus.families.insert(*fam);
    }
    c.vocab_size = vocab_size;
    c.atomic_ids = atomic_ids;
    c.model_preset = preset;
    c.width_multiplier = width;
    c.max_len = max_len;
    c.train.epochs = epochs;
    c.train.batch_size = batch_size;
    c.train.peak_lr = lr;
    c.train.weight_decay = weight_decay;
    c.train.max_steps = max_steps;
    c.train.seed = seed;
    return c;
  }
};

std::string config_hash(const eval::SystemConfig& cfg, const std::string& dataset_bytes,
                        const std::string& registry_text) {
  std::uint64_t h = fnv1a(cfg.to_json().dump());
  h = fnv1a(dataset_bytes, h);
  h = fnv1a(registry_text, h);
  return to_hex(h);
}

json manifest(const std::string& command, const std::string& hash, const fs::path& dataset,
              const std::string& dataset_bytes, const std::string& registry, const eval::SystemConfig& cfg) {
  return {{"command", command},
          {"config_hash", hash},
          {"dataset", fs::absolute(dataset).string()},
          {"dataset_hash", to_hex(fnv1a(dataset_bytes))},
          {"registry", registry.empty() ? "built-in" : fs::absolute(registry).string()},
          {"seed", cfg.seed},
          {"train_seed", cfg.train.seed},
          {"version", kVersion},
          {"created", now_iso()}};
}

// --- run directories --------------------------------------------------------

struct LoadedRun {
  fs::path dir;
  eval::SystemConfig config;
  json manifest;
  text::Vocab vocab;
  std::optional<model::Checkpoint> checkpoint;
  std::string checkpoint_id;
};

LoadedRun load_run(const std::string& arg) {
  fs::path p(arg);
  if (!fs::exists(p)) p = home_dir() / "runs" / arg;
  if (!fs::exists(p)) throw Error("checkpoint '" + arg + "' not found");
  LoadedRun run;
  fs::path ckpt;
  if (fs::is_directory(p)) {
    run.dir = p;
    const auto marker = p / "checkpoints" / "best";
    if (!fs::exists(marker)) throw Error("run " + p.string() + " has no trained checkpoint");
    std::ifstream in(marker);
    in >> run.checkpoint_id;
    ckpt = p / "checkpoints" / run.checkpoint_id;
  } else {
    ckpt = p;
    run.dir = p.parent_path().parent_path();
    run.checkpoint_id = p.filename().string();
  }
  run.config = eval::SystemConfig::from_json(read_json(run.dir / "config.json"));
  run.manifest = read_json(run.dir / "manifest.json");
  run.vocab = text::Vocab::load(run.dir / "vocab.txt");
  run.checkpoint = model::load_checkpoint(ckpt, run.vocab.hash());
  run.checkpoint_id = run.dir.filename().string() + "/" + run.checkpoint_id;
  return run;
}

// --- commands ---------------------------------------------------------------

int cmd_synth(const data::SyntheticSpec& spec, const std::string& rule, std::uint64_t seed, const fs::path& out) {
  auto s = spec;
  if (rule == "successor") {
    s.rule = data::PlantedRule::successor;
  } else if (rule == "sum-mod") {
    s.rule = data::PlantedRule::sum_mod;
  } else {
    throw Error("unknown rule '" + rule + "' (successor or sum-mod)");
  }
  const auto syn = data::generate_synthetic_dataset(s, seed);
  log(syn.rule_description);
  auto emit = [](const fs::path& path, data::Dataset ds) {
    ds.name = path.stem().string();
    data::write_dataset_file(path, ds);
    const auto st = data::dataset_stats(ds);
    std::cout << json{{"path", path.string()}, {"users", st.users}, {"items", st.items}, {"reviews", st.reviews}}.dump()
              << "\n";
  };
  emit(out, syn.dataset);
  // one extra file per domain so that transfer has a source and a target
  if (s.domains.size() > 1) {
    for (const auto& d : s.domains) {
      emit(out.parent_path() / (out.stem().string() + "-" + d + out.extension().string()), syn.dataset.subset_domain(d));
    }
  }
  return 0;
}

int cmd_ingest(const std::string& dataset_arg) {
  const fs::path src(dataset_arg);
  const auto bytes = read_file(src);
  std::istringstream in(bytes);
  const auto ds = data::read_dataset(in);
  const auto st = data::dataset_stats(ds);
  const auto seqs = data::split_all_sequences(ds.sequences());
  const std::string id = ds.name + "-" + to_hex(fnv1a(bytes)).substr(0, 8);
  const auto dir = home_dir() / "datasets";
  fs::create_directories(dir);
  fs::copy_file(src, dir / (id + ".jsonl"), fs::copy_options::overwrite_existing);
  std::set<std::string> domains;
  for (const auto& i : ds.items()) domains.insert(i.domain);
  const json stats{{"id", id},
                   {"users", st.users},
                   {"items", st.items},
                   {"reviews", st.reviews},
                   {"sparsity_percent", st.sparsity_percent},
                   {"sequences", seqs.users.size()},
                   {"short_sequences_skipped", seqs.skipped_users.size()},
                   {"domains", domains}};
  write_json(dir / (id + ".stats.json"), stats);
  std::cout << stats.dump() << "\n";
  return 0;
}

int cmd_build_corpus(const SystemFlags& f, const fs::path& out) {
  const auto cfg = f.config();
  const auto path = resolve_dataset(f.dataset);
  prompt::Registry storage;
  const auto& reg = load_registry(f.registry, storage);
  const auto prepared = data::prepare_data(data::read_dataset_file(path), cfg.corpus, cfg.seed);
  for (const auto& w : prepared.rating.warnings) log("warning: " + w);
  const auto split = prompt::split_registry(reg, prompt::HoldoutPolicy::parse(cfg.holdout));
  auto report = data::build_pairs(prepared, reg, split, cfg.corpus, cfg.seed);
  data::canonical_order(report.pairs);
  data::write_pairs_file(out, report.pairs);
  json j{{"pairs", report.pairs.size()},
         {"rendered_per_prompt", report.rendered_per_prompt},
         {"skipped_per_prompt", report.skipped_per_prompt},
         {"out", out.string()}};
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_train_vocab(const SystemFlags& f, const std::string& pairs_file, const fs::path& out) {
  const auto cfg = f.config();
  const auto ds = data::read_dataset_file(resolve_dataset(f.dataset));
  std::vector<data::TrainingPair> pairs;
  if (!pairs_file.empty()) {
    pairs = data::read_pairs_file(pairs_file);
  } else {
    prompt::Registry storage;
    const auto& reg = load_registry(f.registry, storage);
    const auto prepared = data::prepare_data(ds, cfg.corpus, cfg.seed);
    const auto split = prompt::split_registry(reg, prompt::HoldoutPolicy::parse(cfg.holdout));
    pairs = data::build_pairs(prepared, reg, split, cfg.corpus, cfg.seed).pairs;
  }
  const auto vocab = eval::build_vocab(pairs, ds, cfg.vocab_size, cfg.atomic_ids);
  vocab.save(out);
  std::cout << json{{"size", vocab.size()}, {"merges", vocab.merges().size()}, {"hash", to_hex(vocab.hash())},
                    {"out", out.string()}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_pretrain(const SystemFlags& f) {
  const auto cfg = f.config();
  const auto path = resolve_dataset(f.dataset);
  const auto bytes = read_file(path);
  prompt::Registry storage;
  const auto& reg = load_registry(f.registry, storage);
  const std::string registry_text = f.registry.empty() ? std::string(prompt::default_registry_text())
                                                       : read_file(f.registry);
  const auto hash = config_hash(cfg, bytes, registry_text);
  const auto dir = home_dir() / "runs" / hash;
  fs::create_directories(dir);
  write_json(dir / "config.json", cfg.to_json());
  write_json(dir / "manifest.json", manifest("pretrain", hash, path, bytes, f.registry, cfg));
  if (!f.registry.empty()) fs::copy_file(f.registry, dir / "registry.ini", fs::copy_options::overwrite_existing);

  std::istringstream in(bytes);
  const auto prepared = data::prepare_data(data::read_dataset(in), cfg.corpus, cfg.seed);
  for (const auto& w : prepared.rating.warnings) log("warning: " + w);
  train::TrainOptions opts;
  opts.checkpoint_dir = dir / "checkpoints";
  std::size_t steps = 0;
  opts.on_step = [&](const train::StepRecord&) { ++steps; };
  opts.on_epoch = [&](int e) { log("epoch " + std::to_string(e + 1) + " done (" + std::to_string(steps) + " steps)"); };
  log("run directory " + dir.string());
  const auto sys = eval::pretrain_system(prepared, reg, cfg, opts);
  sys.vocab.save(dir / "vocab.txt");
  data::write_pairs_file(dir / "pairs.jsonl", sys.corpus.pairs);
  if (sys.train.steps.empty()) {
    fs::create_directories(dir / "checkpoints");
    model::save_checkpoint(dir / "checkpoints" / "step-0.ckpt", sys.model, sys.vocab.hash(), 0);
    std::ofstream(dir / "checkpoints" / "best") << "step-0.ckpt\n";
    std::ofstream(dir / "checkpoints" / "latest") << "step-0.ckpt\n";
  }
  json summary{{"run", dir.string()},
               {"config_hash", hash},
               {"pairs", sys.corpus.pairs.size()},
               {"vocab_size", sys.vocab.size()},
               {"parameters", sys.model.trainable_parameter_count()},
               {"steps", sys.train.steps.size()},
               {"epoch_losses", sys.train.epoch_losses},
               {"wall_seconds", sys.train.wall_seconds}};
  write_json(dir / "train_summary.json", summary);
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& dataset_arg, const std::vector<std::string>& prompts,
                 const std::string& setting, int beam, std::optional<std::uint64_t> seed, const std::string& split_name,
                 std::size_t max_queries, bool unconstrained, const std::string& out) {
  auto run = load_run(checkpoint);
  const auto path = dataset_arg.empty() ? fs::path(run.manifest.at("dataset").get<std::string>())
                                        : resolve_dataset(dataset_arg);
  prompt::Registry storage;
  const auto& reg = load_registry(fs::exists(run.dir / "registry.ini") ? (run.dir / "registry.ini").string() : "",
                                  storage);
  const auto ids = parse_prompts(prompts);
  if (ids.empty()) throw EvalError("evaluate needs at least one --prompt");
  if (!setting.empty()) {
    eval::ExperimentSpec spec;
    spec.family = reg.at(ids.front()).family;
    spec.prompts = ids;
    spec.setting = eval::parse_setting(setting);
    spec.beam = beam;
    spec.validate();
  }
  const auto prepared = data::prepare_data(data::read_dataset_file(path), run.config.corpus, run.config.seed);
  const auto split = prompt::split_registry(reg, prompt::HoldoutPolicy::parse(run.config.holdout));
  eval::EvalContext ctx;
  ctx.model = &run.checkpoint->model;
  ctx.vocab = &run.vocab;
  ctx.data = &prepared;
  ctx.registry = &reg;
  ctx.split = &split;
  ctx.corpus = run.config.corpus;
  ctx.seed = seed.value_or(run.config.seed);
  ctx.checkpoint_id = run.checkpoint_id;
  ctx.max_queries = max_queries;
  ctx.constrained = !unconstrained;
  if (split_name == "valid") {
    ctx.eval_split = data::SplitTag::valid;
  } else if (split_name != "test") {
    throw EvalError("--split must be test or valid");
  }
  json all = json::array();
  for (const auto& id : ids) {
    auto report = eval::evaluate(ctx, id, beam);
    const auto j = report.to_json();
    write_json(run.dir / "eval" / (id.str() + "-" + split_name + (unconstrained ? "-exact" : "") + ".json"), j);
    all.push_back(j);
    std::cout << j.dump() << "\n";
  }
  if (!out.empty()) write_json(out, all);
  return 0;
}

int cmd_transfer(const std::string& checkpoint, const std::string& source_arg, const std::string& target_arg,
                 const std::string& out) {
  auto run = load_run(checkpoint);
  const auto source_path = source_arg.empty() ? fs::path(run.manifest.at("dataset").get<std::string>())
                                              : resolve_dataset(source_arg);
  const auto source = data::read_dataset_file(source_path);
  const auto target = data::read_dataset_file(resolve_dataset(target_arg));
  prompt::Registry storage;
  const auto& reg = load_registry(fs::exists(run.dir / "registry.ini") ? (run.dir / "registry.ini").string() : "",
                                  storage);
  const auto split = prompt::split_registry(reg, prompt::HoldoutPolicy::parse(run.config.holdout));
  const auto result = eval::transfer_zero_shot(run.checkpoint->model, run.vocab, source, target, reg, split,
                                               run.config.corpus, run.config.seed);
  json reports = json::array();
  for (const auto& r : result.reports) reports.push_back(r.to_json());
  json j{{"source", source.name},
         {"target", target.name},
         {"shared_users", result.stats.shared_users},
         {"target_items", result.stats.target_items},
         {"target_reviews", result.stats.target_reviews},
         {"reports", reports}};
  write_json(out.empty() ? run.dir / "eval" / ("transfer-" + target.name + ".json") : fs::path(out), j);
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_ablate(const SystemFlags& f, const std::string& kind, const std::vector<std::string>& prompts, int beam,
               const std::string& out) {
  const auto cfg = f.config();
  const auto path = resolve_dataset(f.dataset);
  const auto bytes = read_file(path);
  prompt::Registry storage;
  const auto& reg = load_registry(f.registry, storage);
  std::istringstream in(bytes);
  const auto prepared = data::prepare_data(data::read_dataset(in), cfg.corpus, cfg.seed);
  const auto ablation = eval::parse_ablation(kind);
  const auto report = eval::run_ablation(ablation, cfg, prepared, reg, parse_prompts(prompts), beam,
                                         [](const std::string& v) { log("training variant " + v); });
  const auto hash = config_hash(cfg, bytes, kind);
  const fs::path dest = out.empty() ? home_dir() / "ablations" / (kind + "-" + hash + ".json") : fs::path(out);
  json j = report.to_json();
  j["manifest"] = manifest("ablate", hash, path, bytes, f.registry, cfg);
  write_json(dest, j);
  std::cout << dest.string() << "\n";
  if (report.failure) {
    log("ablation stopped: " + *report.failure);
    return 1;
  }
  return 0;
}

std::string metric_cell(const json& metrics) {
  std::ostringstream s;
  bool first = true;
  for (const auto& [k, v] : metrics.items()) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%s=%.4f", first ? "" : " ", k.c_str(), v.get<double>());
    s << buf;
    first = false;
  }
  return s.str();
}

int cmd_report(const std::string& checkpoint) {
  fs::path dir(checkpoint);
  if (!fs::exists(dir)) dir = home_dir() / "runs" / checkpoint;
  if (!fs::is_directory(dir / "eval")) throw Error("no evaluations under " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir / "eval")) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::cout << "| prompt | family | setting | split | seen | metrics |\n|---|---|---|---|---|---|\n";
  auto row = [](const json& r) {
    std::cout << "| " << r.at("prompt").get<std::string>() << " | " << r.at("family").get<std::string>() << " | "
              << r.at("setting").get<std::string>() << " | " << r.at("split").get<std::string>() << " | "
              << (r.at("seen").get<bool>() ? "yes" : "no") << " | " << metric_cell(r.at("metrics")) << " |\n";
  };
  for (const auto& f : files) {
    const auto j = read_json(f);
    if (j.contains("reports")) {
      for (const auto& r : j.at("reports")) row(r);
    } else {
      row(j);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompt-based multitask recommendation: data, pretraining and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  data::SyntheticSpec spec;
  std::string rule = "successor";
  std::uint64_t synth_seed = 1;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a planted-rule synthetic dataset");
  synth->add_option("--users", spec.users);
  synth->add_option("--items", spec.items, "Items per domain");
  synth->add_option("--min-len", spec.min_len);
  synth->add_option("--max-len", spec.max_len);
  synth->add_option("--groups", spec.groups);
  synth->add_option("--rule", rule, "successor | sum-mod");
  synth->add_option("--domains", spec.domains)->delimiter(',');
  synth->add_option("--seed", synth_seed);
  synth->add_option("--out", synth_out)->required();

  std::string ingest_path;
  auto* ingest = app.add_subcommand("ingest", "Validate a raw dataset and store it under the home directory");
  ingest->add_option("--dataset", ingest_path)->required()->check(CLI::ExistingFile);

  SystemFlags corpus_flags;
  std::string corpus_out;
  auto* build = app.add_subcommand("build-corpus", "Render the training stream as JSON lines");
  corpus_flags.add_corpus(build);
  build->add_option("--out", corpus_out)->required();

  SystemFlags vocab_flags;
  std::string vocab_pairs;
  std::string vocab_out;
  auto* vocab = app.add_subcommand("train-vocab", "Train the subword vocabulary");
  vocab_flags.add_corpus(vocab);
  vocab_flags.add_model(vocab);
  vocab->add_option("--pairs", vocab_pairs, "Training pairs from build-corpus (default: render them)");
  vocab->add_option("--out", vocab_out)->required();

  SystemFlags pre_flags;
  auto* pretrain = app.add_subcommand("pretrain", "Build corpus and vocabulary, then train a model");
  pre_flags.add_corpus(pretrain);
  pre_flags.add_model(pretrain);
  pre_flags.add_train(pretrain);

  std::string eval_ckpt;
  std::string eval_dataset;
  std::vector<std::string> eval_prompts;
  std::string eval_setting;
  int eval_beam = 20;
  std::optional<std::uint64_t> eval_seed;
  std::string eval_split = "test";
  std::size_t eval_max = 0;
  bool eval_free = false;
  std::string eval_out;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a trained run on one or more prompts");
  evaluate->add_option("--checkpoint", eval_ckpt, "Run directory, run hash or checkpoint file")->required();
  evaluate->add_option("--dataset", eval_dataset, "Defaults to the run's dataset");
  evaluate->add_option("--prompt", eval_prompts, "Prompt ids, e.g. 2-3,2-13")->required()->delimiter(',');
  evaluate->add_option("--setting", eval_setting, "all-item | cand100 | scalar | text (checked against the prompts)");
  evaluate->add_option("--beam", eval_beam);
  evaluate->add_option("--seed", eval_seed, "Seed for candidate sampling (default: the run's seed)");
  evaluate->add_option("--split", eval_split, "test | valid");
  evaluate->add_option("--max-queries", eval_max, "Evaluate at most this many queries (0: all)");
  evaluate->add_flag("--unconstrained", eval_free, "Free beam search with exact-match item mapping");
  evaluate->add_option("--out", eval_out, "Also write all reports to this file");

  std::string tr_ckpt;
  std::string tr_source;
  std::string tr_target;
  std::string tr_out;
  auto* transfer = app.add_subcommand("transfer", "Zero-shot evaluation on another domain's shared users");
  transfer->add_option("--checkpoint", tr_ckpt)->required();
  transfer->add_option("--dataset", tr_source, "Source-domain dataset (default: the run's dataset)");
  transfer->add_option("--target", tr_target, "Target-domain dataset")->required();
  transfer->add_option("--out", tr_out);

  SystemFlags abl_flags;
  std::string abl_kind;
  std::vector<std::string> abl_prompts;
  int abl_beam = 20;
  std::string abl_out;
  auto* ablate = app.add_subcommand("ablate", "Train and compare the variants of one ablation");
  abl_flags.add_corpus(ablate);
  abl_flags.add_model(ablate);
  abl_flags.add_train(ablate);
  ablate->add_option("--kind", abl_kind, "task_scaling | prompt_scaling | personalization | model_size")->required();
  ablate->add_option("--prompt", abl_prompts, "Prompts evaluated for every variant")->delimiter(',');
  ablate->add_option("--beam", abl_beam);
  ablate->add_option("--out", abl_out);

  std::string rep_ckpt;
  auto* report = app.add_subcommand("report", "Tabulate the evaluations stored in a run directory");
  report->add_option("--checkpoint", rep_ckpt, "Run directory or hash")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return cmd_synth(spec, rule, synth_seed, synth_out);
    if (*ingest) return cmd_ingest(ingest_path);
    if (*build) return cmd_build_corpus(corpus_flags, corpus_out);
    if (*vocab) return cmd_train_vocab(vocab_flags, vocab_pairs, vocab_out);
    if (*pretrain) return cmd_pretrain(pre_flags);
    if (*evaluate) {
      return cmd_evaluate(eval_ckpt, eval_dataset, eval_prompts, eval_setting, eval_beam, eval_seed, eval_split,
                          eval_max, eval_free, eval_out);
    }
    if (*transfer) return cmd_transfer(tr_ckpt, tr_source, tr_target, tr_out);
    if (*ablate) return cmd_ablate(abl_flags, abl_kind, abl_prompts, abl_beam, abl_out);
    if (*report) return cmd_report(rep_ckpt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
